//! Spherical harmonic machinery used as the exactness oracle: transforms,
//! Wigner rotations, random bandlimited signals and the axisymmetric
//! convolution computed as a product in harmonic space.
//!
//! Conventions: orthonormal `Y_lm` with the Condon-Shortley phase, rotations
//! in the zyz Euler convention acting on signals by `(Qf)(w) = f(Q^{-1} w)`.
//! With these, `(Qf)_lm = sum_m' e^{-i m alpha} d^l_{m m'}(beta) e^{-i m' gamma} f_lm'`.

pub mod legendre;
pub mod sht;
pub mod wigner;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DiscoError, Result};
use crate::grid::{Bandlimit, Coord, SampleGrid};
use crate::signal::SphericalSignal;

pub use sht::ShtPlan;
pub use wigner::{wigner_d_matrix, WignerRecursion};

/// Coefficients `f_lm` for `0 <= l < L`, `|m| <= l`, stored at `l^2 + l + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoeffs {
    l: Bandlimit,
    data: Vec<Complex64>,
}

impl HarmonicCoeffs {
    pub fn zeros(l: Bandlimit) -> Self {
        let n = l.as_usize();
        Self {
            l,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn from_vec(l: Bandlimit, data: Vec<Complex64>) -> Result<Self> {
        let n = l.as_usize();
        if data.len() != n * n {
            return Err(DiscoError::ShapeMismatch(format!(
                "{} coefficients for L={l}, expected {}",
                data.len(),
                n * n
            )));
        }
        Ok(Self { l, data })
    }

    #[inline]
    pub fn index(l: usize, m: i64) -> usize {
        ((l * l + l) as i64 + m) as usize
    }

    pub fn bandlimit(&self) -> Bandlimit {
        self.l
    }

    #[inline]
    pub fn get(&self, l: usize, m: i64) -> Complex64 {
        self.data[Self::index(l, m)]
    }

    #[inline]
    pub fn set(&mut self, l: usize, m: i64, v: Complex64) {
        self.data[Self::index(l, m)] = v;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest violation of `f_{l,-m} = (-1)^m conj(f_lm)`.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for l in 0..self.l.as_usize() {
            for m in 1..=l as i64 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let d = self.get(l, -m) - self.get(l, m).conj() * sign;
                worst = worst.max(d.norm());
            }
            worst = worst.max(self.get(l, 0).im.abs());
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `sum_lm f_lm Y_lm(c)` at an arbitrary point.
    pub fn evaluate(&self, c: Coord) -> Complex64 {
        let n = self.l.as_usize();
        let lam = legendre::lambda_table(n, c.theta);
        let mut acc = Complex64::new(0.0, 0.0);
        for l in 0..n {
            for m in -(l as i64)..=l as i64 {
                let ma = m.unsigned_abs() as usize;
                let sign = if m < 0 && ma % 2 == 1 { -1.0 } else { 1.0 };
                let y = Complex64::from_polar(sign * lam[legendre::tri_index(l, ma)], m as f64 * c.phi);
                acc += self.get(l, m) * y;
            }
        }
        acc
    }
}

/// A rotation `Z(alpha) Y(beta) Z(gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerZYZ {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerZYZ {
    pub const IDENTITY: EulerZYZ = EulerZYZ {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn inverse(&self) -> Self {
        Self::new(-self.gamma, -self.beta, -self.alpha)
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let z = |a: f64| {
            let (s, c) = a.sin_cos();
            [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
        };
        let (sb, cb) = self.beta.sin_cos();
        let y = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
        mat_mul(&mat_mul(&z(self.alpha), &y), &z(self.gamma))
    }

    pub fn rotate_point(&self, c: Coord) -> Coord {
        let m = self.matrix();
        let v = c.to_unit();
        Coord::from_unit([
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ])
    }

    pub fn inverse_rotate_point(&self, c: Coord) -> Coord {
        self.inverse().rotate_point(c)
    }
}

impl From<crate::grid::RotationZY> for EulerZYZ {
    fn from(r: crate::grid::RotationZY) -> Self {
        Self::new(r.alpha, r.beta, 0.0)
    }
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Forward transform of a single-channel signal.
pub fn sht_forward(signal: &SphericalSignal, grid: &SampleGrid) -> Result<HarmonicCoeffs> {
    check_single_channel(signal, grid)?;
    ShtPlan::for_grid(grid).forward(signal.data())
}

/// Inverse transform onto `grid` as a real single-channel signal.
pub fn sht_inverse(flm: &HarmonicCoeffs, grid: &SampleGrid) -> Result<SphericalSignal> {
    let data = ShtPlan::for_grid(grid).inverse(flm)?;
    SphericalSignal::new(grid.bandlimit(), 1, data)
}

fn check_single_channel(signal: &SphericalSignal, grid: &SampleGrid) -> Result<()> {
    if signal.bandlimit() != grid.bandlimit() {
        return Err(DiscoError::ResolutionMismatch {
            expected: grid.bandlimit().get(),
            actual: signal.bandlimit().get(),
        });
    }
    if signal.channels() != 1 {
        return Err(DiscoError::ShapeMismatch(format!(
            "expected a single-channel signal, got {} channels",
            signal.channels()
        )));
    }
    Ok(())
}

/// Rotates several coefficient sets by the same rotation, sharing one Wigner
/// recursion across them.
pub fn rotate_harmonic_many(sets: &[&HarmonicCoeffs], r: EulerZYZ) -> Vec<HarmonicCoeffs> {
    let Some(first) = sets.first() else {
        return Vec::new();
    };
    let l = first.bandlimit();
    let n = l.as_usize();
    let mut out: Vec<HarmonicCoeffs> = sets.iter().map(|s| HarmonicCoeffs::zeros(s.bandlimit())).collect();
    let mut rec = WignerRecursion::new(r.beta, n.saturating_sub(1));
    let mut tmp = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
    for deg in 0..n {
        if deg > 0 {
            rec.advance();
        }
        let li = deg as i64;
        for (src, dst) in sets.iter().zip(out.iter_mut()) {
            for (k, mp) in (-li..=li).enumerate() {
                tmp[k] = src.get(deg, mp) * Complex64::from_polar(1.0, -(mp as f64) * r.gamma);
            }
            for m in -li..=li {
                let row = rec.row(m);
                let mut acc = Complex64::new(0.0, 0.0);
                for (d, v) in row.iter().zip(&tmp[..row.len()]) {
                    acc += v * *d;
                }
                dst.set(deg, m, acc * Complex64::from_polar(1.0, -(m as f64) * r.alpha));
            }
        }
    }
    out
}

/// `(Qf)_lm = sum_m' D^l_{m m'}(R) f_lm'`.
pub fn rotate_harmonic(flm: &HarmonicCoeffs, r: EulerZYZ) -> HarmonicCoeffs {
    rotate_harmonic_many(&[flm], r).pop().expect("one input, one output")
}

/// Standard-normal harmonic coefficients with conjugate symmetry, so the
/// signal they describe is real.
pub fn random_bandlimited_coeffs(l: Bandlimit, seed: u64) -> HarmonicCoeffs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = HarmonicCoeffs::zeros(l);
    for deg in 0..l.as_usize() {
        let re: f64 = StandardNormal.sample(&mut rng);
        out.set(deg, 0, Complex64::new(re, 0.0));
        for m in 1..=deg as i64 {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let c = Complex64::new(re, im);
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            out.set(deg, m, c);
            out.set(deg, -m, c.conj() * sign);
        }
    }
    out
}

/// A real bandlimited signal with random harmonic content, sampled on the grid.
pub fn random_bandlimited(l: Bandlimit, seed: u64) -> SphericalSignal {
    let flm = random_bandlimited_coeffs(l, seed);
    let data = ShtPlan::new(l).inverse(&flm).expect("plan matches bandlimit");
    SphericalSignal::new(l, 1, data).expect("shape matches grid")
}

/// Axisymmetric convolution as a per-degree product,
/// `out_lm = f_lm sqrt(4pi / (2l + 1)) psi_l`.
pub fn harmonic_axisym_conv(flm: &HarmonicCoeffs, psi_l: &[f64]) -> Result<HarmonicCoeffs> {
    let n = flm.bandlimit().as_usize();
    if psi_l.len() != n {
        return Err(DiscoError::ShapeMismatch(format!(
            "{} filter degrees for L={n}",
            psi_l.len()
        )));
    }
    let mut out = flm.clone();
    for (deg, &p) in psi_l.iter().enumerate() {
        let scale = (4.0 * PI / (2 * deg + 1) as f64).sqrt() * p;
        for m in -(deg as i64)..=deg as i64 {
            out.set(deg, m, flm.get(deg, m) * scale);
        }
    }
    Ok(out)
}
