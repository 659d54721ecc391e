//! Exact spherical harmonic transforms on the equiangular grid.
//!
//! The inverse transform is a direct Legendre sum per ring followed by an FFT
//! along each ring. The forward transform cannot use the grid's ring
//! quadrature directly: its `L + 1` rings only integrate polynomials in
//! `cos(theta)` up to degree `L`, while `f * conj(Y_lm)` reaches degree
//! `2L - 2`. Instead, for each order `m` the ring values are extended to a
//! `2pi`-periodic function of colatitude (reflection with parity `(-1)^m`),
//! which is a trigonometric polynomial of degree below `L` and is therefore
//! recovered exactly from its `2L` samples. That interpolant is evaluated at
//! `L` Gauss-Legendre colatitudes where the Legendre projection is exact.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::legendre::{gauss_legendre, lambda_table_into, tri_index, tri_len};
use super::HarmonicCoeffs;
use crate::error::{DiscoError, Result};
use crate::grid::{Bandlimit, SampleGrid};

/// Precomputed tables for forward and inverse transforms at one bandlimit.
pub struct ShtPlan {
    l: Bandlimit,
    /// `lambda_lm(theta_t)` per grid ring, triangular in `(l, m)`.
    ring_lambda: Vec<f64>,
    /// `lambda_lm` at the Gauss-Legendre colatitudes.
    gl_lambda: Vec<f64>,
    gl_weights: Vec<f64>,
    /// `e^{i k theta_g}` for `k = -(L-1)..=L-1`, row per GL node.
    gl_phase: Vec<Complex64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ShtPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShtPlan").field("l", &self.l).finish_non_exhaustive()
    }
}

impl ShtPlan {
    pub fn new(l: Bandlimit) -> Self {
        let n = l.as_usize();
        let tl = tri_len(n);
        let mut ring_lambda = vec![0.0; (n + 1) * tl];
        for t in 0..=n {
            let theta = PI * t as f64 / n as f64;
            lambda_table_into(n, theta, &mut ring_lambda[t * tl..(t + 1) * tl]);
        }
        let (xs, ws) = gauss_legendre(n);
        let mut gl_lambda = vec![0.0; n * tl];
        let nk = 2 * n - 1;
        let mut gl_phase = vec![Complex64::new(0.0, 0.0); n * nk];
        for (g, &x) in xs.iter().enumerate() {
            let theta = x.clamp(-1.0, 1.0).acos();
            lambda_table_into(n, theta, &mut gl_lambda[g * tl..(g + 1) * tl]);
            for (ki, k) in (-(n as i64 - 1)..n as i64).enumerate() {
                gl_phase[g * nk + ki] = Complex64::from_polar(1.0, k as f64 * theta);
            }
        }
        let mut planner = FftPlanner::new();
        Self {
            l,
            ring_lambda,
            gl_lambda,
            gl_weights: ws,
            gl_phase,
            fft_fwd: planner.plan_fft_forward(2 * n),
            fft_inv: planner.plan_fft_inverse(2 * n),
        }
    }

    pub fn for_grid(grid: &SampleGrid) -> Self {
        Self::new(grid.bandlimit())
    }

    pub fn bandlimit(&self) -> Bandlimit {
        self.l
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.l.n_samples() {
            return Err(DiscoError::ShapeMismatch(format!(
                "signal has {len} samples, grid L={} has {}",
                self.l,
                self.l.n_samples()
            )));
        }
        Ok(())
    }

    fn check_coeffs(&self, flm: &HarmonicCoeffs) -> Result<()> {
        if flm.bandlimit() != self.l {
            return Err(DiscoError::ResolutionMismatch {
                expected: self.l.get(),
                actual: flm.bandlimit().get(),
            });
        }
        Ok(())
    }

    /// Harmonic coefficients of a real single-channel signal laid out `[t][p]`.
    pub fn forward(&self, f: &[f64]) -> Result<HarmonicCoeffs> {
        self.check_len(f.len())?;
        let cf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_complex_unchecked(&cf)
    }

    pub fn forward_complex(&self, f: &[Complex64]) -> Result<HarmonicCoeffs> {
        self.check_len(f.len())?;
        self.forward_complex_unchecked(f)
    }

    fn forward_complex_unchecked(&self, f: &[Complex64]) -> Result<HarmonicCoeffs> {
        let n = self.l.as_usize();
        let n_lon = 2 * n;
        let nk = 2 * n - 1;
        let tl = tri_len(n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft_fwd.get_inplace_scratch_len()];

        // Azimuthal DFT of each ring: ring_modes[t][k] = (1/2L) sum_p f e^{-i k phi_p}.
        let mut ring_modes = f.to_vec();
        let inv = 1.0 / n_lon as f64;
        for ring in ring_modes.chunks_mut(n_lon) {
            self.fft_fwd.process_with_scratch(ring, &mut scratch);
            ring.iter_mut().for_each(|v| *v *= inv);
        }

        let mut out = HarmonicCoeffs::zeros(self.l);
        let mut ext = vec![Complex64::new(0.0, 0.0); n_lon];
        let mut gl_vals = vec![Complex64::new(0.0, 0.0); n];
        for m in -(n as i64 - 1)..n as i64 {
            let bin = m.rem_euclid(n_lon as i64) as usize;
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            for (s, e) in ext.iter_mut().enumerate() {
                *e = if s <= n {
                    ring_modes[s * n_lon + bin]
                } else {
                    ring_modes[(n_lon - s) * n_lon + bin] * sign
                };
            }
            // Trigonometric interpolant in colatitude.
            self.fft_fwd.process_with_scratch(&mut ext, &mut scratch);
            for (g, val) in gl_vals.iter_mut().enumerate() {
                let phase = &self.gl_phase[g * nk..(g + 1) * nk];
                let mut acc = Complex64::new(0.0, 0.0);
                for (ki, k) in (-(n as i64 - 1)..n as i64).enumerate() {
                    acc += ext[k.rem_euclid(n_lon as i64) as usize] * phase[ki];
                }
                *val = acc * inv;
            }
            let ma = m.unsigned_abs() as usize;
            for l in ma..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for (g, val) in gl_vals.iter().enumerate() {
                    acc += val * (self.gl_weights[g] * self.gl_lambda[g * tl + tri_index(l, ma)]);
                }
                out.set(l, m, acc * (2.0 * PI * sign_for(m)));
            }
        }
        Ok(out)
    }

    /// Complex samples of `sum_lm f_lm Y_lm` on the grid.
    pub fn inverse_complex(&self, flm: &HarmonicCoeffs) -> Result<Vec<Complex64>> {
        self.check_coeffs(flm)?;
        let n = self.l.as_usize();
        let n_lon = 2 * n;
        let tl = tri_len(n);
        let mut out = vec![Complex64::new(0.0, 0.0); (n + 1) * n_lon];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft_inv.get_inplace_scratch_len()];
        for (t, ring) in out.chunks_mut(n_lon).enumerate() {
            let lam = &self.ring_lambda[t * tl..(t + 1) * tl];
            for m in -(n as i64 - 1)..n as i64 {
                let ma = m.unsigned_abs() as usize;
                let mut acc = Complex64::new(0.0, 0.0);
                for l in ma..n {
                    acc += flm.get(l, m) * lam[tri_index(l, ma)];
                }
                ring[m.rem_euclid(n_lon as i64) as usize] = acc * sign_for(m);
            }
            self.fft_inv.process_with_scratch(ring, &mut scratch);
        }
        Ok(out)
    }

    /// Real part of [`ShtPlan::inverse_complex`]; exact for conjugate-symmetric input.
    pub fn inverse(&self, flm: &HarmonicCoeffs) -> Result<Vec<f64>> {
        Ok(self.inverse_complex(flm)?.into_iter().map(|c| c.re).collect())
    }
}

/// `(-1)^m` for negative orders, 1 otherwise.
#[inline]
fn sign_for(m: i64) -> f64 {
    if m < 0 && m % 2 != 0 {
        -1.0
    } else {
        1.0
    }
}
