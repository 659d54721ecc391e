//! Equiangular sampling of the sphere, ring quadrature and point rotations.
//!
//! Samples sit at `(theta_t, phi_p) = (pi t / L, pi p / L)` for `t = 0..=L`
//! and `p = 0..2L`, so both poles are present as full rings of coincident
//! samples. Each ring carries one quadrature weight; the per-sample weight is
//! that ring weight times the longitude spacing `pi / L`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{DiscoError, Result};

/// Slack used whenever an angular distance is compared against a filter
/// cutoff. Kernel construction, filter evaluation and the cost model all use
/// the same predicate so their supports agree.
pub const SUPPORT_EPS: f64 = 1e-12;

/// Spherical harmonic bandlimit; doubles as the grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bandlimit(u32);

impl Bandlimit {
    pub fn new(l: u32) -> Result<Self> {
        if l == 0 {
            return Err(DiscoError::InvalidBandlimit(l));
        }
        Ok(Self(l))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_usize(self) -> usize {
        self.0 as usize
    }

    /// Number of colatitude rings, `L + 1`.
    pub fn n_rings(self) -> usize {
        self.0 as usize + 1
    }

    /// Number of longitudes per ring, `2L`.
    pub fn n_lon(self) -> usize {
        2 * self.0 as usize
    }

    /// Total number of samples, `2L(L + 1)`.
    pub fn n_samples(self) -> usize {
        self.n_rings() * self.n_lon()
    }
}

impl std::fmt::Display for Bandlimit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point on the unit sphere in colatitude/longitude form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub theta: f64,
    pub phi: f64,
}

impl Coord {
    pub const NORTH: Coord = Coord { theta: 0.0, phi: 0.0 };

    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn to_unit(self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Inverse of [`Coord::to_unit`]. Longitude is wrapped to `[0, 2pi)` and
    /// pinned to zero when the vector lies on the polar axis.
    pub fn from_unit(v: [f64; 3]) -> Self {
        let rho = v[0].hypot(v[1]);
        let theta = rho.atan2(v[2]);
        if rho <= 1e-15 * (rho + v[2].abs()) {
            return Self { theta, phi: 0.0 };
        }
        Self {
            theta,
            phi: wrap_angle(v[1].atan2(v[0])),
        }
    }
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    // rem_euclid can round up to exactly 2pi for tiny negative inputs
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Great-circle distance in `[0, pi]`.
///
/// Evaluated as `atan2(|a x b|, a . b)`, which equals the clamped
/// `arccos(a . b)` but keeps full precision for nearly coincident or
/// antipodal points.
pub fn angular_distance(a: Coord, b: Coord) -> f64 {
    let u = a.to_unit();
    let v = b.to_unit();
    let dot = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).clamp(-1.0, 1.0);
    let cx = u[1] * v[2] - u[2] * v[1];
    let cy = u[2] * v[0] - u[0] * v[2];
    let cz = u[0] * v[1] - u[1] * v[0];
    (cx * cx + cy * cy + cz * cz).sqrt().atan2(dot)
}

/// Rotation `Z(alpha) Y(beta)` representing a point of SO(3)/SO(2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationZY {
    pub alpha: f64,
    pub beta: f64,
}

impl RotationZY {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// The rotation that carries the north pole to `c`.
    pub fn to_point(c: Coord) -> Self {
        Self {
            alpha: c.phi,
            beta: c.theta,
        }
    }

    /// 3x3 matrix of `Z(alpha) Y(beta)`, row-major.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let (sa, ca) = self.alpha.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        [[ca * cb, -sa, ca * sb], [sa * cb, ca, sa * sb], [-sb, 0.0, cb]]
    }

    pub fn rotate_point(&self, w: Coord) -> Coord {
        let m = self.matrix();
        let n = w.to_unit();
        Coord::from_unit(mat_vec(&m, n))
    }

    /// Coordinates of `R^{-1} w`, i.e. `M(R)^T n(w)`.
    pub fn inverse_rotate_point(&self, w: Coord) -> Coord {
        let m = self.matrix();
        let n = w.to_unit();
        let v = [
            m[0][0] * n[0] + m[1][0] * n[1] + m[2][0] * n[2],
            m[0][1] * n[0] + m[1][1] * n[1] + m[2][1] * n[2],
            m[0][2] * n[0] + m[1][2] * n[1] + m[2][2] * n[2],
        ];
        Coord::from_unit(v)
    }
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Free-function form of [`RotationZY::inverse_rotate_point`].
pub fn inverse_rotate_point(r: RotationZY, w: Coord) -> Coord {
    r.inverse_rotate_point(w)
}

/// Legendre polynomials `P_0(x) ..= P_n(x)`.
pub fn legendre_row(n: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(n + 1);
    p.push(1.0);
    if n >= 1 {
        p.push(x);
    }
    for l in 2..=n {
        let lf = l as f64;
        let v = ((2.0 * lf - 1.0) * x * p[l - 1] - (lf - 1.0) * p[l - 2]) / lf;
        p.push(v);
    }
    p
}

/// The equiangular sample grid at bandlimit `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    bandlimit: Bandlimit,
    thetas: Vec<f64>,
    phis: Vec<f64>,
    ring_weights: Vec<f64>,
}

impl SampleGrid {
    pub fn new(l: Bandlimit) -> Result<Self> {
        let n = l.as_usize();
        let lf = n as f64;
        let thetas: Vec<f64> = (0..=n).map(|t| PI * t as f64 / lf).collect();
        let phis: Vec<f64> = (0..2 * n).map(|p| PI * p as f64 / lf).collect();
        let ring_weights = solve_ring_weights(&thetas)?;
        Ok(Self {
            bandlimit: l,
            thetas,
            phis,
            ring_weights,
        })
    }

    pub fn bandlimit(&self) -> Bandlimit {
        self.bandlimit
    }

    pub fn l(&self) -> usize {
        self.bandlimit.as_usize()
    }

    pub fn n_rings(&self) -> usize {
        self.thetas.len()
    }

    pub fn n_lon(&self) -> usize {
        self.phis.len()
    }

    pub fn len(&self) -> usize {
        self.n_rings() * self.n_lon()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn ring_weights(&self) -> &[f64] {
        &self.ring_weights
    }

    /// Longitude spacing `pi / L`.
    pub fn dphi(&self) -> f64 {
        PI / self.bandlimit.get() as f64
    }

    /// Quadrature weight of any sample on ring `t`.
    pub fn sample_weight(&self, t: usize) -> f64 {
        self.dphi() * self.ring_weights[t]
    }

    pub fn index(&self, t: usize, p: usize) -> usize {
        t * self.n_lon() + p
    }

    pub fn coord(&self, t: usize, p: usize) -> Coord {
        Coord::new(self.thetas[t], self.phis[p])
    }

    /// Per-sample weights laid out `[t][p]`.
    pub fn weights(&self) -> Vec<f64> {
        let n_lon = self.n_lon();
        (0..self.n_rings())
            .flat_map(|t| std::iter::repeat(self.sample_weight(t)).take(n_lon))
            .collect()
    }

    /// Quadrature sum `sum_i f_i dw_i` of a single-channel sampled function.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let n_lon = self.n_lon();
        f.chunks(n_lon)
            .enumerate()
            .map(|(t, ring)| self.sample_weight(t) * ring.iter().sum::<f64>())
            .sum()
    }
}

/// Builds the grid at bandlimit `l`.
pub fn build_grid(l: u32) -> Result<SampleGrid> {
    SampleGrid::new(Bandlimit::new(l)?)
}

/// Solves `sum_t w_t P_l(cos theta_t) = 2 delta_{l0}` for `l = 0..=L`.
fn solve_ring_weights(thetas: &[f64]) -> Result<Vec<f64>> {
    let n = thetas.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (t, &th) in thetas.iter().enumerate() {
        for (l, v) in legendre_row(n - 1, th.cos()).into_iter().enumerate() {
            a[(l, t)] = v;
        }
    }
    let mut b = DVector::<f64>::zeros(n);
    b[0] = 2.0;
    let w = a.lu().solve(&b).ok_or_else(|| DiscoError::Format {
        what: "quadrature system",
        reason: "singular Legendre matrix".into(),
    })?;
    Ok(w.iter().copied().collect())
}
