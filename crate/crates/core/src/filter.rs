//! Continuous filters with learnable node values.
//!
//! Three parameterizations are supported. Axisymmetric filters interpolate
//! linearly between equally spaced colatitude nodes on `[0, theta_cutoff]`.
//! Separable filters multiply that profile by a periodic piecewise-linear
//! function of azimuth. Directional filters carry a 3x3 planar node grid
//! mapped onto the sphere through the azimuthal-equidistant chart
//! `(x, y) = (theta / h) (sin phi, cos phi)`, with node spacing
//! `h = theta_cutoff / sqrt(2)` so that corner nodes sit on the cutoff.
//! Every filter is identically zero beyond its cutoff.

use std::f64::consts::{PI, SQRT_2};
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DiscoError, Result};
use crate::grid::{wrap_angle, SUPPORT_EPS};

const FILTER_MAGIC: &[u8; 4] = b"SFLT";
const FILTER_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Axisymmetric,
    Separable,
    Directional,
}

impl FilterKind {
    fn tag(self) -> u32 {
        match self {
            FilterKind::Axisymmetric => 0,
            FilterKind::Separable => 1,
            FilterKind::Directional => 2,
        }
    }

    fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(FilterKind::Axisymmetric),
            1 => Ok(FilterKind::Separable),
            2 => Ok(FilterKind::Directional),
            other => Err(DiscoError::Format {
                what: "filter file",
                reason: format!("unknown kind tag {other}"),
            }),
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = DiscoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axisym" | "axisymmetric" => Ok(FilterKind::Axisymmetric),
            "separable" => Ok(FilterKind::Separable),
            "directional" => Ok(FilterKind::Directional),
            other => Err(DiscoError::InvalidFilter(format!("unknown filter kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterKind::Axisymmetric => "axisym",
            FilterKind::Separable => "separable",
            FilterKind::Directional => "directional",
        })
    }
}

/// Sparse row of `d psi / d p` at one point: at most four nonzeros.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamGradient {
    idx: [usize; 4],
    w: [f64; 4],
    len: usize,
}

impl ParamGradient {
    fn push(&mut self, i: usize, w: f64) {
        self.idx[self.len] = i;
        self.w[self.len] = w;
        self.len += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx[..self.len]
            .iter()
            .copied()
            .zip(self.w[..self.len].iter().copied())
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    kind: FilterKind,
    theta_cutoff: f64,
    n_theta: usize,
    n_phi: usize,
    params: Vec<f64>,
}

impl Filter {
    pub fn axisymmetric(theta_cutoff: f64, params: Vec<f64>) -> Result<Self> {
        let f = Self {
            kind: FilterKind::Axisymmetric,
            theta_cutoff,
            n_theta: params.len(),
            n_phi: 1,
            params,
        };
        f.validate()?;
        Ok(f)
    }

    /// `theta_params` then `phi_params`; azimuthal nodes sit at `2 pi k / n_phi`.
    pub fn separable(theta_cutoff: f64, theta_params: Vec<f64>, phi_params: Vec<f64>) -> Result<Self> {
        let n_theta = theta_params.len();
        let n_phi = phi_params.len();
        let mut params = theta_params;
        params.extend(phi_params);
        let f = Self {
            kind: FilterKind::Separable,
            theta_cutoff,
            n_theta,
            n_phi,
            params,
        };
        f.validate()?;
        Ok(f)
    }

    /// Nine node values, row-major with `y` (rows) and `x` (columns) running
    /// over `-1, 0, 1` node units. `phi = 0` points along `+y`.
    pub fn directional(theta_cutoff: f64, params: Vec<f64>) -> Result<Self> {
        let f = Self {
            kind: FilterKind::Directional,
            theta_cutoff,
            n_theta: 3,
            n_phi: 3,
            params,
        };
        f.validate()?;
        Ok(f)
    }

    /// Directional filter whose edge nodes sit one grid spacing `pi / L` from
    /// the centre and corner nodes at `sqrt(2) pi / L`.
    pub fn directional_for_bandlimit(l: u32, params: Vec<f64>) -> Result<Self> {
        Self::directional(SQRT_2 * PI / l as f64, params)
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta_cutoff > 0.0 && self.theta_cutoff < PI) {
            return Err(DiscoError::CutoffNotLocalized(self.theta_cutoff));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(DiscoError::NonFinite("filter parameters"));
        }
        match self.kind {
            FilterKind::Axisymmetric if self.n_theta < 2 => {
                Err(DiscoError::InvalidFilter("need at least two colatitude nodes".into()))
            }
            FilterKind::Separable if self.n_theta < 2 || self.n_phi < 2 => Err(DiscoError::InvalidFilter(
                "need at least two nodes along each axis".into(),
            )),
            FilterKind::Directional if self.params.len() != 9 => Err(DiscoError::InvalidFilter(
                "directional filters have exactly nine nodes".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn theta_cutoff(&self) -> f64 {
        self.theta_cutoff
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Copy with replaced node values.
    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(DiscoError::ShapeMismatch(format!(
                "{} parameters for a filter with {}",
                params.len(),
                self.params.len()
            )));
        }
        let f = Self { params, ..self.clone() };
        f.validate()?;
        Ok(f)
    }

    /// Colatitudes of the radial nodes (axisymmetric and separable kinds).
    pub fn theta_nodes(&self) -> Vec<f64> {
        let n = self.n_theta;
        (0..n).map(|k| self.theta_cutoff * k as f64 / (n - 1) as f64).collect()
    }

    /// Spacing of the directional node grid.
    pub fn node_spacing(&self) -> f64 {
        self.theta_cutoff / SQRT_2
    }

    #[inline]
    fn outside(&self, theta: f64) -> bool {
        theta > self.theta_cutoff + SUPPORT_EPS
    }

    /// Lower node and fraction for colatitude interpolation.
    #[inline]
    fn theta_cell(&self, theta: f64) -> (usize, f64) {
        let s = theta.clamp(0.0, self.theta_cutoff) / self.theta_cutoff * (self.n_theta - 1) as f64;
        let i = (s.floor() as usize).min(self.n_theta - 2);
        (i, s - i as f64)
    }

    #[inline]
    fn phi_cell(&self, phi: f64) -> (usize, usize, f64) {
        let u = wrap_angle(phi) / (2.0 * PI) * self.n_phi as f64;
        let i = (u.floor() as usize).min(self.n_phi - 1);
        (i, (i + 1) % self.n_phi, u - i as f64)
    }

    /// Bilinear cell on the planar chart, or `None` outside the node grid.
    #[inline]
    fn plane_cell(&self, theta: f64, phi: f64) -> Option<(usize, usize, f64, f64)> {
        let r = theta / self.node_spacing();
        let (s, c) = phi.sin_cos();
        let (x, y) = (r * s, r * c);
        let lim = 1.0 + SUPPORT_EPS;
        if x.abs() > lim || y.abs() > lim {
            return None;
        }
        let u = x.clamp(-1.0, 1.0) + 1.0;
        let v = y.clamp(-1.0, 1.0) + 1.0;
        let ix = (u.floor() as usize).min(1);
        let iy = (v.floor() as usize).min(1);
        Some((ix, iy, u - ix as f64, v - iy as f64))
    }

    fn theta_profile(&self, theta: f64) -> f64 {
        let (i, f) = self.theta_cell(theta);
        (1.0 - f) * self.params[i] + f * self.params[i + 1]
    }

    fn phi_profile(&self, phi: f64) -> f64 {
        let (i, j, f) = self.phi_cell(phi);
        let p = &self.params[self.n_theta..];
        (1.0 - f) * p[i] + f * p[j]
    }

    /// Filter value at rotated coordinates `(theta, phi)`.
    pub fn eval(&self, theta: f64, phi: f64) -> f64 {
        if self.outside(theta) {
            return 0.0;
        }
        match self.kind {
            FilterKind::Axisymmetric => self.theta_profile(theta),
            FilterKind::Separable => self.theta_profile(theta) * self.phi_profile(phi),
            FilterKind::Directional => match self.plane_cell(theta, phi) {
                None => 0.0,
                Some((ix, iy, fx, fy)) => {
                    let p = &self.params;
                    let at = |x: usize, y: usize| p[y * 3 + x];
                    (1.0 - fy) * ((1.0 - fx) * at(ix, iy) + fx * at(ix + 1, iy))
                        + fy * ((1.0 - fx) * at(ix, iy + 1) + fx * at(ix + 1, iy + 1))
                }
            },
        }
    }

    /// Gradient of [`Filter::eval`] with respect to the node values. For the
    /// separable kind this is the product rule between the two profiles.
    pub fn param_gradient(&self, theta: f64, phi: f64) -> ParamGradient {
        let mut g = ParamGradient::default();
        if self.outside(theta) {
            return g;
        }
        match self.kind {
            FilterKind::Axisymmetric => {
                let (i, f) = self.theta_cell(theta);
                g.push(i, 1.0 - f);
                g.push(i + 1, f);
            }
            FilterKind::Separable => {
                let (i, f) = self.theta_cell(theta);
                let (a, b, h) = self.phi_cell(phi);
                let tv = self.theta_profile(theta);
                let pv = self.phi_profile(phi);
                g.push(i, (1.0 - f) * pv);
                g.push(i + 1, f * pv);
                g.push(self.n_theta + a, (1.0 - h) * tv);
                g.push(self.n_theta + b, h * tv);
            }
            FilterKind::Directional => {
                if let Some((ix, iy, fx, fy)) = self.plane_cell(theta, phi) {
                    g.push(iy * 3 + ix, (1.0 - fx) * (1.0 - fy));
                    g.push(iy * 3 + ix + 1, fx * (1.0 - fy));
                    g.push((iy + 1) * 3 + ix, (1.0 - fx) * fy);
                    g.push((iy + 1) * 3 + ix + 1, fx * fy);
                }
            }
        }
        g
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.params.len());
        out.extend_from_slice(FILTER_MAGIC);
        out.extend_from_slice(&FILTER_VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.tag().to_le_bytes());
        out.extend_from_slice(&self.theta_cutoff.to_le_bytes());
        out.extend_from_slice(&(self.n_theta as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_phi as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| DiscoError::Format {
            what: "filter file",
            reason: reason.to_string(),
        };
        if bytes.len() < 32 || &bytes[..4] != FILTER_MAGIC {
            return Err(bad("missing SFLT header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        if u32_at(4) != FILTER_VERSION {
            return Err(bad("unsupported version"));
        }
        let kind = FilterKind::from_tag(u32_at(8))?;
        let theta_cutoff = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let n_theta = u32_at(20) as usize;
        let n_phi = u32_at(24) as usize;
        let n_params = u32_at(28) as usize;
        if bytes.len() != 32 + 8 * n_params {
            return Err(bad("payload length does not match parameter count"));
        }
        let params: Vec<f64> = bytes[32..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let expected = match kind {
            FilterKind::Axisymmetric => n_theta,
            FilterKind::Separable => n_theta + n_phi,
            FilterKind::Directional => 9,
        };
        if expected != n_params {
            return Err(bad("node counts do not match parameter count"));
        }
        let f = Self {
            kind,
            theta_cutoff,
            n_theta,
            n_phi,
            params,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// SHA-256 of the serialized record.
    pub fn content_hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }
}

/// Free-function form of [`Filter::eval`].
pub fn eval_filter(filter: &Filter, theta: f64, phi: f64) -> f64 {
    filter.eval(theta, phi)
}

/// `exp(-c^2 / (c^2 - theta^2))`, with its zero limit at and beyond `c`.
pub fn smooth_bump(theta: f64, theta_cutoff: f64) -> f64 {
    let c2 = theta_cutoff * theta_cutoff;
    let d = c2 - theta * theta;
    if d <= 0.0 {
        0.0
    } else {
        (-c2 / d).exp()
    }
}

fn bump_nodes(theta_cutoff: f64, n_nodes: usize) -> Vec<f64> {
    (0..n_nodes)
        .map(|k| {
            if k + 1 == n_nodes {
                0.0
            } else {
                smooth_bump(theta_cutoff * k as f64 / (n_nodes - 1) as f64, theta_cutoff)
            }
        })
        .collect()
}

/// Axisymmetric filter sampling the smooth bump at its nodes.
pub fn make_smooth_bump(theta_cutoff: f64, n_nodes: usize) -> Result<Filter> {
    if n_nodes < 2 {
        return Err(DiscoError::InvalidFilter("need at least two nodes".into()));
    }
    Filter::axisymmetric(theta_cutoff, bump_nodes(theta_cutoff, n_nodes))
}

/// Separable filter `bump(theta) * cos(phi)`, both sampled at their nodes.
pub fn make_directional_best(theta_cutoff: f64, n_nodes: usize) -> Result<Filter> {
    if n_nodes < 2 {
        return Err(DiscoError::InvalidFilter("need at least two nodes".into()));
    }
    let phi: Vec<f64> = (0..n_nodes)
        .map(|k| (2.0 * PI * k as f64 / n_nodes as f64).cos())
        .collect();
    Filter::separable(theta_cutoff, bump_nodes(theta_cutoff, n_nodes), phi)
}

/// Node values drawn i.i.d. standard normal. `n_nodes` is the node count per
/// axis; directional filters always have nine nodes.
pub fn make_random_filter(kind: FilterKind, theta_cutoff: f64, n_nodes: usize, seed: u64) -> Result<Filter> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    match kind {
        FilterKind::Axisymmetric => Filter::axisymmetric(theta_cutoff, draw(n_nodes)),
        FilterKind::Separable => {
            let t = draw(n_nodes);
            let p = draw(n_nodes);
            Filter::separable(theta_cutoff, t, p)
        }
        FilterKind::Directional => Filter::directional(theta_cutoff, draw(9)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    const L: f64 = 16.0;

    #[test]
    fn node_values_are_returned_at_nodes() {
        let f = Filter::axisymmetric(0.6, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        for (th, p) in f.theta_nodes().into_iter().zip([1.0, -2.0, 0.5, 3.0]) {
            assert_abs_diff_eq!(f.eval(th, 0.3), p, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(f.eval(0.1, 0.0), 1.0 + 0.5 * (-3.0), epsilon = 1e-14);
    }

    #[test]
    fn zero_beyond_cutoff() {
        for kind in [FilterKind::Axisymmetric, FilterKind::Separable, FilterKind::Directional] {
            let f = make_random_filter(kind, 0.5, 4, 3).unwrap();
            assert_eq!(f.eval(0.51, 0.0), 0.0);
            assert_eq!(f.eval(2.0, 1.0), 0.0);
            assert!(f.param_gradient(0.51, 0.0).is_empty());
        }
    }

    #[test]
    fn axisymmetric_ignores_azimuth() {
        let f = make_random_filter(FilterKind::Axisymmetric, 3.0 * PI / L, 4, 9).unwrap();
        for th in [0.0, 0.1, 0.33, 0.5] {
            assert_eq!(f.eval(th, 0.0), f.eval(th, 1.7));
            assert_eq!(f.eval(th, 0.0), f.eval(th, 5.9));
        }
    }

    #[test]
    fn bump_values() {
        let c = 5.0 * PI / L;
        let f = make_smooth_bump(c, 4).unwrap();
        assert_abs_diff_eq!(f.params()[0], (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(f.params()[0], 0.367879, epsilon = 1e-6);
        assert_eq!(f.params()[3], 0.0);
        let nodes = f.theta_nodes();
        let want = [0.0, 5.0 * PI / (3.0 * L), 10.0 * PI / (3.0 * L), 5.0 * PI / L];
        for (a, b) in nodes.iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(make_smooth_bump(c, 1).is_err());
    }

    #[test]
    fn directional_best_profile() {
        let c = 5.0 * PI / L;
        let f = make_directional_best(c, 4).unwrap();
        assert_eq!(f.kind(), FilterKind::Separable);
        let phi = &f.params()[4..];
        assert_abs_diff_eq!(phi[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(phi[2], -1.0, epsilon = 1e-15);
        for p in [0.0, 0.4, 1.0, PI, 4.0] {
            assert_abs_diff_eq!(f.eval(0.0, p), (-1.0f64).exp() * f.phi_profile(p), epsilon = 1e-15);
        }
        assert_abs_diff_eq!(f.eval(0.0, PI / 4.0), (-1.0f64).exp() * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn random_filters_are_seeded() {
        let a = make_random_filter(FilterKind::Separable, 0.4, 4, 11).unwrap();
        let b = make_random_filter(FilterKind::Separable, 0.4, 4, 11).unwrap();
        let c = make_random_filter(FilterKind::Separable, 0.4, 4, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.n_params(), 8);
        assert_eq!(
            make_random_filter(FilterKind::Directional, 0.4, 4, 1)
                .unwrap()
                .n_params(),
            9
        );
    }

    #[test]
    fn directional_nodes_land_on_the_projected_grid() {
        let l = 16;
        let params: Vec<f64> = (0..9).map(|k| k as f64 + 1.0).collect();
        let f = Filter::directional_for_bandlimit(l, params).unwrap();
        let h = PI / l as f64;
        assert_abs_diff_eq!(f.node_spacing(), h, epsilon = 1e-15);
        // centre
        assert_abs_diff_eq!(f.eval(0.0, 0.0), 5.0, epsilon = 1e-12);
        // edges: phi = 0 is +y (row 2, col 1), phi = pi/2 is +x (row 1, col 2)
        assert_abs_diff_eq!(f.eval(h, 0.0), 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.eval(h, PI / 2.0), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.eval(h, PI), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.eval(h, 1.5 * PI), 4.0, epsilon = 1e-12);
        // corners at sqrt(2) h
        assert_abs_diff_eq!(f.eval(SQRT_2 * h, PI / 4.0), 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.eval(SQRT_2 * h, -3.0 * PI / 4.0), 1.0, epsilon = 1e-12);
        // outside the square but inside the cutoff disk
        assert_eq!(f.eval(1.3 * h, 0.0), 0.0);
    }

    #[test]
    fn invalid_filters_are_rejected() {
        assert!(matches!(
            Filter::axisymmetric(PI, vec![1.0, 2.0]),
            Err(DiscoError::CutoffNotLocalized(_))
        ));
        assert!(Filter::axisymmetric(0.3, vec![1.0]).is_err());
        assert!(Filter::directional(0.3, vec![1.0; 8]).is_err());
        assert!(Filter::axisymmetric(0.3, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn serialization_roundtrip() {
        for kind in [FilterKind::Axisymmetric, FilterKind::Separable, FilterKind::Directional] {
            let f = make_random_filter(kind, 0.37, 5, 2).unwrap();
            let bytes = f.to_bytes();
            let g = Filter::from_bytes(&bytes).unwrap();
            assert_eq!(f, g);
            assert_eq!(f.content_hash(), g.content_hash());
            assert!(Filter::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
        assert!(Filter::from_bytes(b"nope").is_err());
    }

    #[test]
    fn separable_is_the_product_of_its_profiles() {
        let f = make_random_filter(FilterKind::Separable, 0.5, 4, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let th = rng.gen_range(0.0..0.5);
            let ph = rng.gen_range(-7.0..7.0);
            let want = f.theta_profile(th) * f.phi_profile(ph);
            assert!((f.eval(th, ph) - want).abs() <= 1e-14);
        }
    }

    #[test]
    fn parameter_gradient_matches_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in [FilterKind::Axisymmetric, FilterKind::Separable, FilterKind::Directional] {
            let f = make_random_filter(kind, 0.5, 4, 8).unwrap();
            for _ in 0..50 {
                let th = rng.gen_range(0.0..0.5);
                let ph = rng.gen_range(0.0..2.0 * PI);
                let g = f.param_gradient(th, ph);
                let mut dense = vec![0.0; f.n_params()];
                for (i, w) in g.iter() {
                    dense[i] += w;
                }
                for k in 0..f.n_params() {
                    let h = 1e-6;
                    let mut p = f.params().to_vec();
                    p[k] += h;
                    let up = f.with_params(p.clone()).unwrap().eval(th, ph);
                    p[k] -= 2.0 * h;
                    let dn = f.with_params(p).unwrap().eval(th, ph);
                    assert_abs_diff_eq!(dense[k], (up - dn) / (2.0 * h), epsilon = 1e-8);
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn linear_in_parameters(th in 0.0..0.5f64, ph in 0.0..6.3f64, a in -3.0..3.0f64, seed in 0u64..100) {
                for kind in [FilterKind::Axisymmetric, FilterKind::Directional] {
                    let f = make_random_filter(kind, 0.5, 4, seed).unwrap();
                    let g = make_random_filter(kind, 0.5, 4, seed + 1000).unwrap();
                    let mix: Vec<f64> = f.params().iter().zip(g.params()).map(|(x, y)| a * x + y).collect();
                    let h = f.with_params(mix).unwrap();
                    prop_assert!((h.eval(th, ph) - (a * f.eval(th, ph) + g.eval(th, ph))).abs() < 1e-12);
                }
            }

            #[test]
            fn continuous_inside_the_cutoff(th in 0.0..0.49f64, ph in 0.0..6.3f64, seed in 0u64..50) {
                for kind in [FilterKind::Axisymmetric, FilterKind::Separable, FilterKind::Directional] {
                    let f = make_random_filter(kind, 0.5, 4, seed).unwrap();
                    let d = 1e-9;
                    let v = f.eval(th, ph);
                    prop_assert!(v.is_finite());
                    if kind != FilterKind::Directional || f.plane_cell(th + d, ph).is_some() {
                        prop_assert!((f.eval(th + d, ph + d) - v).abs() < 1e-6);
                    }
                }
            }
        }
    }
}
