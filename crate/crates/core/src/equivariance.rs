//! Rotational equivariance measurements.
//!
//! For an operator `D`, signal `f` and rotation `Q` the relative error is
//! `||P D(Qf) - Q P D(f)|| / ||P D(Qf)||` with the quadrature norm of the
//! grid, where `P` keeps degrees below `L`. `Qf` is formed exactly in harmonic
//! space. The sampled output is only approximately bandlimited, and rotating
//! it needs its coefficients, so both paths are compared after `P`. Rotations
//! commute with `P`, so nothing equivariant is lost.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::disco_conv;
use crate::error::{DiscoError, Result};
use crate::filter::{make_directional_best, make_random_filter, make_smooth_bump, Filter, FilterKind};
use crate::grid::{angular_distance, Bandlimit, Coord, RotationZY, SampleGrid};
use crate::harmonic::{
    harmonic_axisym_conv, random_bandlimited_coeffs, rotate_harmonic, rotate_harmonic_many, EulerZYZ, HarmonicCoeffs,
    ShtPlan,
};
use crate::kernel::{build_kernel_with, CompressedSparseKernel, KernelOptions, KernelOrientation};
use crate::signal::Batch;

/// A map from single-channel samples at bandlimit `L` to samples at `L`.
pub trait SphericalOperator: Sync {
    fn bandlimit(&self) -> Bandlimit;
    fn apply(&self, f: &[f64]) -> Result<Vec<f64>>;
}

/// Forward DISCO convolution with a fixed kernel.
pub struct DiscoOperator {
    kernel: CompressedSparseKernel,
}

impl DiscoOperator {
    pub fn new(kernel: CompressedSparseKernel) -> Result<Self> {
        if kernel.l_in() != kernel.l_out() || kernel.orientation() != KernelOrientation::Forward {
            return Err(DiscoError::ShapeMismatch(
                "equivariance tests need a forward kernel with L_out = L_in".into(),
            ));
        }
        Ok(Self { kernel })
    }

    pub fn from_filter(filter: &Filter, grid: &SampleGrid) -> Result<Self> {
        let opts = KernelOptions {
            orientation: KernelOrientation::Forward,
            store_coords: false,
        };
        Self::new(build_kernel_with(filter, grid, grid, opts)?)
    }

    pub fn kernel(&self) -> &CompressedSparseKernel {
        &self.kernel
    }
}

impl SphericalOperator for DiscoOperator {
    fn bandlimit(&self) -> Bandlimit {
        self.kernel.l_in()
    }

    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        let x = Batch::new(self.bandlimit(), 1, 1, f.to_vec())?;
        Ok(disco_conv(&self.kernel, &x)?.into_data())
    }
}

/// Axisymmetric convolution evaluated as a product in harmonic space. Exactly
/// equivariant, so it serves as a reference for the harness itself.
pub struct HarmonicAxisymOperator {
    plan: ShtPlan,
    psi_l: Vec<f64>,
}

impl HarmonicAxisymOperator {
    pub fn new(l: Bandlimit, psi_l: Vec<f64>) -> Result<Self> {
        if psi_l.len() != l.as_usize() {
            return Err(DiscoError::ShapeMismatch(format!(
                "{} filter degrees for L={l}",
                psi_l.len()
            )));
        }
        Ok(Self {
            plan: ShtPlan::new(l),
            psi_l,
        })
    }
}

impl SphericalOperator for HarmonicAxisymOperator {
    fn bandlimit(&self) -> Bandlimit {
        self.plan.bandlimit()
    }

    fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        let flm = self.plan.forward(f)?;
        self.plan.inverse(&harmonic_axisym_conv(&flm, &self.psi_l)?)
    }
}

/// Per-pair relative errors and their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub mean: f64,
    /// Sample standard deviation over the pairs (divisor `n - 1`).
    pub std: f64,
    /// Relative errors in signal-major order, `pairs[i * n_q + j]`; `None`
    /// where the denominator vanished.
    pub pairs: Vec<Option<f64>>,
}

impl ErrorStats {
    pub fn n_excluded(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_none()).count()
    }
}

fn quad_norm(grid_w: &[f64], g: &[f64]) -> f64 {
    g.iter().zip(grid_w).map(|(v, w)| v * v * w).sum::<f64>().sqrt()
}

/// Mean and standard deviation of the relative equivariance error over all
/// `(signal, rotation)` pairs.
pub fn equivariance_error<O: SphericalOperator + ?Sized>(
    op: &O,
    signals: &[HarmonicCoeffs],
    rotations: &[EulerZYZ],
) -> Result<ErrorStats> {
    let l = op.bandlimit();
    let grid = SampleGrid::new(l)?;
    let w = grid.weights();
    let plan = ShtPlan::new(l);
    for s in signals {
        if s.bandlimit() != l {
            return Err(DiscoError::ResolutionMismatch {
                expected: l.get(),
                actual: s.bandlimit().get(),
            });
        }
    }
    // D(f_i) projected below degree L, shared across rotations
    let outputs: Vec<HarmonicCoeffs> = signals
        .par_iter()
        .map(|f| plan.forward(&op.apply(&plan.inverse(f)?)?))
        .collect::<Result<_>>()?;

    let n_q = rotations.len();
    let pairs: Vec<Option<f64>> = (0..signals.len() * n_q)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n_q, k % n_q);
            let rotated = rotate_harmonic_many(&[&signals[i], &outputs[i]], rotations[j]);
            let a = plan.inverse(&plan.forward(&op.apply(&plan.inverse(&rotated[0])?)?)?)?;
            let b = plan.inverse(&rotated[1])?;
            let denom = quad_norm(&w, &a);
            if denom == 0.0 || !denom.is_finite() {
                log::warn!("signal {i}, rotation {j}: zero output norm, pair excluded");
                return Ok(None);
            }
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            Ok(Some(quad_norm(&w, &diff) / denom))
        })
        .collect::<Result<_>>()?;

    let kept: Vec<f64> = pairs.iter().flatten().copied().collect();
    let n = kept.len() as f64;
    let mean = if kept.is_empty() {
        0.0
    } else {
        kept.iter().sum::<f64>() / n
    };
    let std = if kept.len() < 2 {
        0.0
    } else {
        (kept.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(ErrorStats { mean, std, pairs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterCase {
    Best,
    Worst,
}

impl FromStr for FilterCase {
    type Err = DiscoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" => Ok(Self::Best),
            "worst" => Ok(Self::Worst),
            _ => Err(DiscoError::InvalidFilter(format!("unknown case {s:?} (best|worst)"))),
        }
    }
}

impl fmt::Display for FilterCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Best => "best",
            Self::Worst => "worst",
        })
    }
}

/// The two filter families of the equivariance table. Directional runs use
/// the separable parameterization with four nodes along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquivKind {
    Axisymmetric,
    Directional,
}

impl FromStr for EquivKind {
    type Err = DiscoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axisym" | "axisymmetric" => Ok(Self::Axisymmetric),
            "directional" => Ok(Self::Directional),
            _ => Err(DiscoError::InvalidFilter(format!(
                "unknown kind {s:?} (axisym|directional)"
            ))),
        }
    }
}

impl fmt::Display for EquivKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Axisymmetric => "axisym",
            Self::Directional => "directional",
        })
    }
}

pub const TABLE_NODES: usize = 4;
pub const TABLE_SIGNALS: usize = 20;
pub const TABLE_ROTATIONS: usize = 20;

/// Cutoff `5 pi / L` used throughout the table.
pub fn table_cutoff(l: Bandlimit) -> f64 {
    5.0 * PI / l.get() as f64
}

/// The filter a table row is computed with.
pub fn table_filter(l: Bandlimit, case: FilterCase, kind: EquivKind, seed: u64) -> Result<Filter> {
    let cutoff = table_cutoff(l);
    match (case, kind) {
        (FilterCase::Best, EquivKind::Axisymmetric) => make_smooth_bump(cutoff, TABLE_NODES),
        (FilterCase::Best, EquivKind::Directional) => make_directional_best(cutoff, TABLE_NODES),
        (FilterCase::Worst, EquivKind::Axisymmetric) => {
            make_random_filter(FilterKind::Axisymmetric, cutoff, TABLE_NODES, seed)
        }
        (FilterCase::Worst, EquivKind::Directional) => {
            make_random_filter(FilterKind::Separable, cutoff, TABLE_NODES, seed)
        }
    }
}

/// Rotations `Z(alpha) Y(beta)`: uniform on the sphere of axes when `beta_deg`
/// is `None`, otherwise with the given fixed colatitude.
pub fn sample_rotations(n: usize, beta_deg: Option<f64>, seed: u64) -> Vec<RotationZY> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..n)
        .map(|_| {
            let alpha = rng.gen_range(0.0..2.0 * PI);
            let beta = match beta_deg {
                Some(b) => b.to_radians(),
                None => rng.gen_range(-1.0f64..1.0).acos(),
            };
            RotationZY::new(alpha, beta)
        })
        .collect()
}

/// Signal `i` of a run uses its own stream derived from the run seed.
pub fn signal_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub l: u32,
    pub kind: EquivKind,
    pub case: FilterCase,
    /// `None` for rotations drawn uniformly.
    pub beta_deg: Option<f64>,
    pub mean_error_pct: f64,
    pub std_error_pct: f64,
    pub n_signals: usize,
    pub n_rotations: usize,
    pub n_excluded: usize,
    pub seed: u64,
}

impl EquivarianceReport {
    pub const CSV_HEADER: &'static str = "L,kind,case,beta_deg,mean_pct,std_pct,n_f,n_q,seed";

    pub fn csv_row(&self) -> String {
        let beta = self.beta_deg.map_or_else(|| "uniform".to_string(), |b| format!("{b}"));
        format!(
            "{},{},{},{},{:.6},{:.6},{},{},{}",
            self.l,
            self.kind,
            self.case,
            beta,
            self.mean_error_pct,
            self.std_error_pct,
            self.n_signals,
            self.n_rotations,
            self.seed
        )
    }
}

/// Options for a table row; the defaults follow the published protocol.
#[derive(Debug, Clone, Copy)]
pub struct TableOptions {
    pub n_signals: usize,
    pub n_rotations: usize,
    pub seed: u64,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            n_signals: TABLE_SIGNALS,
            n_rotations: TABLE_ROTATIONS,
            seed: 0,
        }
    }
}

/// One row of the equivariance table. Directional runs default to `beta = 0`
/// when no angle is given; axisymmetric runs default to uniform rotations.
pub fn run_equivariance_table(
    l: u32,
    case: FilterCase,
    kind: EquivKind,
    beta_deg: Option<f64>,
    opts: TableOptions,
) -> Result<EquivarianceReport> {
    let bl = Bandlimit::new(l)?;
    if let Some(b) = beta_deg {
        if !(b.is_finite() && (0.0..=180.0).contains(&b)) {
            return Err(DiscoError::InvalidFilter(format!(
                "beta {b} must lie in [0, 180] degrees"
            )));
        }
    }
    let beta_deg = match (kind, beta_deg) {
        (EquivKind::Directional, None) => Some(0.0),
        (_, b) => b,
    };
    let grid = SampleGrid::new(bl)?;
    let filter = table_filter(bl, case, kind, opts.seed)?;
    let op = DiscoOperator::from_filter(&filter, &grid)?;
    let signals: Vec<HarmonicCoeffs> = (0..opts.n_signals)
        .map(|i| random_bandlimited_coeffs(bl, signal_seed(opts.seed, i)))
        .collect();
    let rotations: Vec<EulerZYZ> = sample_rotations(opts.n_rotations, beta_deg, opts.seed)
        .into_iter()
        .map(EulerZYZ::from)
        .collect();
    let stats = equivariance_error(&op, &signals, &rotations)?;
    Ok(EquivarianceReport {
        l,
        kind,
        case,
        beta_deg,
        mean_error_pct: 100.0 * stats.mean,
        std_error_pct: 100.0 * stats.std,
        n_signals: opts.n_signals,
        n_rotations: opts.n_rotations,
        n_excluded: stats.n_excluded(),
        seed: opts.seed,
    })
}

/// Coefficients of a Gaussian-tapered bump centred on the north pole.
pub fn polar_bump(l: Bandlimit) -> HarmonicCoeffs {
    let n = l.as_usize();
    let sigma = n as f64 / 3.0;
    let mut out = HarmonicCoeffs::zeros(l);
    for deg in 0..n {
        let d = deg as f64;
        let v = ((2.0 * d + 1.0) / (4.0 * PI)).sqrt() * (-0.5 * d * d / (sigma * sigma)).exp();
        out.set(deg, 0, num_complex::Complex64::new(v, 0.0));
    }
    out
}

/// Places the bump at `centre`, rotates it by `q` in harmonic space and finds
/// the sampled peak. Returns the peak and its distance from `q(centre)`.
pub fn bump_cross_check(l: Bandlimit, centre: Coord, q: EulerZYZ) -> Result<(Coord, f64)> {
    let grid = SampleGrid::new(l)?;
    let placed = rotate_harmonic(&polar_bump(l), EulerZYZ::new(centre.phi, centre.theta, 0.0));
    let moved = rotate_harmonic(&placed, q);
    let f = ShtPlan::new(l).inverse(&moved)?;
    let (best, _) = f.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
    );
    let peak = grid.coord(best / grid.n_lon(), best % grid.n_lon());
    // (Qf)(w) = f(Q^{-1} w), so the peak moves to the point whose preimage is the centre
    let back = q.inverse_rotate_point(peak);
    Ok((peak, angular_distance(back, centre)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bl(l: u32) -> Bandlimit {
        Bandlimit::new(l).unwrap()
    }

    fn signals(l: Bandlimit, n: usize) -> Vec<HarmonicCoeffs> {
        (0..n).map(|i| random_bandlimited_coeffs(l, 100 + i as u64)).collect()
    }

    #[test]
    fn identity_rotation_has_no_error() {
        let l = bl(16);
        let op = DiscoOperator::from_filter(
            &make_smooth_bump(5.0 * PI / 16.0, 4).unwrap(),
            &SampleGrid::new(l).unwrap(),
        )
        .unwrap();
        let s = equivariance_error(&op, &signals(l, 3), &[EulerZYZ::IDENTITY]).unwrap();
        assert!(s.mean <= 1e-12, "{}", s.mean);
        let h = HarmonicAxisymOperator::new(l, vec![1.0; 16]).unwrap();
        let s = equivariance_error(&h, &signals(l, 3), &[EulerZYZ::IDENTITY]).unwrap();
        assert!(s.mean <= 1e-12, "{}", s.mean);
    }

    #[test]
    fn harmonic_operator_is_equivariant_to_machine_precision() {
        let l = bl(24);
        let psi: Vec<f64> = (0..24).map(|d| (-(d as f64) / 6.0).exp()).collect();
        let op = HarmonicAxisymOperator::new(l, psi).unwrap();
        let rots: Vec<EulerZYZ> = sample_rotations(5, None, 3).into_iter().map(EulerZYZ::from).collect();
        let s = equivariance_error(&op, &signals(l, 4), &rots).unwrap();
        assert!(100.0 * s.mean <= 1e-7, "{} %", 100.0 * s.mean);
    }

    #[test]
    fn error_is_scale_invariant() {
        let l = bl(16);
        let op = DiscoOperator::from_filter(
            &table_filter(l, FilterCase::Worst, EquivKind::Directional, 1).unwrap(),
            &SampleGrid::new(l).unwrap(),
        )
        .unwrap();
        let sig = signals(l, 2);
        let scaled: Vec<HarmonicCoeffs> = sig
            .iter()
            .map(|s| HarmonicCoeffs::from_vec(l, s.as_slice().iter().map(|c| c * 37.5).collect()).unwrap())
            .collect();
        let rots: Vec<EulerZYZ> = sample_rotations(3, Some(10.0), 4)
            .into_iter()
            .map(EulerZYZ::from)
            .collect();
        let a = equivariance_error(&op, &sig, &rots).unwrap();
        let b = equivariance_error(&op, &scaled, &rots).unwrap();
        for (x, y) in a.pairs.iter().zip(&b.pairs) {
            assert!((x.unwrap() - y.unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_filter_pairs_are_excluded() {
        let l = bl(8);
        let f = Filter::axisymmetric(5.0 * PI / 8.0, vec![0.0; 4]).unwrap();
        let op = DiscoOperator::from_filter(&f, &SampleGrid::new(l).unwrap()).unwrap();
        let s = equivariance_error(&op, &signals(l, 2), &[EulerZYZ::new(0.1, 0.2, 0.0)]).unwrap();
        assert_eq!(s.n_excluded(), 2);
    }

    #[test]
    fn uniform_rotations_cover_the_sphere() {
        let r = sample_rotations(4000, None, 7);
        let mean_cos = r.iter().map(|q| q.beta.cos()).sum::<f64>() / r.len() as f64;
        assert!(mean_cos.abs() < 0.05);
        assert!(r.iter().all(|q| (0.0..2.0 * PI).contains(&q.alpha)));
        assert!(sample_rotations(5, Some(5.0), 1)
            .iter()
            .all(|q| (q.beta - 5f64.to_radians()).abs() < 1e-15));
    }

    #[test]
    fn bump_peak_lands_where_points_rotate() {
        let l = bl(32);
        for (c, q) in [
            (Coord::new(0.0, 0.0), EulerZYZ::new(0.7, 1.1, 0.0)),
            (Coord::new(1.0, 2.0), EulerZYZ::new(2.2, 0.4, 1.3)),
            (Coord::new(2.5, 5.5), EulerZYZ::new(4.0, 2.0, 5.0)),
        ] {
            let (_, dist) = bump_cross_check(l, c, q).unwrap();
            assert!(dist <= PI / 32.0, "{c:?} {q:?}: {dist}");
        }
    }

    #[test]
    fn small_directional_trend() {
        let l = 32;
        let opts = TableOptions {
            n_signals: 3,
            n_rotations: 3,
            seed: 2,
        };
        let e: Vec<f64> = [0.0, 5.0, 10.0]
            .iter()
            .map(|&b| {
                run_equivariance_table(l, FilterCase::Best, EquivKind::Directional, Some(b), opts)
                    .unwrap()
                    .mean_error_pct
            })
            .collect();
        assert!(e[0] < e[1] && e[1] < e[2], "{e:?}");
    }

    #[test]
    fn report_row_shape() {
        let r = run_equivariance_table(
            8,
            FilterCase::Best,
            EquivKind::Axisymmetric,
            None,
            TableOptions {
                n_signals: 2,
                n_rotations: 2,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(
            r.csv_row().split(',').count(),
            EquivarianceReport::CSV_HEADER.split(',').count()
        );
        assert!(r.csv_row().contains(",uniform,"));
        assert!(run_equivariance_table(
            8,
            FilterCase::Best,
            EquivKind::Directional,
            Some(-1.0),
            TableOptions::default()
        )
        .is_err());
    }
}
