//! Analytic cost models for a DISCO layer and the dense harmonic baseline.
//!
//! One multiply-add counts as 2 flops. Memory is the working set in stored
//! reals: precomputed operator entries plus the input and output buffers,
//! counted the same way for both models.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DiscoError, Result};
use crate::kernel::support_entries;

/// Flops to evaluate a linearly interpolated filter at one point.
pub const INTERP_FLOPS: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostModel {
    Disco,
    Harmonic,
}

impl fmt::Display for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Disco => "disco",
            Self::Harmonic => "harmonic",
        })
    }
}

/// Layer configuration shared by both models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    /// Filter nodes of the DISCO layer.
    pub n_nodes: usize,
    /// Cutoff in units of `pi / L`.
    pub cutoff_cells: f64,
    /// Whether rotated coordinates are kept for training.
    pub training: bool,
    /// Nodes of the harmonic-space filter.
    pub n_harmonic_nodes: usize,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            n_nodes: 4,
            cutoff_cells: 3.0,
            training: false,
            n_harmonic_nodes: 10,
        }
    }
}

impl CostConfig {
    pub fn cutoff(&self, l: u32) -> f64 {
        self.cutoff_cells * PI / l as f64
    }

    /// Short stable digest of the configuration, used to tag report rows.
    pub fn hash(&self) -> String {
        let text = format!(
            "nodes={};cutoff_cells={:?};training={};harmonic_nodes={}",
            self.n_nodes, self.cutoff_cells, self.training, self.n_harmonic_nodes
        );
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub l: u32,
    pub model: CostModel,
    /// Flops of one application of the layer.
    pub flops: u64,
    /// One-off flops to precompute the operator.
    pub build_flops: u64,
    pub memory_values: u64,
    /// Nonzeros of the compressed kernel; zero for the harmonic model.
    pub nonzeros: u64,
    pub config: CostConfig,
}

fn check_l(l: u32) -> Result<()> {
    if l < 4 {
        return Err(DiscoError::InvalidBandlimit(l));
    }
    Ok(())
}

fn n_samples(l: u64) -> u64 {
    (l + 1) * 2 * l
}

/// Nonzeros of the compressed forward kernel at `L_out = L_in = l`, counted
/// from the support of one output sample per ring without building values.
pub fn disco_nonzeros(l: u32, cutoff: f64) -> u64 {
    let n = l as usize;
    (0..=n)
        .into_par_iter()
        .map(|t| support_entries(n, PI * t as f64 / n as f64, 0.0, cutoff).len() as u64)
        .sum()
}

/// Cost of one DISCO layer at bandlimit `l`. Each compressed nonzero is used
/// once per output longitude; the interpolation cost is paid at build time.
pub fn disco_cost(l: u32, config: CostConfig) -> Result<CostEstimate> {
    check_l(l)?;
    let nnz = disco_nonzeros(l, config.cutoff(l));
    let outputs_per_residue = 2 * l as u64;
    let coords = if config.training { 2 * nnz } else { 0 };
    Ok(CostEstimate {
        l,
        model: CostModel::Disco,
        flops: 2 * nnz * outputs_per_residue,
        build_flops: INTERP_FLOPS * nnz,
        memory_values: nnz + coords + 2 * n_samples(l as u64),
        nonzeros: nnz,
        config,
    })
}

/// Cost of an axisymmetric convolution through precomputed dense transforms:
/// a forward and an inverse matrix product, a per-degree product and the
/// interpolation of the harmonic filter.
pub fn harmonic_cost(l: u32, config: CostConfig) -> Result<CostEstimate> {
    check_l(l)?;
    let l64 = l as u64;
    let n_coef = l64 * l64;
    let n_samp = n_samples(l64);
    let transforms = 2 * (2 * n_coef * n_samp);
    let product = 2 * n_coef;
    let interp = INTERP_FLOPS * l64;
    Ok(CostEstimate {
        l,
        model: CostModel::Harmonic,
        flops: transforms + product + interp,
        build_flops: 0,
        memory_values: n_coef * n_samp + 2 * n_samp + 2 * n_coef + config.n_harmonic_nodes as u64,
        nonzeros: 0,
        config,
    })
}

/// Per-L estimates for both models with fitted log-log slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    /// Ordered by L, DISCO before harmonic.
    pub rows: Vec<CostEstimate>,
    pub disco_flops_slope: f64,
    pub disco_memory_slope: f64,
    pub harmonic_flops_slope: f64,
    pub harmonic_memory_slope: f64,
}

impl ScalingReport {
    pub const CSV_HEADER: &'static str = "L,model,flops,memory_values,config_hash";

    pub fn get(&self, l: u32, model: CostModel) -> Option<&CostEstimate> {
        self.rows.iter().find(|r| r.l == l && r.model == model)
    }

    /// Data rows followed by one slope row per model.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out += &format!(
                "{},{},{},{},{}\n",
                r.l,
                r.model,
                r.flops,
                r.memory_values,
                r.config.hash()
            );
        }
        let hash = self.rows.first().map(|r| r.config.hash()).unwrap_or_default();
        out += &format!(
            "slope,disco,{:.4},{:.4},{hash}\n",
            self.disco_flops_slope, self.disco_memory_slope
        );
        out += &format!(
            "slope,harmonic,{:.4},{:.4},{hash}\n",
            self.harmonic_flops_slope, self.harmonic_memory_slope
        );
        out
    }
}

pub fn scaling_report(ls: &[u32], config: CostConfig) -> Result<ScalingReport> {
    if ls.len() < 2 {
        return Err(DiscoError::ShapeMismatch(
            "scaling report needs at least two bandlimits".into(),
        ));
    }
    let mut rows = Vec::with_capacity(2 * ls.len());
    for &l in ls {
        rows.push(disco_cost(l, config)?);
        rows.push(harmonic_cost(l, config)?);
    }
    let xs: Vec<f64> = ls.iter().map(|&l| (l as f64).ln()).collect();
    let slope = |model: CostModel, memory: bool| {
        let ys: Vec<f64> = rows
            .iter()
            .filter(|r| r.model == model)
            .map(|r| (if memory { r.memory_values } else { r.flops } as f64).ln())
            .collect();
        loglog_slope(&xs, &ys)
    };
    Ok(ScalingReport {
        disco_flops_slope: slope(CostModel::Disco, false),
        disco_memory_slope: slope(CostModel::Disco, true),
        harmonic_flops_slope: slope(CostModel::Harmonic, false),
        harmonic_memory_slope: slope(CostModel::Harmonic, true),
        rows,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
