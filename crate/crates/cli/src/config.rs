use std::path::PathBuf;

use disco_core::equivariance::{EquivKind, FilterCase};
use disco_core::filter::{make_directional_best, make_random_filter, make_smooth_bump};
use disco_core::profiler::CostConfig;
use disco_core::{Filter, FilterKind};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// Everything needed to rerun a command. Stored in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Conv(ConvConfig),
    Equiv(EquivConfig),
    Profile(ProfileConfig),
    Gradcheck(GradcheckConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum FilterSpec {
    File {
        path: PathBuf,
    },
    /// Smooth bump for axisymmetric kinds, bump times `cos(phi)` for
    /// separable ones, random node values otherwise or when a seed is set.
    Generated {
        kind: FilterKind,
        nodes: usize,
        cutoff_cells: f64,
        seed: Option<u64>,
    },
}

impl FilterSpec {
    /// The filter for input bandlimit `l`; generated cutoffs are `cells * pi / l`.
    pub fn resolve(&self, l: u32) -> Result<Filter, Failure> {
        match self {
            Self::File { path } => {
                if !path.exists() {
                    return Err(Failure::Usage(format!("filter file {} does not exist", path.display())));
                }
                Ok(Filter::load(path)?)
            }
            Self::Generated {
                kind,
                nodes,
                cutoff_cells,
                seed,
            } => {
                let cutoff = cutoff_cells * std::f64::consts::PI / l as f64;
                let f = match (kind, seed) {
                    (k, Some(s)) => make_random_filter(*k, cutoff, *nodes, *s)?,
                    (FilterKind::Axisymmetric, None) => make_smooth_bump(cutoff, *nodes)?,
                    (FilterKind::Separable, None) => make_directional_best(cutoff, *nodes)?,
                    (FilterKind::Directional, None) => {
                        return Err(Failure::Usage(
                            "an unconstrained directional filter needs --filter-seed or --filter-file".into(),
                        ))
                    }
                };
                Ok(f)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub filter: FilterSpec,
    pub transposed: bool,
    pub upsample: bool,
    pub verify_constant: bool,
    pub constant_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivConfig {
    pub l: u32,
    pub kind: EquivKind,
    pub case: FilterCase,
    pub beta_deg: Option<f64>,
    pub seed: u64,
    pub n_signals: usize,
    pub n_rotations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub l_list: Vec<u32>,
    pub out: PathBuf,
    pub cost: CostConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub l: u32,
    pub kind: FilterKind,
    pub seed: u64,
    pub cutoff_cells: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub config: RunConfig,
    pub result: serde_json::Value,
}

impl Report {
    pub const VERSION: u32 = 1;
}
