//! Discrete-continuous (DISCO) spherical convolutions.
//!
//! Signals live on an equiangular grid; filters stay continuous and are
//! evaluated at exactly rotated coordinates. Convolutions are sparse-dense
//! products against a kernel compressed along longitude, with custom sparse
//! backward passes. A harmonic-space oracle, an equivariance harness and an
//! analytic cost model sit alongside for verification.

pub mod autograd;
pub mod conv;
pub mod equivariance;
pub mod error;
pub mod filter;
pub mod grid;
pub mod harmonic;
pub mod io;
pub mod kernel;
pub mod profiler;
pub mod signal;

pub use error::{DiscoError, Result};

pub use filter::{Filter, FilterKind};
pub use grid::{build_grid, Bandlimit, Coord, RotationZY, SampleGrid};
pub use harmonic::{EulerZYZ, HarmonicCoeffs, ShtPlan};
pub use kernel::{build_kernel, build_transposed_kernel, CompressedSparseKernel, KernelOrientation};

pub use signal::{Batch, SphericalSignal};
