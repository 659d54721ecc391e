use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiscoError {
    #[error("invalid bandlimit {0}: must be at least 1")]
    InvalidBandlimit(u32),

    #[error("resolution mismatch: expected L={expected}, got L={actual}")]
    ResolutionMismatch { expected: u32, actual: u32 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported resolution ratio L_out={l_out} / L_in={l_in}")]
    UnsupportedRatio { l_in: u32, l_out: u32 },

    #[error("filter cutoff {0} rad is not localized (must be in (0, pi))")]
    CutoffNotLocalized(f64),

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dense expansion guard: L_in={0} exceeds the maximum of 16")]
    DenseTooLarge(u32),

    #[error("a {0} kernel cannot be applied here")]
    WrongOrientation(&'static str),

    #[error("kernel was built without rotated coordinates; it cannot be used for training")]
    MissingCoordinates,

    #[error("gradient descent diverged: loss grew from {start:e} to {current:e}")]
    Diverged { start: f64, current: f64 },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DiscoError>;
