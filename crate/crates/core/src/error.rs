use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NcgError {
    #[error("deformation angles differ: {left} vs {right}")]
    ThetaMismatch { left: f64, right: f64 },

    #[error("tau must have a nonzero imaginary part, got {0}")]
    RealTau(Complex64),

    #[error("element support radius {support} exceeds guard {guard}")]
    GuardTooSmall { support: u64, guard: u64 },

    #[error("representation order {s} exceeds cap {cap}")]
    CapExceeded { s: u32, cap: u32 },

    #[error("operation requires theta = 0, got {0}")]
    NonzeroTheta(f64),

    #[error("grid resolution: {0}")]
    Resolution(String),

    #[error("stream holds {available} values but {required} are required")]
    InsufficientStream { available: usize, required: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NcgError {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        NcgError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, NcgError>;
