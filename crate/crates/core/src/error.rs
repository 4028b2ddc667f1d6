use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("basis is rank deficient (Gram condition estimate {cond:.3e})")]
    SingularBasis { cond: f64 },

    #[error("matrix is singular to working precision (pivot {pivot:.3e} at column {column})")]
    SingularMatrix { pivot: f64, column: usize },

    #[error("projection onto the null space vanished")]
    DegenerateProjection,

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("SNR must exceed {min} (linear), got {got}")]
    InvalidSnr { got: f64, min: f64 },

    #[error("codebook of 2^{bits} entries exceeds the cap of 2^{cap}")]
    ResourceCap { bits: u32, cap: u32 },

    #[error("decode level {level} exceeds the codebook depth {max}")]
    InvalidLevel { level: u32, max: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures caused by numerically degenerate inputs rather than
    /// bad arguments.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::SingularBasis { .. } | Error::SingularMatrix { .. } | Error::DegenerateProjection)
    }
}
