//! Numerical tolerances shared by every module.
//!
//! Tests and runtime checks read these constants instead of hard-coding
//! thresholds.

/// Relative residual accepted from [`crate::numerics::solve_small`].
pub const SOLVE_RESIDUAL: f64 = 1e-9;

/// Relative orthogonality achieved by projections.
pub const ORTHOGONALITY: f64 = 1e-10;

/// Unit-norm tolerance for vectors produced by this crate.
pub const NORM: f64 = 1e-12;

/// Unit-norm tolerance accepted on caller-supplied vectors.
pub const UNIT_NORM_CONTRACT: f64 = 1e-9;

/// Pivots smaller than this fraction of the largest entry are singular.
pub const PIVOT_RELATIVE: f64 = 1e-14;

/// Largest Gram-matrix condition estimate accepted by a projection basis.
pub const GRAM_CONDITION_MAX: f64 = 1e12;

/// A first coefficient below this fraction of the norm is treated as zero
/// when phase-aligning.
pub const ALIGN_PIVOT: f64 = 1e-14;

/// Default cap on codebook depth: codebooks hold at most `2^20` vectors.
pub const MAX_CODEBOOK_BITS: u32 = 20;
