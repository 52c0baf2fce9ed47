//! Shared numerical tolerances.
//!
//! All test instances are exact small-integer tensors, so rank decisions use
//! a tight relative threshold with an absolute floor of one.

/// Relative threshold below which a singular value counts as zero.
pub const RANK_REL_TOL: f64 = 1e-9;

/// Singular values below `RANK_REL_TOL * max(sigma_max, 1)` count as zero.
pub fn rank_tolerance(sigma_max: f64) -> f64 {
    RANK_REL_TOL * sigma_max.max(1.0)
}

/// Entrywise skew-symmetry budget for assembled J operators.
pub const SKEW_ABS_TOL: f64 = 1e-12;

/// Default gradient-norm stop for the sphere maximizer.
pub const DEFAULT_GRAD_TOL: f64 = 1e-9;

/// Default simplex-size stop for the outer metric search.
pub const DEFAULT_SIMPLEX_TOL: f64 = 1e-6;
