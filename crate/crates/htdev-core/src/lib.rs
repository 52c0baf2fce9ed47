//! Numerical toolkit for the H-type deviation of step-two Carnot groups.
//!
//! A step-two Carnot group is described by its rank `m`, vertical dimension
//! `p`, and antisymmetric structure constants over an orthonormal horizontal
//! basis. The deviation `delta(G, g_v)` measures, in normalized
//! Hilbert-Schmidt size, how far the squared Kaplan J operator is from minus
//! the identity over the vertical unit sphere; `delta(G)` infimizes over
//! positive-definite vertical metrics. The crate provides:
//!
//! * [`algebra`] - exact structure-constant representation, the J operator,
//!   adjoint matrices, norms, kernel and image bases;
//! * [`zoo`] - constructors for the named families (Heisenberg, anisotropic,
//!   free, quaternionic, products, random) with closed-form deviations;
//! * [`deviation`] - the inner sphere maximizer, the outer metric search,
//!   the semimetric extension, and product-lemma statistics;
//! * [`submersion`] - constructive submersions onto the first Heisenberg
//!   group, condition verification, and the degenerating metric family;
//! * [`rigidity`] - approximate H-type constants and algebraic H-type
//!   certificates.
//!
//! Everything is immutable after construction and safe to share across
//! threads; multistart searches run in parallel with deterministic,
//! schedule-independent reductions.

pub mod algebra;
pub mod deviation;
mod optim;
pub mod rigidity;
pub mod submersion;
pub mod tol;
pub mod zoo;

pub use algebra::{
    ad_matrix, defect, j_image, j_matrix, kernel_complement, matrix_norms, validate_algebra,
    AdjointMatrix, AlgebraError, Bracket, MatrixNorms, MetricError, SkewOperator, StepTwoAlgebra,
    ValidationReport, VerticalForm, VerticalMetric, VerticalSemimetric,
};
pub use deviation::{
    deviation_given_metric, deviation_given_semimetric, optimize_metric, product_lemma_stats,
    DeviationError, DeviationResult, InnerOpts, MetricSearchResult, OuterOpts, ProductLemmaStats,
};
pub use rigidity::{
    approx_htype_constants, is_algebraic_htype, rigidity_check, AlgebraicHtype,
    BiLipschitzConstants, RigidityError, RigidityOpts, RigidityReport,
};
pub use submersion::{
    bound_via_submersion, build_submersion_to_h1, counterexample_f22n_to_hn, epsilon_metric,
    verify_submersion, PairChoice, SubmersionError, SubmersionMap, SubmersionReport,
};
pub use zoo::{
    anisotropic_heisenberg, free_step2, heisenberg, product, quaternionic_h1, random_algebra,
    with_euclidean_factor, ClosedForm, FamilyDescriptor, Provenance, ZooError,
};

pub use optim::halton_sphere_points;

/// Derives a per-instance seed from a master seed and an index, for batch
/// scans that parallelize across instances.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    optim::splitmix64(master ^ index.wrapping_mul(0x9E3779B97F4A7C15))
}
