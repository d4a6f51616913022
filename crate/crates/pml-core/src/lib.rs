//! Context-aware leakage accounting for linear query workloads released
//! through the Laplace mechanism.
//!
//! Differential privacy prices the Laplace mechanism at `Δ1/b` regardless
//! of what an adversary already knows. When every data class carries prior
//! probability at least `alpha`, the per-outcome (pointwise) leakage admits
//! much tighter bounds. This crate computes them:
//!
//! - [`bounds`]: the exact bound (maximum over extreme-output regions,
//!   indexed by row subsets), its column-pair relaxation, the DP budget,
//!   and the trivial `log(1/alpha)` cap, each with a checkable witness;
//! - [`calibration`]: minimal noise scale meeting a target leakage budget;
//! - [`oracle`]: exact small-instance densities and pointwise leakage, a
//!   seeded mechanism sampler, and a certifier that the exact bound both
//!   dominates observed leakage and is attained by the extremal
//!   construction;
//! - [`workload`]: matrices, generators for the histogram / range /
//!   hierarchical families, and ℓ1 sensitivity.
//!
//! All leakage values are in nats. The numeric core is generic over the
//! scalar type through [`Float`]; `f64` aliases for the main types live at
//! the crate root.

// Negated float comparisons (`!(x > 0)`) are deliberate throughout:
// validation must treat NaN as out of range, which `x <= 0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod calibration;
pub mod error;
pub mod float;
pub mod numeric;
pub mod oracle;
pub mod workload;

pub use bounds::{
    build_extremal_prior, dp_epsilon, dp_witness_subset, exact_pml_bound,
    exact_pml_bound_with_cap, pair_bound_value, simplified_pml_bound,
    simplified_tightness_check, subset_bound_value, subset_coefficient, trivial_bound, BoundKind,
    BoundResult, BoundWitness, PriorClass, DEFAULT_SUBSET_CAP, MAX_SUBSET_CAP,
};
pub use calibration::{min_noise_for_epsilon, CalibrationResult, MAX_BISECT_ITERS};
pub use error::{Error, Result};
pub use float::Float;
pub use oracle::{
    certify_bound, conditional_density, enumerate_histograms, extreme_outputs, histogram_prob,
    output_density, pointwise_leakage, sample_mechanism, CertifyReport, HistogramState,
    ProductPrior, ENUMERATION_CAP,
};
pub use workload::{
    column_l1_distance, kron, make_haar_workload, make_histogram_workload, make_range_workload,
    parse_workload_csv, sensitivity_l1, workload_to_csv, Matrix, Workload, GENERATOR_NAME,
};

/// `f64` instantiations of the generic core types.
pub type Matrix64 = workload::Matrix<f64>;
pub type Workload64 = workload::Workload<f64>;
pub type PriorClass64 = bounds::PriorClass<f64>;
pub type BoundResult64 = bounds::BoundResult<f64>;
pub type CalibrationResult64 = calibration::CalibrationResult<f64>;
pub type ProductPrior64 = oracle::ProductPrior<f64>;
pub type CertifyReport64 = oracle::CertifyReport<f64>;
