//! Instrumentation for the convergence analysis: Gram matrices, their
//! infinite-width limit, weight drift, activation flips and the closed-form
//! bounds they are compared against.

mod bounds;
mod dynamics;
mod gram;
mod hinf;
mod report;
mod scaling;
mod trajectory;

pub use bounds::{
    certification_time, check_envelope, drift_bound, flip_fraction_bound, gram_shift_bound,
    loss_envelope, theorem_thresholds, Envelope, EnvelopeCheck, ThresholdReport, KAPPA,
};
pub use dynamics::{dynamics_residual, halving_ratios, DynamicsResidual};
pub use gram::{
    gram_closed_form, gram_jacobian, gram_matrix, gram_snapshot_fast, standard_gram, GramSnapshot,
    GRAM_CONSISTENCY_TOL,
};
pub use hinf::{estimate_h_infinity, HInfinityEstimate, DEFAULT_M_PROBE, DEFAULT_NUM_INITS};
pub use report::{
    DriftCheck, FlipDiagnostic, GramShiftDiagnostic, ReportContext, TheoryReport,
    TrajectoryCsvWriter, TrajectoryPoint, DRIFT_SLACK, TRAJECTORY_HEADER,
};
pub use scaling::{check_l0_scaling, linear_fit, L0ScalingReport, LinearFit, ScalingCell};
pub use trajectory::{
    count_indicator_flips, gram_shift, measure_drift, FlipCounts, EXHAUSTIVE_FLIP_MAX_N,
    SAMPLED_FLIP_TRIPLES,
};
