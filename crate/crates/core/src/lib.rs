//! Weighted parametric multiple test procedures under the closure principle.
//!
//! The crate is organised bottom-up:
//!
//! * [`normal`], [`mvn`], [`root`]: univariate normal functions, multivariate
//!   normal rectangle probabilities by randomized lattice QMC, and a
//!   bracketing solver for monotone noisy functions.
//! * [`weighting`]: weighting schemes `w_j(J)`, their generation from
//!   weight-propagation graphs, and proportional rescaling.
//! * [`intersection`]: tests of a single intersection hypothesis (weighted
//!   Bonferroni and the weighted parametric variants).
//! * [`closure`]: the full closed procedure, consonance checks and the
//!   step-down and single-step shortcuts.
//! * [`simulation`]: Monte Carlo estimates of familywise error and power.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closure;
pub mod correlation;
pub mod error;
pub mod intersection;
pub mod mvn;
pub mod normal;
pub mod root;
pub mod simulation;
pub mod subset;
pub mod weighting;

pub use closure::{
    check_consonance, run_closure, run_closure_with, weighted_dunnett_single_step, xie_shortcut, ClosureReport,
    ConsonanceReport, CriticalTable, SingleStepResult, StepDownResult, TestProblem, Violation,
};
pub use correlation::CorrelationModel;
pub use error::{Error, Result};
pub use intersection::{
    bonferroni_pvalue, local_levels, parametric_c, parametric_pvalue, partitioned_common, partitioned_pvalue_subsets,
    partitioned_subset_scalings, xie_pvalue, BlockScaling, CommonTest, IntersectionResult, Method, Precision, Scaling,
};
pub use mvn::{mvn_rectangle, union_exceedance, CorrelationMatrix, ProbEstimate};
pub use normal::{std_normal_cdf, std_normal_quantile};
pub use root::solve_monotone;
pub use simulation::{simulate, SimReport, SimScenario};
pub use subset::{nonempty_subsets, IndexSet, MAX_HYPOTHESES};
pub use weighting::{scheme_from_graph, xie_scheme, GraphSpec, SchemeEntry, SchemeProperties, WeightingScheme};
