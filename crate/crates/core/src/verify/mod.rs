//! Independent oracles and analytic benchmarks for the solver.
//!
//! None of these share code with the iterative solver beyond the model
//! definitions in [`crate::constitutive`]: the active-set oracle enumerates
//! sign patterns of a dense quadratic program, the smoothed oracle runs
//! gradient descent on a Huber-regularized problem, and the analytic
//! benchmark follows a scalar return map.

mod active_set;
mod analytic;
mod golden;
mod smoothed;
mod suite;
mod tiny;

pub use active_set::{oracle_active_set, ActiveSetSolution};
pub use analytic::{analytic_single_slip, return_map_single_slip};
pub use golden::{golden_section_by_difference, prox_iso_reference, prox_kin_reference};
pub use smoothed::{oracle_smoothed, SmoothedSolution};
pub use suite::{
    identity_defects, prox_deviation, run_suite, shear_benchmark, shear_benchmark_model, smoothing_parameters, state_gap,
    tiny_gaps, CheckResult, ScenarioModel, SuiteOptions,
};
pub use tiny::{TinyFamily, TinyProblem, MAX_TINY_DOFS};
