//! Rate-independent single-crystal gradient plasticity on uniform grids.
//!
//! Each load step minimizes a convex incremental functional in the
//! displacement, the slips and (for isotropic hardening) the hardening
//! variables. [`solver::run_evolution`] drives a whole load program;
//! [`verify`] holds reference oracles and the self-check suite.
//!
//! ```
//! use gradplast::solver::{run_evolution, LoadProgram, SolverConfig};
//! use gradplast::verify::shear_benchmark_model;
//!
//! let (spec, basis, m) = shear_benchmark_model(4);
//! let load = LoadProgram::monotone_shear(2, 0.3, spec.cells()).unwrap();
//! let steps = run_evolution(&m, &basis, &spec, &load, &SolverConfig::default()).unwrap();
//! assert!(steps[1].report.kkt.max() <= 1e-6);
//! ```

pub mod algebra;
pub mod app;
pub mod constitutive;
pub mod error;
pub mod grid;
pub mod snapshot;
pub mod solver;
pub mod verify;
