//! Nodal DC solver with piecewise-linear device iteration, plus the
//! quasi-static transient stepper.

pub mod lu;
pub mod mna;
pub mod transient;

pub use mna::{assemble, check_grounded, kcl_residual, solve_dc, MnaSystem, Solution, SolveOptions};
pub use transient::{
    gate_violations, observe, run_transient, sample_times, solve_activation, GraphSource, LiveArray, Observables,
    TransientSample, TransientTrace,
};
