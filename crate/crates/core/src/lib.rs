//! Behavioral simulator for a high-voltage 16x16 2T1R memristor array with
//! per-pixel Kelvin voltage sensing.
//!
//! The crate is layered bottom-up:
//!
//! - [`device`]: memristor, switch and diode models and the gate-swing check
//! - [`controller`]: address decoding, pulse sequencing, level shifting
//! - [`fabric`]: the two-flavour array and its lowering to a netlist
//! - [`forming`]: the electroforming staircase
//! - [`solver`]: nodal DC solver and quasi-static transient stepping
//! - [`readout`]: conventional and Kelvin estimators, error sweeps,
//!   compliance reporting

pub mod circuit;
pub mod controller;
pub mod device;
pub mod error;
pub mod fabric;
pub mod forming;
pub mod readout;
pub mod solver;

pub use error::{Error, Result};
