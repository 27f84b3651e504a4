use thiserror::Error;

use crate::fabric::Address;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("pulse width {width_ns} ns is below the 30 ns minimum")]
    PulseTooShort { width_ns: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("configuration field `{field}`: {reason}")]
    Field { field: String, reason: String },
}

impl ConfigError {
    pub fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Field { field: field.into(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("address ({row}, {col}) is outside the {rows}x{cols} array")]
    Decode { row: usize, col: usize, rows: usize, cols: usize },
    #[error("pulse width {width_ns} ns is below the 30 ns minimum")]
    Timing { width_ns: f64 },
    #[error("{what} = {value} V is outside the allowed range [{min}, {max}] V")]
    Range { what: &'static str, value: f64, min: f64, max: f64 },
    #[error("gate protection: I_B * R = {product} V exceeds 5 V")]
    Protection { product: f64 },
    #[error("invalid request: {0}")]
    Request(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("node `{node}` has no finite-conductance path to ground")]
    FloatingNode { node: String },
    #[error("matrix is numerically singular at unknown `{unknown}`")]
    Singular { unknown: String },
    #[error("device-state iteration did not settle after {iterations} iterations")]
    NonConvergence { iterations: usize, previous: Vec<bool>, last: Vec<bool> },
    #[error("KCL residual {residual:e} A exceeds tolerance {tol:e} A")]
    Residual { residual: f64, tol: f64 },
    #[error("invalid solver option: {0}")]
    Options(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("pixel at ({}, {}) is not a Kelvin pixel: {what}", .addr.row, .addr.col)]
    Capability { addr: Address, what: &'static str },
    #[error("gate breakdown: {0}")]
    Breakdown(String),
    #[error("at t = {t_ns} ns: {source}")]
    AtTime { t_ns: f64, source: Box<Error> },
    #[error("at R = {resistance} ohm: {source}")]
    AtResistance { resistance: f64, source: Box<Error> },
}

impl Error {
    /// Innermost error with time/resistance annotations stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } | Error::AtResistance { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
