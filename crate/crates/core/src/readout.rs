//! Resistance estimators, the readout-error sweep and compliance reporting.

use crate::controller::{Activation, Mode, OperationRequest, Selector};
use crate::device::DeviceModel;
use crate::error::{ConfigError, Error, Result};
use crate::fabric::{kelvin_sense_paths, Address, Array, PixelFlavour};
use crate::solver::{observe, solve_activation, Observables, SolveOptions, TransientTrace};

/// Maximum tolerable current through one device.
pub const COMPLIANCE_LIMIT: f64 = 20e-3;
/// Static power budget of the idle array.
pub const IDLE_POWER_BUDGET: f64 = 400e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub v_pad: f64,
    /// Top-plate rail: 0 V on the NMOS path, VDDH on the PMOS path.
    pub v_tp: f64,
    pub i_pad: f64,
    pub v_bl_kelvin: Option<f64>,
    pub v_bl: Option<f64>,
    pub mode: Mode,
    pub addr: Address,
}

impl Measurement {
    pub fn exceeds_compliance(&self) -> bool {
        self.i_pad.abs() > COMPLIANCE_LIMIT
    }
}

/// `(V_PAD - V_TP) / I_PAD`; `+inf` for an open circuit.
pub fn estimate_conventional(m: &Measurement) -> f64 {
    if m.i_pad == 0.0 {
        return f64::INFINITY;
    }
    ((m.v_pad - m.v_tp) / m.i_pad).abs()
}

/// `(V_BL_KELVIN - V_BL) / I_PAD`; `+inf` for an open circuit.
pub fn estimate_kelvin(m: &Measurement) -> Result<f64> {
    let (Some(vk), Some(vb)) = (m.v_bl_kelvin, m.v_bl) else {
        return Err(Error::Capability { addr: m.addr, what: "Kelvin readout" });
    };
    if m.i_pad == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(((vk - vb) / m.i_pad).abs())
}

pub fn relative_error(estimate: f64, truth: f64) -> f64 {
    ((estimate - truth) / truth).abs()
}

/// Solves `req` at its steady in-pulse state and samples the pads.
pub fn measure(array: &Array, req: &OperationRequest, opts: SolveOptions) -> Result<Measurement> {
    req.validate()?;
    let act = Activation::in_pulse(req);
    let (graph, sol) = solve_activation(array, &act, opts)?;
    Ok(measurement_from(array, req, &act, &observe(&graph, &sol, req.addr)))
}

/// Pad readings of one solved sample. Kelvin fields are present only while
/// the probe of a Kelvin pixel is enabled.
pub fn measurement_from(array: &Array, req: &OperationRequest, act: &Activation, obs: &Observables) -> Measurement {
    let kelvin = array.flavour(req.addr) == PixelFlavour::Kelvin2T1R && act.ib_ctrl;
    Measurement {
        v_pad: obs.v_pad,
        v_tp: match req.selector() {
            Selector::Nmos => 0.0,
            Selector::Pmos => req.vddh,
        },
        i_pad: obs.i_pad,
        v_bl_kelvin: kelvin.then_some(obs.v_kelvin_pad),
        v_bl: kelvin.then_some(obs.v_bl_pad),
        mode: req.mode,
        addr: req.addr,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutEstimate {
    pub true_r: f64,
    pub r_conventional: f64,
    pub r_kelvin: Option<f64>,
    pub err_conventional: f64,
    pub err_kelvin: Option<f64>,
}

impl ReadoutEstimate {
    pub fn from_measurement(m: &Measurement, true_r: f64) -> Self {
        let r_conventional = estimate_conventional(m);
        let r_kelvin = estimate_kelvin(m).ok();
        Self {
            true_r,
            r_conventional,
            r_kelvin,
            err_conventional: relative_error(r_conventional, true_r),
            err_kelvin: r_kelvin.map(|r| relative_error(r, true_r)),
        }
    }
}

/// `per_decade` log-spaced points from `start` to `stop`, both included.
pub fn log_spaced(start: f64, stop: f64, per_decade: usize) -> Vec<f64> {
    let decades = (stop / start).log10();
    let n = (decades * per_decade as f64).round().max(1.0) as usize;
    (0..=n).map(|k| start * 10f64.powf(decades * k as f64 / n as f64)).collect()
}

/// Installs each resistance at the read target and records both estimates.
pub fn error_sweep(array: &Array, r_values: &[f64], read: &OperationRequest, opts: SolveOptions) -> Result<Vec<ReadoutEstimate>> {
    if r_values.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(ConfigError::field("sweep.r_values", "resistances must be positive").into());
    }
    if r_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(ConfigError::field("sweep.r_values", "resistances must be sorted").into());
    }
    kelvin_sense_paths(array, read.addr)?;
    r_values
        .iter()
        .map(|&r| {
            let point = || -> Result<ReadoutEstimate> {
                let arr = array.with_device(read.addr, DeviceModel::ideal(r))?;
                let m = measure(&arr, read, opts)?;
                Ok(ReadoutEstimate::from_measurement(&m, r))
            };
            point().map_err(|e| Error::AtResistance { resistance: r, source: Box::new(e) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplianceFlag {
    pub t_ns: f64,
    pub addr: Address,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceReport {
    pub flags: Vec<ComplianceFlag>,
    /// Largest VDDH supply current seen while every control line was idle.
    pub idle_supply_current: Option<f64>,
    pub idle_current_budget: f64,
}

impl ComplianceReport {
    pub fn idle_within_budget(&self) -> bool {
        self.idle_supply_current.map_or(true, |i| i <= self.idle_current_budget)
    }
}

pub fn compliance_report(trace: &TransientTrace, vddh: f64) -> ComplianceReport {
    let flags = trace
        .samples
        .iter()
        .filter(|s| s.observables.max_device_current > COMPLIANCE_LIMIT)
        .map(|s| ComplianceFlag {
            t_ns: s.t_ns,
            addr: s.observables.max_device_addr,
            current: s.observables.max_device_current,
        })
        .collect();
    let idle_supply_current = trace.idle().map(|s| s.observables.i_supply.abs()).reduce(f64::max);
    ComplianceReport { flags, idle_supply_current, idle_current_budget: IDLE_POWER_BUDGET / vddh }
}
