//! Electroforming by a voltage staircase.

use crate::controller::{sequence_operation, Mode, OperationRequest};
use crate::device::DeviceModel;
use crate::error::{ConfigError, Result};
use crate::fabric::Address;
use crate::solver::{run_transient, LiveArray, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Staircase {
    pub v_start: f64,
    pub v_stop: f64,
    pub v_step: f64,
    pub pulse_width_ns: f64,
}

impl Default for Staircase {
    fn default() -> Self {
        Self { v_start: 10.0, v_stop: 22.0, v_step: 1.0, pulse_width_ns: 100.0 }
    }
}

impl Staircase {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.v_step > 0.0) {
            return Err(ConfigError::field("form.v_step", "must be positive"));
        }
        if !(self.v_start > 0.0 && self.v_start <= self.v_stop) {
            return Err(ConfigError::field("form.v_start", "must be positive and not above form.v_stop"));
        }
        Ok(())
    }

    pub fn levels(&self) -> Vec<f64> {
        let n = ((self.v_stop - self.v_start) / self.v_step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.v_start + k as f64 * self.v_step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormingStep {
    pub v_program: f64,
    /// Largest in-pulse pad current magnitude.
    pub i_peak: f64,
    pub formed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormingOutcome {
    pub steps: Vec<FormingStep>,
    /// Staircase level at which the device formed.
    pub formed_at: Option<f64>,
}

/// Pulses `addr` up the staircase until it forms or the top is reached.
/// Cells that are not bistable, or already formed, get no pulses.
pub fn form_cell(live: &mut LiveArray, addr: Address, plan: &Staircase, step_ns: f64, opts: SolveOptions) -> Result<FormingOutcome> {
    plan.validate()?;
    let mut steps = Vec::new();
    for v in plan.levels() {
        match live.array.device(addr) {
            DeviceModel::Bistable(b) if !b.formed => {}
            _ => break,
        }
        let req = OperationRequest::new(Mode::Form, addr, plan.pulse_width_ns, v).with_vddh(live.array.config().vddh);
        let timeline = sequence_operation(&req)?;
        let trace = run_transient(live, &req, &timeline, step_ns, opts)?;
        let i_peak = trace.in_pulse().map(|s| s.observables.i_pad.abs()).fold(0.0, f64::max);
        let formed = live.array.device(addr).as_bistable().is_some_and(|b| b.formed);
        steps.push(FormingStep { v_program: v, i_peak, formed });
        if formed {
            return Ok(FormingOutcome { steps, formed_at: Some(v) });
        }
    }
    Ok(FormingOutcome { steps, formed_at: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::Bistable;
    use crate::fabric::{build_array, ArrayConfig};

    #[test]
    fn default_levels() {
        let l = Staircase::default().levels();
        assert_eq!(l.len(), 13);
        assert_eq!(l[0], 10.0);
        assert_eq!(*l.last().unwrap(), 22.0);
    }

    #[test]
    fn stops_at_first_forming_step() {
        let mut cfg = ArrayConfig { rows: 2, cols: 2, ..ArrayConfig::default() };
        cfg.default_device = DeviceModel::Bistable(Bistable::default());
        let mut live = LiveArray::new(build_array(cfg).unwrap());
        let out = form_cell(&mut live, Address::new(1, 1), &Staircase::default(), 5.0, SolveOptions::PROGRAMMING).unwrap();
        assert_eq!(out.formed_at, Some(18.0));
        assert_eq!(out.steps.len(), 9);
        assert!(out.steps[..8].iter().all(|s| !s.formed));
        // Pristine cell draws ~V / 1 GOhm before it forms.
        assert!(out.steps[0].i_peak < 20e-9);
        assert!(!live.array.device(Address::new(0, 0)).as_bistable().unwrap().formed);
    }

    #[test]
    fn never_forms_below_threshold() {
        let mut cfg = ArrayConfig { rows: 2, cols: 2, ..ArrayConfig::default() };
        cfg.default_device = DeviceModel::Bistable(Bistable { v_form: 30.0, ..Bistable::default() });
        let mut live = LiveArray::new(build_array(cfg).unwrap());
        let out = form_cell(&mut live, Address::new(0, 0), &Staircase::default(), 5.0, SolveOptions::PROGRAMMING).unwrap();
        assert_eq!(out.formed_at, None);
        assert_eq!(out.steps.len(), 13);
    }
}
