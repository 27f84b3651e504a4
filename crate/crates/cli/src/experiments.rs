//! The six experiments. Each turns a validated config into one CSV table.

use hvarray::controller::{sequence_operation, Mode, OperationRequest, Selector};
use hvarray::device::{DeviceModel, ResistiveState};
use hvarray::error::ConfigError;
use hvarray::fabric::{build_array, Address, Array};
use hvarray::forming::form_cell;
use hvarray::readout::{error_sweep, estimate_conventional, estimate_kelvin, log_spaced, measure, measurement_from, COMPLIANCE_LIMIT};
use hvarray::solver::{run_transient, GraphSource, LiveArray, SolveOptions, TransientTrace};
use hvarray::Result;

use crate::config::{ExperimentConfig, ReadPolarity, WriteMode};
use crate::trace::{CsvTrace, Field};

pub const FORMING_FAILED: &str = "forming failed";

fn array(cfg: &ExperimentConfig) -> Result<Array> {
    Ok(build_array(cfg.array_config())?)
}

fn read_request(cfg: &ExperimentConfig, addr: Address) -> OperationRequest {
    let e = &cfg.experiment;
    let vddh = cfg.array.vddh;
    let v = e.read_voltage.abs();
    match e.read_polarity {
        ReadPolarity::Positive => OperationRequest::new(Mode::Read, addr, e.pulse_width_ns, v).with_vddh(vddh),
        ReadPolarity::Negative => OperationRequest {
            read_selector: Selector::Pmos,
            ..OperationRequest::new(Mode::Read, addr, e.pulse_width_ns, vddh - v).with_vddh(vddh)
        },
    }
}

fn transient(live: &mut LiveArray, req: &OperationRequest, step_ns: f64, opts: SolveOptions) -> Result<TransientTrace> {
    req.validate()?;
    let timeline = sequence_operation(req)?;
    run_transient(live, req, &timeline, step_ns, opts)
}

fn state_name(d: &DeviceModel) -> &'static str {
    match d {
        DeviceModel::IdealResistor { .. } => "ideal",
        DeviceModel::Bistable(b) if !b.formed => "pristine",
        DeviceModel::Bistable(b) => match b.state {
            ResistiveState::Hrs => "hrs",
            ResistiveState::Lrs => "lrs",
        },
    }
}

pub fn run_read(cfg: &ExperimentConfig) -> Result<CsvTrace> {
    let addr = cfg.experiment.address();
    let mut live = LiveArray::new(array(cfg)?);
    let req = read_request(cfg, addr);
    let tr = transient(&mut live, &req, cfg.experiment.step_ns, cfg.solver.read())?;
    let mut out = CsvTrace::new(&["t_ns", "i_pad_A", "v_bl_kelvin_V", "v_bl_V", "r_conventional_ohm", "r_kelvin_ohm"]);
    for s in &tr.samples {
        let m = measurement_from(&live.array, &req, &s.activation, &s.observables);
        let in_pulse = s.activation.wl_n || s.activation.wl_p;
        let r_conv = in_pulse.then(|| estimate_conventional(&m));
        let r_kelvin = if in_pulse { estimate_kelvin(&m).ok() } else { None };
        out.push(vec![s.t_ns.into(), m.i_pad.into(), m.v_bl_kelvin.into(), m.v_bl.into(), r_conv.into(), r_kelvin.into()]);
    }
    Ok(out)
}

pub fn run_write(cfg: &ExperimentConfig) -> Result<CsvTrace> {
    let e = &cfg.experiment;
    let addr = e.address();
    let vddh = cfg.array.vddh;
    let v = e.voltage.abs();
    let req = match e.mode {
        WriteMode::Set => OperationRequest::new(Mode::Set, addr, e.pulse_width_ns, v),
        WriteMode::Reset => OperationRequest::new(Mode::Reset, addr, e.pulse_width_ns, vddh - v),
    }
    .with_vddh(vddh);
    let req = OperationRequest { ib_ctrl_during_write: e.ib_ctrl_during_write, ..req };
    let mut live = LiveArray::new(array(cfg)?);
    let tr = transient(&mut live, &req, e.step_ns, cfg.solver.programming())?;
    let final_state = state_name(&live.array.device(addr));
    let mut out = CsvTrace::new(&["t_ns", "v_pad_V", "i_pad_A", "i_device_A", "compliance", "final_state"]);
    for s in &tr.samples {
        let o = &s.observables;
        out.push(vec![
            s.t_ns.into(),
            o.v_pad.into(),
            o.i_pad.into(),
            o.i_device.into(),
            (o.max_device_current > COMPLIANCE_LIMIT).into(),
            final_state.into(),
        ]);
    }
    Ok(out)
}

pub fn run_form(cfg: &ExperimentConfig) -> Result<CsvTrace> {
    let addr = cfg.experiment.address();
    let arr = array(cfg)?;
    if arr.device(addr).as_bistable().is_none() {
        return Err(ConfigError::field("device.kind", format!("cell ({}, {}) must be bistable to form", addr.row, addr.col)).into());
    }
    let mut live = LiveArray::new(arr);
    let plan = cfg.form.staircase();
    let res = form_cell(&mut live, addr, &plan, cfg.experiment.step_ns, cfg.solver.programming())?;
    let mut out = CsvTrace::new(&["v_program_V", "i_peak_A", "formed", "result"]);
    for s in &res.steps {
        out.push(vec![s.v_program.into(), s.i_peak.into(), s.formed.into(), (if s.formed { "formed" } else { "" }).into()]);
    }
    if res.formed_at.is_none() {
        let top = res.steps.last().map_or(plan.v_stop, |s| s.v_program);
        out.push(vec![top.into(), Field::Empty, false.into(), FORMING_FAILED.into()]);
    }
    Ok(out)
}

pub fn run_iv_sweep(cfg: &ExperimentConfig) -> Result<CsvTrace> {
    let addr = cfg.experiment.address();
    let vddh = cfg.array.vddh;
    let opts = cfg.solver.programming();
    let mut live = LiveArray::new(array(cfg)?);
    let mut out = CsvTrace::new(&["v_set_V", "i_pad_A", "r_total_ohm", "error"]);
    for v in cfg.sweep.grid().points() {
        let req = OperationRequest::programming(addr, v, cfg.experiment.pulse_width_ns, vddh);
        let point = measure(&live.array, &req, opts).and_then(|m| {
            live.pulse_completed(&req)?;
            Ok(m)
        });
        match point {
            Ok(m) => {
                // Set-polarity current, so the sign follows v.
                let i = if req.selector() == Selector::Pmos { -m.i_pad } else { m.i_pad };
                let r = (v != 0.0 && i != 0.0).then(|| v / i);
                out.push(vec![v.into(), i.into(), r.into(), Field::Empty]);
            }
            Err(e) => out.push(vec![v.into(), Field::Empty, Field::Empty, e.to_string().as_str().into()]),
        }
    }
    Ok(out)
}

pub fn run_fig5(cfg: &ExperimentConfig) -> Result<CsvTrace> {
    let addr = cfg.experiment.address();
    let base = array(cfg)?;
    let vddh = cfg.array.vddh;
    let pw = cfg.experiment.pulse_width_ns;
    let cases = [
        ("read_10Mohm", 10e6, OperationRequest::new(Mode::Read, addr, pw, cfg.experiment.read_voltage.abs()), cfg.solver.read()),
        ("write_1kohm", 1e3, OperationRequest::new(Mode::Set, addr, pw, vddh), cfg.solver.programming()),
    ];
    let mut out = CsvTrace::new(&["trace", "t_ns", "v_pad_V", "i_pad_A"]);
    for (name, r, req, opts) in cases {
        let mut live = LiveArray::new(base.with_device(addr, DeviceModel::ideal(r))?);
        let tr = transient(&mut live, &req.with_vddh(vddh), cfg.experiment.step_ns, opts)?;
        for s in &tr.samples {
            out.push(vec![name.into(), s.t_ns.into(), s.observables.v_pad.into(), s.observables.i_pad.into()]);
        }
    }
    Ok(out)
}

pub fn run_fig6(cfg: &ExperimentConfig) -> Result<CsvTrace> {
    let addr = cfg.experiment.address();
    let sw = &cfg.sweep;
    let rs = log_spaced(sw.r_start, sw.r_stop, sw.per_decade);
    let points = error_sweep(&array(cfg)?, &rs, &read_request(cfg, addr), cfg.solver.read())?;
    let mut out = CsvTrace::new(&["r_true_ohm", "r_conventional_ohm", "r_kelvin_ohm", "err_conventional", "err_kelvin"]);
    for p in points {
        out.push(vec![p.true_r.into(), p.r_conventional.into(), p.r_kelvin.into(), p.err_conventional.into(), p.err_kelvin.into()]);
    }
    Ok(out)
}
