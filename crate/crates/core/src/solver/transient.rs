//! Quasi-static stepping over a control timeline.

use crate::circuit::{CircuitGraph, Element, GateRef, NodeRole};
use crate::controller::{Activation, ControlTimeline, Line, OperationRequest};
use crate::device::{check_gate_breakdown, update_device_state, BreakdownViolation, DeviceModel};
use crate::error::{Error, Result, SolverError};
use crate::fabric::{netlist_for_operation, Address, Array};

use super::mna::{solve_dc, SolveOptions, Solution};

/// Produces the netlist for each activation and reacts to completed pulses.
pub trait GraphSource {
    fn graph_for(&self, act: &Activation) -> Result<CircuitGraph>;

    /// Called once after the word-line pulse of `req` ends.
    fn pulse_completed(&mut self, _req: &OperationRequest) -> Result<()> {
        Ok(())
    }
}

impl GraphSource for Array {
    fn graph_for(&self, act: &Activation) -> Result<CircuitGraph> {
        netlist_for_operation(self, act)
    }
}

/// Array whose bistable devices switch at the end of each pulse.
#[derive(Debug, Clone)]
pub struct LiveArray {
    pub array: Array,
}

impl LiveArray {
    pub fn new(array: Array) -> Self {
        Self { array }
    }
}

impl GraphSource for LiveArray {
    fn graph_for(&self, act: &Activation) -> Result<CircuitGraph> {
        netlist_for_operation(&self.array, act)
    }

    fn pulse_completed(&mut self, req: &OperationRequest) -> Result<()> {
        if let DeviceModel::Bistable(b) = self.array.device(req.addr) {
            let next = update_device_state(&b, req.programming_voltage(), req.pulse_width_ns)?;
            self.array.set_device(req.addr, DeviceModel::Bistable(next));
        }
        Ok(())
    }
}

/// Quantities read off one solved sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    /// Current delivered by the pad source into the array.
    pub i_pad: f64,
    /// Current drawn from the VDDH supply.
    pub i_supply: f64,
    pub v_pad: f64,
    pub v_top: f64,
    pub v_bit_line: f64,
    pub v_kelvin_pad: f64,
    pub v_bl_pad: f64,
    /// Current through the selected device, top to bottom electrode.
    pub i_device: f64,
    /// Largest device current magnitude anywhere in the array.
    pub max_device_current: f64,
    pub max_device_addr: Address,
}

pub fn observe(graph: &CircuitGraph, sol: &Solution, addr: Address) -> Observables {
    let node = |role| graph.node(role).map_or(f64::NAN, |n| sol.voltage(n));
    let source = |label| graph.voltage_source(label).map_or(0.0, |k| sol.source_currents[k]);
    let (mut max_i, mut max_addr, mut i_device) = (0.0f64, addr, f64::NAN);
    for (k, a) in graph.memristor_branches() {
        let i = sol.branch_currents[k];
        if a == addr {
            i_device = i;
        }
        if i.abs() > max_i {
            max_i = i.abs();
            max_addr = a;
        }
    }
    Observables {
        i_pad: source("vpad"),
        i_supply: source("vddh"),
        v_pad: node(NodeRole::Pad),
        v_top: node(NodeRole::TopElectrode(addr)),
        v_bit_line: node(NodeRole::BitLine(addr.col)),
        v_kelvin_pad: node(NodeRole::KelvinPad),
        v_bl_pad: node(NodeRole::BitLinePad),
        i_device,
        max_device_current: max_i,
        max_device_addr: max_addr,
    }
}

/// Every switch whose gate-source or bulk-source differential breaks the
/// 5 V rule in `sol`.
pub fn gate_violations(graph: &CircuitGraph, sol: &Solution) -> Vec<BreakdownViolation> {
    graph
        .branches
        .iter()
        .filter_map(|br| match br.element {
            Element::Switch { model, terminals, .. } => {
                let v_s = sol.voltage(terminals.source);
                let v_g = match terminals.gate {
                    GateRef::Fixed(v) => v,
                    GateRef::Node(n) => sol.voltage(n),
                    GateRef::FollowsSource => v_s,
                };
                check_gate_breakdown(&br.label, v_g, v_s, sol.voltage(terminals.bulk), &model).err()
            }
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientSample {
    pub t_ns: f64,
    pub activation: Activation,
    pub observables: Observables,
    pub solution: Solution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientTrace {
    pub samples: Vec<TransientSample>,
    pub step_ns: f64,
}

impl TransientTrace {
    /// Samples strictly inside the word-line pulse.
    pub fn in_pulse(&self) -> impl Iterator<Item = &TransientSample> {
        self.samples.iter().filter(|s| s.activation.wl_n || s.activation.wl_p)
    }

    pub fn idle(&self) -> impl Iterator<Item = &TransientSample> {
        self.samples.iter().filter(|s| s.activation.is_idle())
    }
}

/// Regular grid on `[0, duration]` merged with the event boundaries.
pub fn sample_times(timeline: &ControlTimeline, step_ns: f64) -> Vec<f64> {
    let n = (timeline.duration_ns / step_ns).floor() as usize;
    let mut ts: Vec<f64> = (0..=n).map(|k| k as f64 * step_ns).collect();
    ts.extend(timeline.boundaries());
    ts.push(timeline.duration_ns);
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    ts
}

pub fn solve_activation<G: GraphSource + ?Sized>(source: &G, act: &Activation, opts: SolveOptions) -> Result<(CircuitGraph, Solution)> {
    let graph = source.graph_for(act)?;
    let sol = solve_dc(&graph, opts)?;
    Ok((graph, sol))
}

/// Runs `req` over `timeline`, one DC solve per distinct activation.
///
/// Gate-swing rules are checked at every event boundary; a violation aborts
/// the run with the device named.
pub fn run_transient<G: GraphSource + ?Sized>(
    source: &mut G,
    req: &OperationRequest,
    timeline: &ControlTimeline,
    step_ns: f64,
    opts: SolveOptions,
) -> Result<TransientTrace> {
    if !(step_ns >= 1.0) {
        return Err(SolverError::Options(format!("transient step must be at least 1 ns (got {step_ns})")).into());
    }
    timeline.validate()?;
    let boundaries = timeline.boundaries();
    let word_line_ends: Vec<f64> = timeline
        .events
        .iter()
        .filter(|e| !e.level && matches!(e.line, Line::WlN(_) | Line::WlP(_)))
        .map(|e| e.t_ns)
        .collect();

    let mut samples = Vec::new();
    let mut cache: Option<(Activation, Observables, Solution)> = None;
    let mut completed = 0;
    for t in sample_times(timeline, step_ns) {
        while completed < word_line_ends.len() && word_line_ends[completed] <= t {
            source.pulse_completed(req).map_err(|e| at(t, e))?;
            cache = None;
            completed += 1;
        }
        let act = timeline.activation_at(req, t);
        let on_boundary = boundaries.iter().any(|b| (b - t).abs() < 1e-9);
        let reuse = matches!(&cache, Some((a, _, _)) if *a == act) && !on_boundary;
        if !reuse {
            let (graph, sol) = solve_activation(source, &act, opts).map_err(|e| at(t, e))?;
            if on_boundary {
                if let Some(v) = gate_violations(&graph, &sol).first() {
                    return Err(at(t, Error::Breakdown(v.to_string())));
                }
            }
            cache = Some((act, observe(&graph, &sol, req.addr), sol));
        }
        let (_, obs, sol) = cache.as_ref().expect("cache filled above");
        samples.push(TransientSample { t_ns: t, activation: act, observables: *obs, solution: sol.clone() });
    }
    Ok(TransientTrace { samples, step_ns })
}

fn at(t_ns: f64, e: Error) -> Error {
    Error::AtTime { t_ns, source: Box::new(e) }
}
