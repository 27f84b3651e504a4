//! Behavioral element models: memristive devices, HV MOSFET switches and
//! piecewise-linear diodes, plus the gate-oxide safety check.
//!
//! Every model is evaluated as a linearised branch `i = g * v + i0` for the
//! nodal solver. Voltages follow the branch orientation `v = v(a) - v(b)`.

use std::fmt;

use crate::error::DeviceError;

/// Minimum programming pulse accepted by the array, in nanoseconds.
pub const MIN_PULSE_NS: f64 = 30.0;

/// Gate-swing design rule for every HV transistor in the array.
pub const V_GS_MAX: f64 = 5.0;

/// Tolerance applied on top of [`V_GS_MAX`] by [`check_gate_breakdown`].
/// Hysteresis applied below the knee to a conducting junction.
pub const KNEE_BAND: f64 = 1e-9;
pub const BREAKDOWN_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResistiveState {
    Hrs,
    Lrs,
}

impl fmt::Display for ResistiveState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResistiveState::Hrs => f.write_str("HRS"),
            ResistiveState::Lrs => f.write_str("LRS"),
        }
    }
}

/// Threshold-switching device with a one-time forming step.
///
/// Programming voltages are expressed in set polarity: positive values drive
/// the device towards LRS, negative values towards HRS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bistable {
    pub r_hrs: f64,
    pub r_lrs: f64,
    pub r_pristine: f64,
    pub v_set: f64,
    pub v_reset: f64,
    pub v_form: f64,
    pub formed: bool,
    pub state: ResistiveState,
}

impl Default for Bistable {
    fn default() -> Self {
        Self {
            r_hrs: 10e6,
            r_lrs: 1e3,
            r_pristine: 1e9,
            v_set: 1.2,
            v_reset: -1.2,
            v_form: 18.0,
            formed: false,
            state: ResistiveState::Hrs,
        }
    }
}

impl Bistable {
    pub fn resistance(&self) -> f64 {
        if !self.formed {
            return self.r_pristine;
        }
        match self.state {
            ResistiveState::Hrs => self.r_hrs,
            ResistiveState::Lrs => self.r_lrs,
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let all = [self.r_hrs, self.r_lrs, self.r_pristine, self.v_set, self.v_reset, self.v_form];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(DeviceError::InvalidModel("bistable parameters must be finite".into()));
        }
        if !(self.r_lrs > 0.0 && self.r_lrs < self.r_hrs && self.r_hrs < self.r_pristine) {
            return Err(DeviceError::InvalidModel(format!(
                "bistable resistances must satisfy 0 < r_lrs < r_hrs < r_pristine (got {}, {}, {})",
                self.r_lrs, self.r_hrs, self.r_pristine
            )));
        }
        if !(self.v_reset < 0.0 && 0.0 < self.v_set && self.v_set < self.v_form) {
            return Err(DeviceError::InvalidModel(format!(
                "bistable thresholds must satisfy v_reset < 0 < v_set < v_form (got {}, {}, {})",
                self.v_reset, self.v_set, self.v_form
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeviceModel {
    IdealResistor { resistance: f64 },
    Bistable(Bistable),
}

impl DeviceModel {
    pub fn ideal(resistance: f64) -> Self {
        DeviceModel::IdealResistor { resistance }
    }

    /// Resistance presented to the circuit in the current state.
    pub fn resistance(&self) -> f64 {
        match self {
            DeviceModel::IdealResistor { resistance } => *resistance,
            DeviceModel::Bistable(b) => b.resistance(),
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        match self {
            DeviceModel::IdealResistor { resistance } => {
                if resistance.is_finite() && *resistance > 0.0 {
                    Ok(())
                } else {
                    Err(DeviceError::InvalidModel(format!(
                        "resistance must be positive and finite (got {resistance})"
                    )))
                }
            }
            DeviceModel::Bistable(b) => b.validate(),
        }
    }

    pub fn as_bistable(&self) -> Option<&Bistable> {
        match self {
            DeviceModel::Bistable(b) => Some(b),
            DeviceModel::IdealResistor { .. } => None,
        }
    }
}

/// Piecewise-linear junction: `g_off` below `v_forward`, `g_on` above it,
/// continuous at the knee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiodeModel {
    pub v_forward: f64,
    pub g_on: f64,
    pub g_off: f64,
}

impl Default for DiodeModel {
    fn default() -> Self {
        Self { v_forward: 0.7, g_on: 0.1, g_off: 1e-15 }
    }
}

impl DiodeModel {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let ok = self.v_forward.is_finite()
            && self.v_forward > 0.0
            && self.g_off.is_finite()
            && self.g_off > 0.0
            && self.g_on.is_finite()
            && self.g_on > self.g_off;
        if ok {
            Ok(())
        } else {
            Err(DeviceError::InvalidModel(format!("invalid diode model {self:?}")))
        }
    }

    /// Forward segment selected strictly above the knee; ties resolve to off.
    pub fn conducts_at(&self, v: f64) -> bool {
        v > self.v_forward
    }

    /// Segment after an iteration that left the junction at `v`. A conducting
    /// junction only turns off once it falls clearly below the knee: in the
    /// forward state a junction carrying leakage-scale current solves to the
    /// knee itself, and rounding would otherwise toggle it forever.
    pub fn next_state(&self, on: bool, v: f64) -> bool {
        if on {
            v >= self.v_forward - KNEE_BAND
        } else {
            self.conducts_at(v)
        }
    }

    pub fn stamp_for_state(&self, on: bool) -> Stamp {
        if on {
            Stamp {
                conductance: self.g_on,
                current_offset: (self.g_off - self.g_on) * self.v_forward,
            }
        } else {
            Stamp { conductance: self.g_off, current_offset: 0.0 }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    N,
    P,
}

/// HV MOSFET reduced to an on/off conductance between drain and source.
///
/// The body diode is described in bulk-to-drain orientation (anode at the
/// bulk) and is placed in the netlist separately by the array builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchModel {
    pub polarity: Polarity,
    pub r_on: f64,
    pub r_off: f64,
    /// Gate overdrive above which the channel is considered on.
    pub v_on: f64,
    pub v_gs_max: f64,
    pub body_diode: DiodeModel,
}

impl SwitchModel {
    pub fn new(polarity: Polarity, r_on: f64, r_off: f64) -> Self {
        Self { polarity, r_on, r_off, v_on: 1.0, v_gs_max: V_GS_MAX, body_diode: DiodeModel::default() }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.r_on.is_finite() && self.r_off.is_finite() && self.r_on > 0.0 && self.r_on < self.r_off) {
            return Err(DeviceError::InvalidModel(format!(
                "switch needs 0 < r_on < r_off (got r_on = {}, r_off = {})",
                self.r_on, self.r_off
            )));
        }
        if self.v_gs_max != V_GS_MAX {
            return Err(DeviceError::InvalidModel(format!(
                "switch v_gs_max must be {V_GS_MAX} V (got {})",
                self.v_gs_max
            )));
        }
        if !(self.v_on > 0.0 && self.v_on <= self.v_gs_max) {
            return Err(DeviceError::InvalidModel(format!("switch turn-on level {} out of range", self.v_on)));
        }
        self.body_diode.validate()
    }

    pub fn is_on(&self, v_gs: f64) -> bool {
        match self.polarity {
            Polarity::N => v_gs >= self.v_on,
            Polarity::P => -v_gs >= self.v_on,
        }
    }
}

/// Linearised branch contribution: `i = conductance * v + current_offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stamp {
    pub conductance: f64,
    pub current_offset: f64,
}

impl Stamp {
    pub fn current(&self, v: f64) -> f64 {
        self.conductance * v + self.current_offset
    }
}

/// Borrowed view over any element the solver can stamp.
#[derive(Debug, Clone, Copy)]
pub enum ElementRef<'a> {
    Device(&'a DeviceModel),
    Switch(&'a SwitchModel),
    Diode(&'a DiodeModel),
}

/// Linearised stamp of `element` at `branch_voltage`.
///
/// `gate_drive` is the gate-source voltage and must be given for switches
/// and only for switches.
pub fn element_stamp(element: ElementRef<'_>, branch_voltage: f64, gate_drive: Option<f64>) -> Result<Stamp, DeviceError> {
    if !branch_voltage.is_finite() {
        return Err(DeviceError::InvalidInput(format!("branch voltage {branch_voltage} is not finite")));
    }
    match (element, gate_drive) {
        (ElementRef::Device(d), None) => Ok(Stamp { conductance: 1.0 / d.resistance(), current_offset: 0.0 }),
        (ElementRef::Diode(d), None) => Ok(d.stamp_for_state(d.conducts_at(branch_voltage))),
        (ElementRef::Switch(s), Some(v_gs)) => {
            if !v_gs.is_finite() {
                return Err(DeviceError::InvalidInput(format!("gate drive {v_gs} is not finite")));
            }
            let r = if s.is_on(v_gs) { s.r_on } else { s.r_off };
            Ok(Stamp { conductance: 1.0 / r, current_offset: 0.0 })
        }
        (ElementRef::Switch(_), None) => Err(DeviceError::InvalidInput("switch stamp requires a gate drive".into())),
        (_, Some(_)) => Err(DeviceError::InvalidInput("gate drive supplied for a two-terminal element".into())),
    }
}

/// Applies one programming pulse to a bistable device.
///
/// `v_applied` is in set polarity. Transitions are evaluated once per pulse.
pub fn update_device_state(model: &Bistable, v_applied: f64, pulse_width_ns: f64) -> Result<Bistable, DeviceError> {
    if !(pulse_width_ns >= MIN_PULSE_NS) {
        return Err(DeviceError::PulseTooShort { width_ns: pulse_width_ns });
    }
    let mut next = *model;
    if !model.formed {
        if v_applied.abs() >= model.v_form {
            next.formed = true;
            next.state = ResistiveState::Lrs;
        }
    } else if v_applied >= model.v_set {
        next.state = ResistiveState::Lrs;
    } else if v_applied <= model.v_reset {
        next.state = ResistiveState::Hrs;
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownViolation {
    pub device: String,
    /// `"V_GS"` or `"V_BS"`.
    pub terminal_pair: &'static str,
    pub differential: f64,
}

impl fmt::Display for BreakdownViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: |{}| = {:.4} V exceeds {} V", self.device, self.terminal_pair, self.differential.abs(), V_GS_MAX)
    }
}

pub fn check_gate_breakdown(
    device: &str,
    v_g: f64,
    v_s: f64,
    v_b: f64,
    model: &SwitchModel,
) -> Result<(), BreakdownViolation> {
    let limit = model.v_gs_max + BREAKDOWN_EPS;
    let v_gs = v_g - v_s;
    if v_gs.abs() > limit {
        return Err(BreakdownViolation { device: device.to_string(), terminal_pair: "V_GS", differential: v_gs });
    }
    let v_bs = v_b - v_s;
    if v_bs.abs() > limit {
        return Err(BreakdownViolation { device: device.to_string(), terminal_pair: "V_BS", differential: v_bs });
    }
    Ok(())
}
