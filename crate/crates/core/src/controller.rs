//! Digital controller model: address decoding, operation sequencing into
//! gate-drive events and the behavioral HV level shifter.

use std::fmt;

use crate::device::{MIN_PULSE_NS, V_GS_MAX};
use crate::error::ControllerError;
use crate::fabric::Address;

/// Largest programming voltage magnitude the array supports.
pub const V_PROGRAM_MAX: f64 = 22.0;
/// Idle time before the word-line pulse starts.
pub const PRE_PULSE_NS: f64 = 30.0;
/// Column enable leads and trails the word-line pulse by this much.
pub const COLUMN_GUARD_NS: f64 = 10.0;
/// Idle time after the column is released.
pub const POST_PULSE_NS: f64 = 20.0;
/// Default read amplitude at the pad.
pub const V_READ: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Read,
    Set,
    Reset,
    Form,
    IvSweep,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Read => "read",
            Mode::Set => "set",
            Mode::Reset => "reset",
            Mode::Form => "form",
            Mode::IvSweep => "iv-sweep",
        };
        f.write_str(s)
    }
}

/// Which 2T transistor ties the top electrode to its rail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selector {
    /// Top electrode to ground; device sees `-v_pad`.
    Nmos,
    /// Top electrode to VDDH; device sees `vddh - v_pad`.
    Pmos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub v_start: f64,
    pub v_stop: f64,
    pub steps: usize,
}

impl SweepGrid {
    /// Evenly spaced points, both ends included.
    pub fn points(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.v_start],
            n => (0..n)
                .map(|k| self.v_start + (self.v_stop - self.v_start) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationRequest {
    pub mode: Mode,
    pub addr: Address,
    pub pulse_width_ns: f64,
    pub v_pad: f64,
    pub vddh: f64,
    /// Path used by reads; negative reads go through the PMOS.
    pub read_selector: Selector,
    /// Assert IB_CTRL during Set/Reset/Form as well as Read.
    pub ib_ctrl_during_write: bool,
    pub sweep: Option<SweepGrid>,
}

impl OperationRequest {
    pub fn new(mode: Mode, addr: Address, pulse_width_ns: f64, v_pad: f64) -> Self {
        Self {
            mode,
            addr,
            pulse_width_ns,
            v_pad,
            vddh: V_PROGRAM_MAX,
            read_selector: Selector::Nmos,
            ib_ctrl_during_write: false,
            sweep: None,
        }
    }

    /// Positive 0.2 V read through the NMOS path.
    pub fn read(addr: Address) -> Self {
        Self::new(Mode::Read, addr, MIN_PULSE_NS, V_READ)
    }

    /// -0.2 V read through the PMOS path.
    pub fn negative_read(addr: Address, vddh: f64) -> Self {
        Self { read_selector: Selector::Pmos, vddh, ..Self::new(Mode::Read, addr, MIN_PULSE_NS, vddh - V_READ) }
    }

    pub fn with_vddh(mut self, vddh: f64) -> Self {
        self.vddh = vddh;
        self
    }

    /// Request that applies `v_program` (set polarity) across the device.
    pub fn programming(addr: Address, v_program: f64, pulse_width_ns: f64, vddh: f64) -> Self {
        if v_program >= 0.0 {
            Self::new(Mode::Set, addr, pulse_width_ns, v_program).with_vddh(vddh)
        } else {
            Self::new(Mode::Reset, addr, pulse_width_ns, vddh + v_program).with_vddh(vddh)
        }
    }

    pub fn selector(&self) -> Selector {
        match self.mode {
            Mode::Reset => Selector::Pmos,
            Mode::Set | Mode::Form | Mode::IvSweep => Selector::Nmos,
            Mode::Read => self.read_selector,
        }
    }

    /// Nominal voltage across the device, top electrode minus bottom.
    pub fn device_voltage(&self) -> f64 {
        match self.selector() {
            Selector::Pmos => self.vddh - self.v_pad,
            Selector::Nmos => -self.v_pad,
        }
    }

    /// Nominal device voltage in set polarity (bottom minus top).
    pub fn programming_voltage(&self) -> f64 {
        -self.device_voltage()
    }

    pub fn asserts_ib_ctrl(&self) -> bool {
        self.mode == Mode::Read || self.ib_ctrl_during_write
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.pulse_width_ns >= MIN_PULSE_NS) {
            return Err(ControllerError::Timing { width_ns: self.pulse_width_ns });
        }
        if !(self.vddh > 0.0 && self.vddh <= V_PROGRAM_MAX) {
            return Err(ControllerError::Range { what: "vddh", value: self.vddh, min: 0.0, max: V_PROGRAM_MAX });
        }
        if !(self.v_pad >= 0.0 && self.v_pad <= self.vddh) {
            return Err(ControllerError::Range { what: "v_pad", value: self.v_pad, min: 0.0, max: self.vddh });
        }
        let v = self.device_voltage();
        if v.abs() > V_PROGRAM_MAX {
            return Err(ControllerError::Range {
                what: "device voltage",
                value: v,
                min: -V_PROGRAM_MAX,
                max: V_PROGRAM_MAX,
            });
        }
        if let Some(g) = &self.sweep {
            for (what, value) in [("sweep v_start", g.v_start), ("sweep v_stop", g.v_stop)] {
                if !(value.abs() <= V_PROGRAM_MAX) {
                    return Err(ControllerError::Range { what, value, min: -V_PROGRAM_MAX, max: V_PROGRAM_MAX });
                }
            }
            if g.steps == 0 {
                return Err(ControllerError::Request("sweep needs at least one step".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Line {
    WlP(usize),
    WlN(usize),
    IbCtrl(usize),
    ColEn(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t_ns: f64,
    pub line: Line,
    pub level: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlTimeline {
    pub events: Vec<Event>,
    pub duration_ns: f64,
}

impl ControlTimeline {
    /// Timeline with no events, all lines idle.
    pub fn idle(duration_ns: f64) -> Self {
        Self { events: Vec::new(), duration_ns }
    }

    /// Level of `line` at `t`; an event at exactly `t` has already happened.
    pub fn level_at(&self, line: Line, t_ns: f64) -> bool {
        self.events
            .iter()
            .filter(|e| e.line == line && e.t_ns <= t_ns)
            .last()
            .map_or(false, |e| e.level)
    }

    /// Sorted, deduplicated event times.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.events.iter().map(|e| e.t_ns).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    pub fn asserted_at(&self, t_ns: f64) -> Vec<Line> {
        let mut lines: Vec<Line> = self.events.iter().map(|e| e.line).collect();
        lines.sort();
        lines.dedup();
        lines.into_iter().filter(|l| self.level_at(*l, t_ns)).collect()
    }

    /// Checks ordering, balanced assert/deassert pairs and WL_P/WL_N exclusion.
    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.events.windows(2).any(|w| w[1].t_ns < w[0].t_ns) {
            return Err(ControllerError::Request("timeline events are not time-ordered".into()));
        }
        if self.events.iter().any(|e| e.t_ns > self.duration_ns) {
            return Err(ControllerError::Request("event after end of timeline".into()));
        }
        let mut lines: Vec<Line> = self.events.iter().map(|e| e.line).collect();
        lines.sort();
        lines.dedup();
        for line in &lines {
            if self.level_at(*line, self.duration_ns) {
                return Err(ControllerError::Request(format!("{line:?} still asserted at end of timeline")));
            }
        }
        for t in self.boundaries() {
            let active = self.asserted_at(t);
            for l in &active {
                if let Line::WlP(r) = l {
                    if active.contains(&Line::WlN(*r)) {
                        return Err(ControllerError::Request(format!("WL_P and WL_N of row {r} both active at {t} ns")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Instantaneous array activation for `req` at `t`.
    pub fn activation_at(&self, req: &OperationRequest, t_ns: f64) -> Activation {
        let Address { row, col } = req.addr;
        Activation {
            addr: req.addr,
            v_pad: req.v_pad,
            vddh: req.vddh,
            wl_p: self.level_at(Line::WlP(row), t_ns),
            wl_n: self.level_at(Line::WlN(row), t_ns),
            ib_ctrl: self.level_at(Line::IbCtrl(row), t_ns),
            col_en: self.level_at(Line::ColEn(col), t_ns),
        }
    }
}

/// Control-line levels seen by the array at one instant. Only the lines of
/// the selected row and column can be asserted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    pub addr: Address,
    pub v_pad: f64,
    pub vddh: f64,
    pub wl_p: bool,
    pub wl_n: bool,
    pub ib_ctrl: bool,
    pub col_en: bool,
}

impl Activation {
    pub fn idle(addr: Address, v_pad: f64, vddh: f64) -> Self {
        Self { addr, v_pad, vddh, wl_p: false, wl_n: false, ib_ctrl: false, col_en: false }
    }

    /// Steady in-pulse activation for `req`.
    pub fn in_pulse(req: &OperationRequest) -> Self {
        let sel = req.selector();
        Self {
            addr: req.addr,
            v_pad: req.v_pad,
            vddh: req.vddh,
            wl_p: sel == Selector::Pmos,
            wl_n: sel == Selector::Nmos,
            ib_ctrl: req.asserts_ib_ctrl(),
            col_en: true,
        }
    }

    pub fn is_idle(&self) -> bool {
        !(self.wl_p || self.wl_n || self.ib_ctrl || self.col_en)
    }

    /// Sense front-ends sink current while the NMOS holds the top electrode
    /// low and source it while the PMOS holds it high.
    pub fn sense_sign(&self) -> f64 {
        if self.wl_p {
            -1.0
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub row_enables: Vec<bool>,
    pub col_enables: Vec<bool>,
}

impl Decoded {
    pub fn row(&self) -> Option<usize> {
        self.row_enables.iter().position(|&b| b)
    }

    pub fn col(&self) -> Option<usize> {
        self.col_enables.iter().position(|&b| b)
    }
}

/// One-hot row and column enables for `addr`.
pub fn decode_address(addr: Address, rows: usize, cols: usize) -> Result<Decoded, ControllerError> {
    if addr.row >= rows || addr.col >= cols {
        return Err(ControllerError::Decode { row: addr.row, col: addr.col, rows, cols });
    }
    let mut row_enables = vec![false; rows];
    let mut col_enables = vec![false; cols];
    row_enables[addr.row] = true;
    col_enables[addr.col] = true;
    Ok(Decoded { row_enables, col_enables })
}

/// Lowers a request to timed control-line events.
pub fn sequence_operation(req: &OperationRequest) -> Result<ControlTimeline, ControllerError> {
    req.validate()?;
    if req.mode == Mode::IvSweep {
        return Err(ControllerError::Request(
            "iv-sweep is sequenced per grid point; use OperationRequest::programming".into(),
        ));
    }
    let Address { row, col } = req.addr;
    let t_on = PRE_PULSE_NS;
    let t_off = t_on + req.pulse_width_ns;
    let col_on = t_on - COLUMN_GUARD_NS;
    let col_off = t_off + COLUMN_GUARD_NS;
    let wl = match req.selector() {
        Selector::Pmos => Line::WlP(row),
        Selector::Nmos => Line::WlN(row),
    };

    let mut events = vec![
        Event { t_ns: col_on, line: Line::ColEn(col), level: true },
        Event { t_ns: t_on, line: wl, level: true },
    ];
    if req.asserts_ib_ctrl() {
        events.push(Event { t_ns: t_on, line: Line::IbCtrl(row), level: true });
    }
    events.push(Event { t_ns: t_off, line: wl, level: false });
    if req.asserts_ib_ctrl() {
        events.push(Event { t_ns: t_off, line: Line::IbCtrl(row), level: false });
    }
    events.push(Event { t_ns: col_off, line: Line::ColEn(col), level: false });

    let timeline = ControlTimeline { events, duration_ns: col_off + POST_PULSE_NS };
    timeline.validate()?;
    Ok(timeline)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateRole {
    /// High-side selector, driven through the HV level shifter.
    Pmos,
    /// Low-side selector, driven by the 5 V buffer.
    Nmos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDrive {
    pub role: GateRole,
    pub vddh: f64,
}

/// Gate voltage produced for `logic` on a word line.
pub fn level_shift(drive: GateDrive, logic: bool) -> f64 {
    match (drive.role, logic) {
        (GateRole::Pmos, true) => drive.vddh - V_GS_MAX,
        (GateRole::Pmos, false) => drive.vddh,
        (GateRole::Nmos, true) => V_GS_MAX,
        (GateRole::Nmos, false) => 0.0,
    }
}

/// Gate of a source-referenced transmission gate: `v_s + i_b * r_bias` when
/// the bias current flows, `v_s` otherwise.
pub fn kelvin_gate_voltage(enabled: bool, i_b: f64, r_bias: f64, v_s: f64) -> Result<f64, ControllerError> {
    let product = i_b * r_bias;
    if !(product <= V_GS_MAX) {
        return Err(ControllerError::Protection { product });
    }
    Ok(if enabled { v_s + product } else { v_s })
}
