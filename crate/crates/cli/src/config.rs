//! Experiment configuration: a TOML file with dotted sections, plus
//! `key=value` overrides applied on top before validation.

use std::path::Path;

use hvarray::controller::{SweepGrid, V_PROGRAM_MAX, V_READ};
use hvarray::device::{Bistable, DeviceModel, ResistiveState, MIN_PULSE_NS};
use hvarray::error::ConfigError;
use hvarray::fabric::{Address, ArrayConfig, KelvinBias, DEFAULT_R_OFF, DEFAULT_SELECTOR_R_OFF};
use hvarray::forming::Staircase;
use hvarray::solver::SolveOptions;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub array: ArraySection,
    /// Model of every cell not listed in `cells`.
    pub device: DeviceSection,
    pub cells: Vec<CellSection>,
    pub experiment: ExperimentSection,
    pub sweep: SweepSection,
    pub form: FormSection,
    pub solver: SolverSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub rows: usize,
    pub cols: usize,
    pub vddh: f64,
    pub nmos_r_on: f64,
    pub pmos_r_on: f64,
    /// Per transistor; the column switch is a back-to-back pair.
    pub column_switch_r_on: f64,
    pub kelvin_switch_r_on: f64,
    pub r_track: f64,
    pub selector_r_off: f64,
    pub pair_r_off: f64,
    pub i_sense: f64,
    pub kelvin_i_b: f64,
    pub kelvin_r_bias: f64,
}

impl Default for ArraySection {
    fn default() -> Self {
        let a = ArrayConfig::default();
        Self {
            rows: a.rows,
            cols: a.cols,
            vddh: a.vddh,
            nmos_r_on: a.nmos.r_on,
            pmos_r_on: a.pmos.r_on,
            column_switch_r_on: a.column_switch.r_on,
            kelvin_switch_r_on: a.kelvin_switch.r_on,
            r_track: a.r_track,
            selector_r_off: DEFAULT_SELECTOR_R_OFF,
            pair_r_off: DEFAULT_R_OFF,
            i_sense: a.i_sense,
            kelvin_i_b: a.kelvin_bias.i_b,
            kelvin_r_bias: a.kelvin_bias.r_bias,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Ideal,
    Bistable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateName {
    Hrs,
    Lrs,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub kind: DeviceKind,
    /// Ideal resistor value.
    pub resistance: f64,
    pub r_hrs: f64,
    pub r_lrs: f64,
    pub r_pristine: f64,
    pub v_set: f64,
    pub v_reset: f64,
    pub v_form: f64,
    pub formed: bool,
    pub state: StateName,
}

impl Default for DeviceSection {
    fn default() -> Self {
        let b = Bistable::default();
        Self {
            kind: DeviceKind::Ideal,
            resistance: 10e6,
            r_hrs: b.r_hrs,
            r_lrs: b.r_lrs,
            r_pristine: b.r_pristine,
            v_set: b.v_set,
            v_reset: b.v_reset,
            v_form: b.v_form,
            formed: b.formed,
            state: StateName::Hrs,
        }
    }
}

impl DeviceSection {
    pub fn model(&self) -> DeviceModel {
        match self.kind {
            DeviceKind::Ideal => DeviceModel::ideal(self.resistance),
            DeviceKind::Bistable => DeviceModel::Bistable(Bistable {
                r_hrs: self.r_hrs,
                r_lrs: self.r_lrs,
                r_pristine: self.r_pristine,
                v_set: self.v_set,
                v_reset: self.v_reset,
                v_form: self.v_form,
                formed: self.formed,
                state: match self.state {
                    StateName::Hrs => ResistiveState::Hrs,
                    StateName::Lrs => ResistiveState::Lrs,
                },
            }),
        }
    }
}

/// One `[[cells]]` entry: a device model pinned to an address. Unset model
/// fields take the built-in defaults, not the `[device]` section.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub row: usize,
    pub col: usize,
    pub kind: Option<DeviceKind>,
    pub resistance: Option<f64>,
    pub r_hrs: Option<f64>,
    pub r_lrs: Option<f64>,
    pub r_pristine: Option<f64>,
    pub v_set: Option<f64>,
    pub v_reset: Option<f64>,
    pub v_form: Option<f64>,
    pub formed: Option<bool>,
    pub state: Option<StateName>,
}

impl CellSection {
    pub fn device(&self) -> DeviceSection {
        let d = DeviceSection::default();
        DeviceSection {
            kind: self.kind.unwrap_or(d.kind),
            resistance: self.resistance.unwrap_or(d.resistance),
            r_hrs: self.r_hrs.unwrap_or(d.r_hrs),
            r_lrs: self.r_lrs.unwrap_or(d.r_lrs),
            r_pristine: self.r_pristine.unwrap_or(d.r_pristine),
            v_set: self.v_set.unwrap_or(d.v_set),
            v_reset: self.v_reset.unwrap_or(d.v_reset),
            v_form: self.v_form.unwrap_or(d.v_form),
            formed: self.formed.unwrap_or(d.formed),
            state: self.state.unwrap_or(d.state),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WriteMode {
    Set,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadPolarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub row: usize,
    pub col: usize,
    pub mode: WriteMode,
    pub pulse_width_ns: f64,
    /// Magnitude across the device for `write`; the mode picks the polarity.
    pub voltage: f64,
    pub read_voltage: f64,
    pub read_polarity: ReadPolarity,
    pub ib_ctrl_during_write: bool,
    pub step_ns: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            row: 0,
            col: 1,
            mode: WriteMode::Set,
            pulse_width_ns: MIN_PULSE_NS,
            voltage: 1.5,
            read_voltage: V_READ,
            read_polarity: ReadPolarity::Positive,
            ib_ctrl_during_write: false,
            step_ns: 1.0,
        }
    }
}

impl ExperimentSection {
    pub fn address(&self) -> Address {
        Address::new(self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub v_start: f64,
    pub v_stop: f64,
    pub steps: usize,
    pub r_start: f64,
    pub r_stop: f64,
    pub per_decade: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { v_start: 0.0, v_stop: 22.0, steps: 23, r_start: 500.0, r_stop: 10e6, per_decade: 8 }
    }
}

impl SweepSection {
    pub fn grid(&self) -> SweepGrid {
        SweepGrid { v_start: self.v_start, v_stop: self.v_stop, steps: self.steps }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormSection {
    pub v_start: f64,
    pub v_stop: f64,
    pub v_step: f64,
    pub pulse_width_ns: f64,
}

impl Default for FormSection {
    fn default() -> Self {
        let s = Staircase::default();
        Self { v_start: s.v_start, v_stop: s.v_stop, v_step: s.v_step, pulse_width_ns: s.pulse_width_ns }
    }
}

impl FormSection {
    pub fn staircase(&self) -> Staircase {
        Staircase { v_start: self.v_start, v_stop: self.v_stop, v_step: self.v_step, pulse_width_ns: self.pulse_width_ns }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol_read: f64,
    pub tol_programming: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { tol_read: SolveOptions::READ.tol, tol_programming: SolveOptions::PROGRAMMING.tol, max_iter: SolveOptions::READ.max_iter }
    }
}

impl SolverSection {
    pub fn read(&self) -> SolveOptions {
        SolveOptions { tol: self.tol_read, max_iter: self.max_iter }
    }

    pub fn programming(&self) -> SolveOptions {
        SolveOptions { tol: self.tol_programming, max_iter: self.max_iter }
    }
}

fn check(ok: bool, field: &str, reason: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::field(field, reason))
    }
}

fn check_voltage(v: f64, field: &str) -> Result<(), ConfigError> {
    check(v.is_finite() && v.abs() <= V_PROGRAM_MAX, field, format!("{v} V is outside ±{V_PROGRAM_MAX} V"))
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::field("--config", format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>().map_err(|e| ConfigError::field("--config", e.message().to_string()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        let cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::field(if path == "." { "config".to_string() } else { path }, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.array;
        let e = &self.experiment;
        check(e.row < a.rows, "experiment.row", format!("{} is outside 0..{}", e.row, a.rows))?;
        check(e.col < a.cols, "experiment.col", format!("{} is outside 0..{}", e.col, a.cols))?;
        for (k, c) in self.cells.iter().enumerate() {
            check(c.row < a.rows && c.col < a.cols, &format!("cells[{k}]"), format!("address ({},{}) is outside the array", c.row, c.col))?;
        }
        check_voltage(e.voltage, "experiment.voltage")?;
        check_voltage(e.read_voltage, "experiment.read_voltage")?;
        check_voltage(self.sweep.v_start, "sweep.v_start")?;
        check_voltage(self.sweep.v_stop, "sweep.v_stop")?;
        check_voltage(self.form.v_start, "form.v_start")?;
        check_voltage(self.form.v_stop, "form.v_stop")?;
        check(e.pulse_width_ns >= MIN_PULSE_NS, "experiment.pulse_width_ns", format!("must be at least {MIN_PULSE_NS} ns"))?;
        check(self.form.pulse_width_ns >= MIN_PULSE_NS, "form.pulse_width_ns", format!("must be at least {MIN_PULSE_NS} ns"))?;
        check(e.step_ns >= 1.0, "experiment.step_ns", "must be at least 1 ns")?;
        check(self.sweep.steps >= 1, "sweep.steps", "must be at least 1")?;
        check(self.sweep.r_start > 0.0 && self.sweep.r_start < self.sweep.r_stop, "sweep.r_start", "must be positive and below sweep.r_stop")?;
        check(self.sweep.per_decade >= 1, "sweep.per_decade", "must be at least 1")?;
        check(self.solver.tol_read > 0.0, "solver.tol_read", "must be positive")?;
        check(self.solver.tol_programming > 0.0, "solver.tol_programming", "must be positive")?;
        check(self.solver.max_iter >= 1, "solver.max_iter", "must be at least 1")?;
        self.form.staircase().validate()?;
        self.array_config().validate()?;
        Ok(())
    }

    pub fn array_config(&self) -> ArrayConfig {
        let a = &self.array;
        let mut cfg = ArrayConfig {
            rows: a.rows,
            cols: a.cols,
            vddh: a.vddh,
            r_track: a.r_track,
            i_sense: a.i_sense,
            kelvin_bias: KelvinBias { i_b: a.kelvin_i_b, r_bias: a.kelvin_r_bias },
            default_device: self.device.model(),
            ..ArrayConfig::default()
        };
        cfg.nmos.r_on = a.nmos_r_on;
        cfg.pmos.r_on = a.pmos_r_on;
        cfg.column_switch.r_on = a.column_switch_r_on;
        cfg.kelvin_switch.r_on = a.kelvin_switch_r_on;
        for sw in [&mut cfg.nmos, &mut cfg.pmos] {
            sw.r_off = a.selector_r_off;
            sw.body_diode.g_off = 1.0 / a.selector_r_off;
        }
        for sw in [&mut cfg.column_switch, &mut cfg.kelvin_switch] {
            sw.r_off = a.pair_r_off;
            sw.body_diode.g_off = 1.0 / a.pair_r_off;
        }
        for c in &self.cells {
            cfg.devices.insert(Address::new(c.row, c.col), c.device().model());
        }
        cfg
    }
}

/// Applies `section.key=value`. The value is read as a TOML literal when it
/// parses as one, otherwise as a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::field("--override", format!("`{spec}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::field("--override", format!("`{key}` is not a dotted key")));
    }
    let (last, sections) = parts.split_last().expect("split yields at least one part");
    let mut t = table;
    for s in sections {
        let entry = t.entry(s.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry.as_table_mut().ok_or_else(|| ConfigError::field(key, format!("`{s}` is not a section")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::from_table(toml::Table::new()).unwrap();
        assert_eq!(cfg.experiment.address(), Address::new(0, 1));
        assert_eq!(cfg.array_config(), ArrayConfig::default());
    }

    #[test]
    fn override_types() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "experiment.row=3").unwrap();
        apply_override(&mut t, "device.kind=bistable").unwrap();
        apply_override(&mut t, "array.i_sense = 0.0").unwrap();
        let cfg = ExperimentConfig::from_table(t).unwrap();
        assert_eq!(cfg.experiment.row, 3);
        assert_eq!(cfg.device.kind, DeviceKind::Bistable);
        assert_eq!(cfg.array.i_sense, 0.0);
    }

    #[test]
    fn errors_name_the_field() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "experiment.row=16").unwrap();
        let e = ExperimentConfig::from_table(t).unwrap_err();
        assert!(e.to_string().contains("experiment.row"), "{e}");

        let mut t = toml::Table::new();
        apply_override(&mut t, "array.r_track=\"x\"").unwrap();
        let e = ExperimentConfig::from_table(t).unwrap_err();
        assert!(e.to_string().contains("array.r_track"), "{e}");

        let mut t = toml::Table::new();
        apply_override(&mut t, "experiment.colour=1").unwrap();
        assert!(ExperimentConfig::from_table(t).is_err());

        let mut t = toml::Table::new();
        apply_override(&mut t, "experiment.voltage=-23").unwrap();
        let e = ExperimentConfig::from_table(t).unwrap_err();
        assert!(e.to_string().contains("experiment.voltage"), "{e}");

        assert!(apply_override(&mut toml::Table::new(), "nokey").is_err());
    }

    #[test]
    fn cells_from_file_text() {
        let t: toml::Table = r#"
            [device]
            resistance = 4.7e3

            [[cells]]
            row = 2
            col = 3
            kind = "bistable"
            v_form = 25.0
        "#
        .parse()
        .unwrap();
        let cfg = ExperimentConfig::from_table(t).unwrap();
        let a = cfg.array_config();
        assert_eq!(a.default_device, DeviceModel::ideal(4.7e3));
        let b = a.devices[&Address::new(2, 3)].as_bistable().copied().unwrap();
        assert_eq!(b.v_form, 25.0);
        assert!(!b.formed);
    }
}
