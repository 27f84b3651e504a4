//! The 16x16 two-flavour pixel array and its lowering to a [`CircuitGraph`]
//! for one activation state.
//!
//! Column `c` is built from a bottom-electrode line `BL[c]`, a lumped track
//! resistance to the column switch, and a bidirectional column switch to
//! PAD. Every pixel ties its top electrode `V1` to ground through an NMOS
//! and to VDDH through a PMOS. Kelvin pixels add a source-referenced
//! transmission gate from `V1` to the column's `BL_kelvin` line, and every
//! column carries the same probe structure on `BL` itself. The two sense
//! lines reach the off-chip front-ends through their own column switches.

use std::collections::BTreeMap;
use std::fmt;

use crate::circuit::{CircuitGraph, Element, GateRef, GateTerminals, NodeId, NodeRole, PairSite, GROUND};
use crate::controller::{decode_address, level_shift, Activation, GateDrive, GateRole, V_PROGRAM_MAX};
use crate::device::{DeviceModel, DiodeModel, Polarity, SwitchModel, V_GS_MAX};
use crate::error::{ConfigError, Error, Result};

pub const ARRAY_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address {
    pub row: usize,
    pub col: usize,
}

impl Address {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PixelFlavour {
    Standard2T1R,
    Kelvin2T1R,
}

/// Columns interleave in pairs: the even column of each pair is standard,
/// the odd one carries Kelvin sensing.
pub fn flavour_of_column(col: usize) -> PixelFlavour {
    if col % 2 == 1 {
        PixelFlavour::Kelvin2T1R
    } else {
        PixelFlavour::Standard2T1R
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KelvinBias {
    pub i_b: f64,
    pub r_bias: f64,
}

impl Default for KelvinBias {
    fn default() -> Self {
        Self { i_b: 30e-6, r_bias: 100e3 }
    }
}

impl KelvinBias {
    pub fn overdrive(&self) -> f64 {
        self.i_b * self.r_bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    pub vddh: f64,
    pub nmos: SwitchModel,
    pub pmos: SwitchModel,
    /// One transistor of a pixel or bit-line probe pair (M1 or M2).
    pub kelvin_switch: SwitchModel,
    /// One transistor of a column switch pair; the pair is twice this.
    pub column_switch: SwitchModel,
    /// Lumped bit-line track between the pixels and the column switch.
    pub r_track: f64,
    pub kelvin_bias: KelvinBias,
    /// Current drawn by the Kelvin sense front-end while the probe is on.
    pub i_sense: f64,
    pub default_device: DeviceModel,
    pub devices: BTreeMap<Address, DeviceModel>,
}

/// Off-state resistance of the back-to-back pair switches (column, probe,
/// Kelvin). Floating sense islands hang off these, so together with the
/// diode on-conductance they set the conditioning of the nodal matrix.
pub const DEFAULT_R_OFF: f64 = 1e15;
/// Off-state resistance of the pixel selectors. Every unselected PMOS leaks
/// VDDH into its bit line, which the pad never sees, so this is kept far
/// below the pair leakage.
pub const DEFAULT_SELECTOR_R_OFF: f64 = 1e17;

impl Default for ArrayConfig {
    fn default() -> Self {
        let sw = |polarity, r_on, r_off: f64| SwitchModel {
            body_diode: DiodeModel { g_off: 1.0 / r_off, ..DiodeModel::default() },
            ..SwitchModel::new(polarity, r_on, r_off)
        };
        Self {
            rows: ARRAY_DIM,
            cols: ARRAY_DIM,
            vddh: V_PROGRAM_MAX,
            nmos: sw(Polarity::N, 150.0, DEFAULT_SELECTOR_R_OFF),
            pmos: sw(Polarity::P, 150.0, DEFAULT_SELECTOR_R_OFF),
            kelvin_switch: sw(Polarity::N, 50e3, DEFAULT_R_OFF),
            column_switch: sw(Polarity::N, 75.0, DEFAULT_R_OFF),
            r_track: 75.0,
            kelvin_bias: KelvinBias::default(),
            i_sense: 60e-9,
            default_device: DeviceModel::ideal(10e6),
            devices: BTreeMap::new(),
        }
    }
}

impl ArrayConfig {
    /// Series resistance of a selected read/write path with all switches on.
    pub fn series_resistance(&self) -> f64 {
        self.nmos.r_on + 2.0 * self.column_switch.r_on + self.r_track
    }

    /// Sets the off-state resistance of every switch and the reverse
    /// conductance of every body diode.
    pub fn with_leakage(mut self, r_off: f64, g_off: f64) -> Self {
        for sw in [&mut self.nmos, &mut self.pmos, &mut self.kelvin_switch, &mut self.column_switch] {
            sw.r_off = r_off;
            sw.body_diode.g_off = g_off;
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(ConfigError::field("array.rows/cols", "array must have at least one row and column"));
        }
        if !(self.vddh > 0.0 && self.vddh <= V_PROGRAM_MAX) {
            return Err(ConfigError::field("array.vddh", format!("{} V is outside (0, 22]", self.vddh)));
        }
        for (name, sw) in [
            ("nmos", &self.nmos),
            ("pmos", &self.pmos),
            ("kelvin_switch", &self.kelvin_switch),
            ("column_switch", &self.column_switch),
        ] {
            sw.validate().map_err(|e| ConfigError::field(format!("array.{name}"), e.to_string()))?;
        }
        if self.nmos.polarity != Polarity::N || self.pmos.polarity != Polarity::P {
            return Err(ConfigError::field("array.nmos/pmos", "selector polarities are fixed"));
        }
        if !(self.r_track.is_finite() && self.r_track >= 0.0) {
            return Err(ConfigError::field("array.r_track", "must be finite and non-negative"));
        }
        let kb = self.kelvin_bias;
        if !(kb.i_b.is_finite() && kb.r_bias.is_finite() && kb.i_b >= 0.0 && kb.r_bias > 0.0) {
            return Err(ConfigError::field("array.kelvin_bias", "i_b and r_bias must be finite and non-negative"));
        }
        if kb.overdrive() > V_GS_MAX {
            return Err(ConfigError::field(
                "array.kelvin_bias",
                format!("i_b * r_bias = {} V exceeds the 5 V gate limit", kb.overdrive()),
            ));
        }
        if kb.overdrive() < self.kelvin_switch.v_on {
            return Err(ConfigError::field("array.kelvin_bias", "bias overdrive does not turn the probe switches on"));
        }
        if !(self.i_sense.is_finite() && self.i_sense >= 0.0) {
            return Err(ConfigError::field("array.i_sense", "must be finite and non-negative"));
        }
        self.default_device
            .validate()
            .map_err(|e| ConfigError::field("array.default_device", e.to_string()))?;
        for (addr, dev) in &self.devices {
            if addr.row >= self.rows || addr.col >= self.cols {
                return Err(ConfigError::field(format!("devices.{addr}"), "address outside the array"));
            }
            dev.validate().map_err(|e| ConfigError::field(format!("devices.{addr}"), e.to_string()))?;
        }
        Ok(())
    }
}

/// Validated, immutable array description.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    config: ArrayConfig,
}

pub fn build_array(config: ArrayConfig) -> Result<Array, ConfigError> {
    config.validate()?;
    Ok(Array { config })
}

impl Array {
    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    pub fn rows(&self) -> usize {
        self.config.rows
    }

    pub fn cols(&self) -> usize {
        self.config.cols
    }

    pub fn contains(&self, addr: Address) -> bool {
        addr.row < self.config.rows && addr.col < self.config.cols
    }

    pub fn flavour(&self, addr: Address) -> PixelFlavour {
        flavour_of_column(addr.col)
    }

    pub fn device(&self, addr: Address) -> DeviceModel {
        self.config.devices.get(&addr).copied().unwrap_or(self.config.default_device)
    }

    pub fn addresses(&self) -> impl Iterator<Item = Address> + '_ {
        let cols = self.config.cols;
        (0..self.config.rows).flat_map(move |row| (0..cols).map(move |col| Address { row, col }))
    }

    pub fn flavour_counts(&self) -> (usize, usize) {
        let kelvin = self.addresses().filter(|a| self.flavour(*a) == PixelFlavour::Kelvin2T1R).count();
        (self.rows() * self.cols() - kelvin, kelvin)
    }

    /// Copy of the array with `model` installed at `addr`.
    pub fn with_device(&self, addr: Address, model: DeviceModel) -> Result<Array, ConfigError> {
        let mut config = self.config.clone();
        config.devices.insert(addr, model);
        build_array(config)
    }

    /// Replaces the device at `addr` without revalidating the whole array.
    pub(crate) fn set_device(&mut self, addr: Address, model: DeviceModel) {
        self.config.devices.insert(addr, model);
    }
}

/// Nodes whose solved voltages form a Kelvin measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SenseNodes {
    pub v1_probe: NodeRole,
    pub bl_probe: NodeRole,
}

pub fn kelvin_sense_paths(array: &Array, addr: Address) -> Result<SenseNodes> {
    if !array.contains(addr) {
        decode_address(addr, array.rows(), array.cols())?;
    }
    if array.flavour(addr) != PixelFlavour::Kelvin2T1R {
        return Err(Error::Capability { addr, what: "Kelvin sense path" });
    }
    Ok(SenseNodes { v1_probe: NodeRole::KelvinPad, bl_probe: NodeRole::BitLinePad })
}

struct Builder<'a> {
    cfg: &'a ArrayConfig,
    g: CircuitGraph,
}

impl Builder<'_> {
    /// Back-to-back NMOS pair with a shared source/bulk node and a gate
    /// biased at `V_S + I_B * R` while enabled.
    fn add_pair(&mut self, site: PairSite, name: &str, side_a: NodeId, side_b: NodeId, model: SwitchModel, enabled: bool) {
        let vs = self.g.add_node(format!("{name}.vs"), NodeRole::PairSource(site));
        let bias = self.cfg.kelvin_bias;
        let (gate, v_gs) = if enabled {
            let vg = self.g.add_node(format!("{name}.g"), NodeRole::PairGate(site));
            self.g.add_current_source(format!("{name}.ib"), vs, vg, bias.i_b);
            self.g.add_resistor(format!("{name}.rbias"), bias.r_bias, vg, vs);
            (GateRef::Node(vg), bias.overdrive())
        } else {
            (GateRef::FollowsSource, 0.0)
        };
        let terminals = GateTerminals { gate, source: vs, bulk: vs };
        for (k, side) in [(1, side_a), (2, side_b)] {
            self.g.add_branch(format!("{name}.m{k}"), Element::Switch { model, v_gs, terminals }, side, vs);
            self.g.add_branch(format!("{name}.d{k}"), Element::Diode(model.body_diode), vs, side);
        }
    }
}

/// Lowers the array under `act` to a netlist.
pub fn netlist_for_operation(array: &Array, act: &Activation) -> Result<CircuitGraph> {
    let cfg = array.config();
    let sel = decode_address(act.addr, cfg.rows, cfg.cols)?;
    let sel_row = act.addr.row;
    let mut b = Builder { cfg, g: CircuitGraph::new() };

    // Leaves first, shared lines and rails last, to keep LU fill local.
    let mut top = vec![0; cfg.rows * cfg.cols];
    let vddh = {
        let mut pixel_pairs = Vec::new();
        for row in 0..cfg.rows {
            for col in 0..cfg.cols {
                let addr = Address { row, col };
                top[row * cfg.cols + col] = b.g.add_node(format!("v1[{row},{col}]"), NodeRole::TopElectrode(addr));
                if array.flavour(addr) == PixelFlavour::Kelvin2T1R {
                    pixel_pairs.push(addr);
                }
            }
        }
        let bl: Vec<NodeId> = (0..cfg.cols).map(|c| b.g.add_node(format!("bl[{c}]"), NodeRole::BitLine(c))).collect();
        let col_side: Vec<NodeId> =
            (0..cfg.cols).map(|c| b.g.add_node(format!("blcol[{c}]"), NodeRole::ColumnSide(c))).collect();
        let probe_line: Vec<NodeId> =
            (0..cfg.cols).map(|c| b.g.add_node(format!("blprobe[{c}]"), NodeRole::ProbeLine(c))).collect();
        let kelvin_line: Vec<Option<NodeId>> = (0..cfg.cols)
            .map(|c| {
                (flavour_of_column(c) == PixelFlavour::Kelvin2T1R)
                    .then(|| b.g.add_node(format!("blkelvin[{c}]"), NodeRole::KelvinLine(c)))
            })
            .collect();
        let pad_k = b.g.add_node("pad_kelvin", NodeRole::KelvinPad);
        let pad_bl = b.g.add_node("pad_bl", NodeRole::BitLinePad);
        let pad = b.g.add_node("pad", NodeRole::Pad);
        let vddh = b.g.add_node("vddh", NodeRole::Vddh);

        let probing = act.ib_ctrl;
        for addr in pixel_pairs {
            let v1 = top[addr.row * cfg.cols + addr.col];
            let line = kelvin_line[addr.col].expect("kelvin column has a sense line");
            let name = format!("kelvin[{},{}]", addr.row, addr.col);
            b.add_pair(PairSite::PixelProbe(addr), &name, v1, line, cfg.kelvin_switch, probing && addr.row == sel_row);
        }

        let nmos_gate = GateDrive { role: GateRole::Nmos, vddh: act.vddh };
        let pmos_gate = GateDrive { role: GateRole::Pmos, vddh: act.vddh };
        for row in 0..cfg.rows {
            let row_on = sel.row_enables[row];
            let vg_n = level_shift(nmos_gate, row_on && act.wl_n);
            let vg_p = level_shift(pmos_gate, row_on && act.wl_p);
            for col in 0..cfg.cols {
                let addr = Address { row, col };
                let v1 = top[row * cfg.cols + col];
                b.g.add_branch(format!("mem[{row},{col}]"), Element::Memristor { addr, model: array.device(addr) }, v1, bl[col]);
                let n_term = GateTerminals { gate: GateRef::Fixed(vg_n), source: GROUND, bulk: GROUND };
                b.g.add_branch(
                    format!("nmos[{row},{col}]"),
                    Element::Switch { model: cfg.nmos, v_gs: vg_n, terminals: n_term },
                    v1,
                    GROUND,
                );
                b.g.add_branch(format!("nmos[{row},{col}].body"), Element::Diode(cfg.nmos.body_diode), GROUND, v1);
                let p_term = GateTerminals { gate: GateRef::Fixed(vg_p), source: vddh, bulk: vddh };
                b.g.add_branch(
                    format!("pmos[{row},{col}]"),
                    Element::Switch { model: cfg.pmos, v_gs: vg_p - act.vddh, terminals: p_term },
                    v1,
                    vddh,
                );
                b.g.add_branch(format!("pmos[{row},{col}].body"), Element::Diode(cfg.pmos.body_diode), v1, vddh);
            }
        }

        for col in 0..cfg.cols {
            let col_on = sel.col_enables[col] && act.col_en;
            let sensing = col_on && probing;
            b.g.add_resistor(format!("track[{col}]"), cfg.r_track.max(1e-6), bl[col], col_side[col]);
            b.add_pair(PairSite::Column(col), &format!("colsw[{col}]"), col_side[col], pad, cfg.column_switch, col_on);
            b.add_pair(PairSite::BitLineProbe(col), &format!("blprobe[{col}]"), bl[col], probe_line[col], cfg.kelvin_switch, sensing);
            b.add_pair(
                PairSite::ProbeColumn(col),
                &format!("blprobe_col[{col}]"),
                probe_line[col],
                pad_bl,
                cfg.column_switch,
                sensing,
            );
            if let Some(line) = kelvin_line[col] {
                b.add_pair(PairSite::KelvinColumn(col), &format!("kelvin_col[{col}]"), line, pad_k, cfg.column_switch, sensing);
            }
        }

        let kelvin_selected = array.flavour(act.addr) == PixelFlavour::Kelvin2T1R;
        if probing && act.col_en && kelvin_selected && cfg.i_sense > 0.0 {
            b.g.add_current_source("kelvin_frontend", pad_k, GROUND, cfg.i_sense * act.sense_sign());
        }
        b.g.add_voltage_source("vpad", pad, GROUND, act.v_pad);
        vddh
    };
    b.g.add_voltage_source("vddh", vddh, GROUND, act.vddh);
    Ok(b.g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Element;
    use crate::controller::{OperationRequest, Selector};

    fn on_switches(g: &CircuitGraph, prefix: &str) -> Vec<String> {
        g.branches
            .iter()
            .filter(|b| b.label.starts_with(prefix))
            .filter(|b| matches!(b.element, Element::Switch { model, v_gs, .. } if model.is_on(v_gs)))
            .map(|b| b.label.clone())
            .collect()
    }

    #[test]
    fn default_array_has_balanced_flavours() {
        let a = build_array(ArrayConfig::default()).unwrap();
        assert_eq!(a.flavour_counts(), (128, 128));
        assert_eq!(a.addresses().count(), 256);
        for c in (0..16).step_by(2) {
            assert_ne!(flavour_of_column(c), flavour_of_column(c + 1));
        }
    }

    #[test]
    fn zero_vddh_rejected() {
        let err = build_array(ArrayConfig { vddh: 0.0, ..ArrayConfig::default() }).unwrap_err();
        assert!(err.to_string().contains("array.vddh"));
    }

    #[test]
    fn bias_product_limited() {
        let cfg = ArrayConfig { kelvin_bias: KelvinBias { i_b: 60e-6, r_bias: 100e3 }, ..ArrayConfig::default() };
        assert!(build_array(cfg).unwrap_err().to_string().contains("kelvin_bias"));
    }

    #[test]
    fn device_map_point_update() {
        let a = build_array(ArrayConfig::default()).unwrap();
        let a = a.with_device(Address::new(3, 5), DeviceModel::ideal(1e3)).unwrap();
        assert_eq!(a.device(Address::new(3, 5)), DeviceModel::ideal(1e3));
        assert_eq!(a.device(Address::new(3, 4)), DeviceModel::ideal(10e6));
        assert!(a.with_device(Address::new(16, 0), DeviceModel::ideal(1e3)).is_err());
    }

    #[test]
    fn exactly_one_selector_on() {
        let a = build_array(ArrayConfig::default()).unwrap();
        let reset = OperationRequest::new(crate::controller::Mode::Reset, Address::new(0, 0), 30.0, 0.0);
        let g = netlist_for_operation(&a, &Activation::in_pulse(&reset)).unwrap();
        // Word lines are row-wide; the column switch picks the conducting cell.
        let row0: Vec<String> = (0..16).map(|c| format!("pmos[0,{c}]")).collect();
        assert_eq!(on_switches(&g, "pmos"), row0);
        assert!(on_switches(&g, "nmos").is_empty());
        assert_eq!(on_switches(&g, "colsw"), vec!["colsw[0].m1", "colsw[0].m2"]);

        let read = OperationRequest::read(Address::new(4, 7));
        assert_eq!(read.selector(), Selector::Nmos);
        let g = netlist_for_operation(&a, &Activation::in_pulse(&read)).unwrap();
        assert_eq!(on_switches(&g, "nmos").len(), 16);
        assert!(on_switches(&g, "nmos").iter().all(|l| l.starts_with("nmos[4,")));
        // All Kelvin probes of row 4 are biased, only column 7 reaches the pad.
        assert_eq!(on_switches(&g, "kelvin[").len(), 16);
        assert_eq!(on_switches(&g, "kelvin_col"), vec!["kelvin_col[7].m1", "kelvin_col[7].m2"]);
        assert_eq!(g.current_sources.iter().filter(|s| s.label == "kelvin_frontend").count(), 1);
    }

    #[test]
    fn idle_graph_has_everything_off() {
        let a = build_array(ArrayConfig::default()).unwrap();
        let g = netlist_for_operation(&a, &Activation::idle(Address::new(0, 0), 0.2, 22.0)).unwrap();
        let on = g
            .branches
            .iter()
            .filter(|b| matches!(b.element, Element::Switch { model, v_gs, .. } if model.is_on(v_gs)))
            .count();
        assert_eq!(on, 0);
        assert_eq!(g.voltage_sources.iter().filter(|s| s.label == "vpad").count(), 1);
        assert!(g.node_count() < 600);
    }

    #[test]
    fn kelvin_paths_need_kelvin_pixel() {
        let a = build_array(ArrayConfig::default()).unwrap();
        assert!(kelvin_sense_paths(&a, Address::new(0, 1)).is_ok());
        assert!(matches!(kelvin_sense_paths(&a, Address::new(0, 0)), Err(Error::Capability { .. })));
    }
}
