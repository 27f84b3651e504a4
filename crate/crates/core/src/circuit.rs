//! Node/branch netlist handed to the nodal solver.

use std::collections::HashMap;

use crate::device::{DeviceModel, DiodeModel, SwitchModel};
use crate::fabric::Address;

pub type NodeId = usize;

/// The reference node; always index 0.
pub const GROUND: NodeId = 0;

/// Where a back-to-back transmission-gate pair sits in the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairSite {
    /// Pixel-level Kelvin probe between V1 and the column's BL_kelvin line.
    PixelProbe(Address),
    /// Column-level probe between BL and the column's BL sense line.
    BitLineProbe(usize),
    /// Bidirectional column switch between the bit line and PAD.
    Column(usize),
    /// Column switch from a BL_kelvin line to the Kelvin sense pad.
    KelvinColumn(usize),
    /// Column switch from a BL sense line to the BL sense pad.
    ProbeColumn(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRole {
    Ground,
    Vddh,
    Pad,
    KelvinPad,
    BitLinePad,
    /// Bottom-electrode line of a column.
    BitLine(usize),
    /// Column node between the lumped track and the column switch.
    ColumnSide(usize),
    KelvinLine(usize),
    ProbeLine(usize),
    /// Top electrode (V1) of a pixel.
    TopElectrode(Address),
    /// Shared source/bulk node of a transmission-gate pair.
    PairSource(PairSite),
    /// Gate of a transmission-gate pair while its bias current flows.
    PairGate(PairSite),
    Internal(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub role: NodeRole,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateRef {
    Fixed(f64),
    Node(NodeId),
    /// Gate held at the source potential (bias current off).
    FollowsSource,
}

/// Terminals needed to check a switch against the gate-swing rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateTerminals {
    pub gate: GateRef,
    pub source: NodeId,
    pub bulk: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    Resistor(f64),
    Memristor { addr: Address, model: DeviceModel },
    /// `v_gs` is the drive commanded by the controller.
    Switch { model: SwitchModel, v_gs: f64, terminals: GateTerminals },
    /// Anode at `a`, cathode at `b`.
    Diode(DiodeModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: String,
    pub element: Element,
    pub a: NodeId,
    pub b: NodeId,
}

/// Ideal source holding `v(pos) - v(neg) = volts`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSource {
    pub label: String,
    pub pos: NodeId,
    pub neg: NodeId,
    pub volts: f64,
}

/// Ideal source drawing `amps` out of `from` and pushing it into `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentSource {
    pub label: String,
    pub from: NodeId,
    pub to: NodeId,
    pub amps: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CircuitGraph {
    pub nodes: Vec<Node>,
    pub branches: Vec<Branch>,
    pub voltage_sources: Vec<VoltageSource>,
    pub current_sources: Vec<CurrentSource>,
    roles: HashMap<NodeRole, NodeId>,
}

impl CircuitGraph {
    pub fn new() -> Self {
        let mut g = Self::default();
        g.add_node("gnd", NodeRole::Ground);
        g
    }

    pub fn add_node(&mut self, name: impl Into<String>, role: NodeRole) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { name: name.into(), role });
        self.roles.insert(role, id);
        id
    }

    /// Adds a node without a distinguished role.
    pub fn add_internal(&mut self, name: impl Into<String>) -> NodeId {
        let tag = self.nodes.len() as u32;
        self.add_node(name, NodeRole::Internal(tag))
    }

    pub fn add_branch(&mut self, label: impl Into<String>, element: Element, a: NodeId, b: NodeId) -> usize {
        self.branches.push(Branch { label: label.into(), element, a, b });
        self.branches.len() - 1
    }

    pub fn add_resistor(&mut self, label: impl Into<String>, r: f64, a: NodeId, b: NodeId) -> usize {
        self.add_branch(label, Element::Resistor(r), a, b)
    }

    pub fn add_voltage_source(&mut self, label: impl Into<String>, pos: NodeId, neg: NodeId, volts: f64) -> usize {
        self.voltage_sources.push(VoltageSource { label: label.into(), pos, neg, volts });
        self.voltage_sources.len() - 1
    }

    pub fn add_current_source(&mut self, label: impl Into<String>, from: NodeId, to: NodeId, amps: f64) -> usize {
        self.current_sources.push(CurrentSource { label: label.into(), from, to, amps });
        self.current_sources.len() - 1
    }

    pub fn node(&self, role: NodeRole) -> Option<NodeId> {
        self.roles.get(&role).copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn voltage_source(&self, label: &str) -> Option<usize> {
        self.voltage_sources.iter().position(|s| s.label == label)
    }

    /// Indices of branches that carry a memristive device.
    pub fn memristor_branches(&self) -> impl Iterator<Item = (usize, Address)> + '_ {
        self.branches.iter().enumerate().filter_map(|(i, b)| match b.element {
            Element::Memristor { addr, .. } => Some((i, addr)),
            _ => None,
        })
    }

    pub fn memristor_branch(&self, addr: Address) -> Option<usize> {
        self.memristor_branches().find(|(_, a)| *a == addr).map(|(i, _)| i)
    }
}
