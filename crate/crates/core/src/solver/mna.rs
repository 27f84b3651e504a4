//! Nodal assembly and the piecewise-linear DC operating-point loop.

use crate::circuit::{CircuitGraph, Element, NodeId, GROUND};
use crate::device::{element_stamp, ElementRef, Stamp};
use crate::error::SolverError;

use super::lu::{factor, DenseMatrix};

/// Unknowns are the non-ground node voltages followed by one current per
/// voltage source (positive when the source pushes current out of its
/// positive terminal into the circuit).
#[derive(Debug, Clone)]
pub struct MnaSystem {
    pub matrix: DenseMatrix,
    pub rhs: Vec<f64>,
    pub node_count: usize,
}

impl MnaSystem {
    /// Matrix row/column of a node; `None` for ground.
    pub fn node_index(node: NodeId) -> Option<usize> {
        node.checked_sub(1)
    }

    pub fn source_index(&self, k: usize) -> usize {
        self.node_count - 1 + k
    }

    fn unknown_name(&self, graph: &CircuitGraph, idx: usize) -> String {
        if idx + 1 < self.node_count {
            graph.nodes[idx + 1].name.clone()
        } else {
            format!("i({})", graph.voltage_sources[idx + 1 - self.node_count].label)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl SolveOptions {
    pub const READ: SolveOptions = SolveOptions { tol: 1e-12, max_iter: 100 };
    pub const PROGRAMMING: SolveOptions = SolveOptions { tol: 1e-9, max_iter: 100 };

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tol > 0.0) {
            return Err(SolverError::Options(format!("tol must be positive (got {})", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SolverError::Options("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self::READ
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Indexed by [`NodeId`]; ground is entry 0.
    pub node_voltages: Vec<f64>,
    /// Current from `a` to `b` of each branch.
    pub branch_currents: Vec<f64>,
    /// Current delivered by each voltage source.
    pub source_currents: Vec<f64>,
    pub kcl_residual: f64,
    pub iterations: usize,
}

impl Solution {
    pub fn voltage(&self, node: NodeId) -> f64 {
        self.node_voltages[node]
    }

    pub fn max_branch_current(&self) -> f64 {
        self.branch_currents.iter().fold(0.0, |m, i| m.max(i.abs()))
    }
}

/// Rejects graphs with a node that cannot reach ground through branches or
/// voltage sources.
pub fn check_grounded(graph: &CircuitGraph) -> Result<(), SolverError> {
    let n = graph.node_count();
    let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let edges = graph
        .branches
        .iter()
        .map(|b| (b.a, b.b))
        .chain(graph.voltage_sources.iter().map(|s| (s.pos, s.neg)));
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![GROUND];
    seen[GROUND] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(i) => Err(SolverError::FloatingNode { node: graph.nodes[i].name.clone() }),
        None => Ok(()),
    }
}

fn branch_stamp(element: &Element, v: f64, diode_on: bool) -> Result<Stamp, SolverError> {
    Ok(match element {
        Element::Resistor(r) => Stamp { conductance: 1.0 / r, current_offset: 0.0 },
        Element::Memristor { model, .. } => element_stamp(ElementRef::Device(model), v, None)?,
        Element::Switch { model, v_gs, .. } => element_stamp(ElementRef::Switch(model), v, Some(*v_gs))?,
        Element::Diode(d) => d.stamp_for_state(diode_on),
    })
}

/// Builds the nodal system for `graph` with each diode in the state given by
/// `diode_on` (indexed by branch; ignored for other elements).
pub fn assemble(graph: &CircuitGraph, diode_on: &[bool]) -> Result<MnaSystem, SolverError> {
    check_grounded(graph)?;
    let node_count = graph.node_count();
    let n = node_count - 1 + graph.voltage_sources.len();
    let mut matrix = DenseMatrix::zeros(n);
    let mut rhs = vec![0.0; n];
    let idx = MnaSystem::node_index;

    for (k, br) in graph.branches.iter().enumerate() {
        let s = branch_stamp(&br.element, 0.0, diode_on.get(k).copied().unwrap_or(false))?;
        let (a, b) = (idx(br.a), idx(br.b));
        if let Some(a) = a {
            matrix.add(a, a, s.conductance);
            rhs[a] -= s.current_offset;
        }
        if let Some(b) = b {
            matrix.add(b, b, s.conductance);
            rhs[b] += s.current_offset;
        }
        if let (Some(a), Some(b)) = (a, b) {
            matrix.add(a, b, -s.conductance);
            matrix.add(b, a, -s.conductance);
        }
    }
    for cs in &graph.current_sources {
        if let Some(f) = idx(cs.from) {
            rhs[f] -= cs.amps;
        }
        if let Some(t) = idx(cs.to) {
            rhs[t] += cs.amps;
        }
    }
    for (k, vs) in graph.voltage_sources.iter().enumerate() {
        let aux = node_count - 1 + k;
        if let Some(p) = idx(vs.pos) {
            matrix.add(p, aux, -1.0);
            matrix.add(aux, p, 1.0);
        }
        if let Some(m) = idx(vs.neg) {
            matrix.add(m, aux, 1.0);
            matrix.add(aux, m, -1.0);
        }
        rhs[aux] = vs.volts;
    }
    Ok(MnaSystem { matrix, rhs, node_count })
}

/// Solves the linear system with one step of iterative refinement.
pub fn solve_linear(graph: &CircuitGraph, sys: &MnaSystem) -> Result<Vec<f64>, SolverError> {
    let lu = factor(sys.matrix.clone()).map_err(|col| SolverError::Singular { unknown: sys.unknown_name(graph, col) })?;
    let mut x = lu.solve(&sys.rhs);
    // Iterative refinement; floating sense islands are set by leakage
    // ratios and need more than one round.
    for _ in 0..3 {
        let r = sys.matrix.residual(&x, &sys.rhs);
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::Singular { unknown: "solution".into() });
    }
    Ok(x)
}

fn node_voltages(sys: &MnaSystem, x: &[f64]) -> Vec<f64> {
    std::iter::once(0.0).chain(x[..sys.node_count - 1].iter().copied()).collect()
}

/// Largest KCL imbalance over all nodes, in amps.
pub fn kcl_residual(graph: &CircuitGraph, v: &[f64], branch_currents: &[f64], source_currents: &[f64]) -> f64 {
    let mut net = vec![0.0; graph.node_count()];
    for (br, i) in graph.branches.iter().zip(branch_currents) {
        net[br.a] += i;
        net[br.b] -= i;
    }
    for cs in &graph.current_sources {
        net[cs.from] += cs.amps;
        net[cs.to] -= cs.amps;
    }
    for (vs, i) in graph.voltage_sources.iter().zip(source_currents) {
        net[vs.pos] -= i;
        net[vs.neg] += i;
    }
    debug_assert_eq!(v.len(), net.len());
    net.iter().skip(1).fold(0.0, |m, x| m.max(x.abs()))
}

/// DC operating point by fixed-point iteration over the diode segments.
///
/// Every diode starts off; after each linear solve all diodes are
/// re-evaluated at once from their branch voltages, until no segment changes.
/// Conducting diodes get a small hysteresis band below the knee.
pub fn solve_dc(graph: &CircuitGraph, opts: SolveOptions) -> Result<Solution, SolverError> {
    opts.validate()?;
    let diodes: Vec<usize> = graph
        .branches
        .iter()
        .enumerate()
        .filter(|(_, b)| matches!(b.element, Element::Diode(_)))
        .map(|(i, _)| i)
        .collect();
    let mut state = vec![false; graph.branches.len()];
    let mut previous: Option<Vec<bool>> = None;

    for iteration in 1..=opts.max_iter {
        let sys = assemble(graph, &state)?;
        let x = solve_linear(graph, &sys)?;
        let v = node_voltages(&sys, &x);

        let mut next = state.clone();
        for &k in &diodes {
            let br = &graph.branches[k];
            if let Element::Diode(d) = br.element {
                next[k] = d.next_state(state[k], v[br.a] - v[br.b]);
            }
        }
        if next == state {
            let branch_currents = graph
                .branches
                .iter()
                .enumerate()
                .map(|(k, br)| {
                    let dv = v[br.a] - v[br.b];
                    branch_stamp(&br.element, dv, state[k]).map(|s| s.current(dv))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let source_currents = x[sys.node_count - 1..].to_vec();
            let residual = kcl_residual(graph, &v, &branch_currents, &source_currents);
            if residual > opts.tol {
                return Err(SolverError::Residual { residual, tol: opts.tol });
            }
            return Ok(Solution { node_voltages: v, branch_currents, source_currents, kcl_residual: residual, iterations: iteration });
        }
        previous = Some(std::mem::replace(&mut state, next));
    }
    Err(SolverError::NonConvergence {
        iterations: opts.max_iter,
        previous: previous.unwrap_or_default(),
        last: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::NodeRole;
    use crate::device::DiodeModel;
    use proptest::prelude::*;

    #[test]
    fn single_resistor() {
        let mut g = CircuitGraph::new();
        let n = g.add_node("n", NodeRole::Pad);
        g.add_resistor("r", 1e3, n, GROUND);
        g.add_voltage_source("v", n, GROUND, 5.0);
        let sys = assemble(&g, &[false]).unwrap();
        assert_eq!(sys.matrix.dim(), 2);
        let s = solve_dc(&g, SolveOptions::READ).unwrap();
        assert_eq!(s.voltage(n), 5.0);
        assert!((s.branch_currents[0] - 5e-3).abs() < 1e-15);
        assert!((s.source_currents[0] - 5e-3).abs() < 1e-15);
    }

    #[test]
    fn divider_midpoint() {
        let mut g = CircuitGraph::new();
        let top = g.add_internal("top");
        let mid = g.add_internal("mid");
        g.add_resistor("r1", 1e3, top, mid);
        g.add_resistor("r2", 1e3, mid, GROUND);
        g.add_voltage_source("v", top, GROUND, 22.0);
        let s = solve_dc(&g, SolveOptions::READ).unwrap();
        assert!((s.voltage(mid) - 11.0).abs() < 1e-12);
    }

    #[test]
    fn floating_node_is_named() {
        let mut g = CircuitGraph::new();
        let a = g.add_internal("a");
        let lone = g.add_internal("lonely");
        g.add_resistor("r", 1.0, a, GROUND);
        g.add_voltage_source("v", a, GROUND, 1.0);
        let _ = lone;
        let err = solve_dc(&g, SolveOptions::READ).unwrap_err();
        assert_eq!(err, SolverError::FloatingNode { node: "lonely".into() });
    }

    #[test]
    fn rejects_bad_options() {
        let g = CircuitGraph::new();
        assert!(solve_dc(&g, SolveOptions { tol: 0.0, max_iter: 10 }).is_err());
        assert!(solve_dc(&g, SolveOptions { tol: 1e-9, max_iter: 0 }).is_err());
    }

    #[test]
    fn forward_diode_clamps() {
        // 5 V through 1 kOhm into a diode to ground.
        let mut g = CircuitGraph::new();
        let src = g.add_internal("src");
        let k = g.add_internal("k");
        g.add_resistor("r", 1e3, src, k);
        g.add_branch("d", Element::Diode(DiodeModel::default()), k, GROUND);
        g.add_voltage_source("v", src, GROUND, 5.0);
        let s = solve_dc(&g, SolveOptions::PROGRAMMING).unwrap();
        // Hand solution of the on segment: (5 - v)/1e3 = 0.1 (v - 0.7) + 1e-15 * 0.7
        let v = (5e-3 + 0.07 - 0.7e-15) / (1e-3 + 0.1);
        assert!((s.voltage(k) - v).abs() < 1e-12);
        assert_eq!(s.iterations, 2);
    }

    #[test]
    fn reverse_diode_stays_off() {
        let mut g = CircuitGraph::new();
        let src = g.add_internal("src");
        g.add_branch("d", Element::Diode(DiodeModel { g_off: 1e-12, ..DiodeModel::default() }), GROUND, src);
        g.add_voltage_source("v", src, GROUND, 5.0);
        let s = solve_dc(&g, SolveOptions::READ).unwrap();
        assert!((s.branch_currents[0] + 5e-12).abs() < 1e-24);
        assert_eq!(s.iterations, 1);
    }

    #[test]
    fn oscillation_reports_states() {
        let mut g = CircuitGraph::new();
        let src = g.add_internal("src");
        let k = g.add_internal("k");
        g.add_resistor("r", 1e3, src, k);
        g.add_branch("d", Element::Diode(DiodeModel::default()), k, GROUND);
        g.add_voltage_source("v", src, GROUND, 5.0);
        let err = solve_dc(&g, SolveOptions { tol: 1e-9, max_iter: 1 }).unwrap_err();
        assert!(matches!(err, SolverError::NonConvergence { iterations: 1, .. }));
    }

    proptest! {
        #[test]
        fn ladder_obeys_kcl_and_is_deterministic(rs in proptest::collection::vec(1.0f64..1e7, 2..12), v in -22.0f64..22.0) {
            let mut g = CircuitGraph::new();
            let first = g.add_internal("n0");
            let mut prev = first;
            for (i, r) in rs.iter().enumerate() {
                let next = g.add_internal(format!("n{}", i + 1));
                g.add_resistor(format!("s{i}"), *r, prev, next);
                g.add_resistor(format!("p{i}"), *r * 3.0, next, GROUND);
                prev = next;
            }
            g.add_voltage_source("v", first, GROUND, v);
            let a = solve_dc(&g, SolveOptions::READ).unwrap();
            let b = solve_dc(&g, SolveOptions::READ).unwrap();
            prop_assert!(a.kcl_residual <= 1e-9 * (1.0 + a.max_branch_current()));
            prop_assert_eq!(a, b);
        }
    }
}
