//! A deliberately naive reference solver: pure nodal analysis with grounded
//! sources eliminated by substitution, full-pivot Gaussian elimination, and
//! its own diode iteration.

use hvarray::circuit::{CircuitGraph, Element, GROUND};
use hvarray::controller::{Activation, Mode, OperationRequest};
use hvarray::device::{DeviceModel, Polarity};
use hvarray::fabric::{build_array, netlist_for_operation, Address, ArrayConfig};
use hvarray::solver::{solve_dc, SolveOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gauss_full_pivot(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    let mut cols: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pi, mut pj, mut best) = (k, k, 0.0);
        for i in k..n {
            for j in k..n {
                if a[i][j].abs() > best {
                    best = a[i][j].abs();
                    pi = i;
                    pj = j;
                }
            }
        }
        assert!(best > 0.0, "oracle matrix singular");
        a.swap(k, pi);
        b.swap(k, pi);
        for row in a.iter_mut() {
            row.swap(k, pj);
        }
        cols.swap(k, pj);
        for i in k + 1..n {
            let l = a[i][k] / a[k][k];
            if l == 0.0 {
                continue;
            }
            for j in k..n {
                a[i][j] -= l * a[k][j];
            }
            b[i] -= l * b[k];
        }
    }
    let mut y = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * y[j]).sum();
        y[k] = (b[k] - s) / a[k][k];
    }
    let mut x = vec![0.0; n];
    for k in 0..n {
        x[cols[k]] = y[k];
    }
    x
}

/// Node voltages of `g`, indexed by node id.
pub fn oracle_solve(g: &CircuitGraph) -> Vec<f64> {
    let n = g.node_count();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    fixed[GROUND] = Some(0.0);
    for s in &g.voltage_sources {
        assert_eq!(s.neg, GROUND, "oracle only handles grounded sources");
        fixed[s.pos] = Some(s.volts);
    }
    let unknown: Vec<usize> = (0..n).filter(|&k| fixed[k].is_none()).collect();
    let mut index = vec![usize::MAX; n];
    for (i, &k) in unknown.iter().enumerate() {
        index[k] = i;
    }
    let diodes: Vec<usize> = (0..g.branches.len()).filter(|&k| matches!(g.branches[k].element, Element::Diode(_))).collect();
    let mut on = vec![false; g.branches.len()];
    for _ in 0..200 {
        let m = unknown.len();
        let mut a = vec![vec![0.0; m]; m];
        let mut rhs = vec![0.0; m];
        // Conductance g between p and q, plus a current j injected from q into p.
        let mut stamp = |p: usize, q: usize, cond: f64, j: f64| {
            for (x, y, sign) in [(p, q, 1.0), (q, p, -1.0)] {
                if index[x] == usize::MAX {
                    continue;
                }
                let r = index[x];
                a[r][r] += cond;
                match fixed[y] {
                    Some(v) => rhs[r] += cond * v,
                    None => a[r][index[y]] -= cond,
                }
                rhs[r] += sign * j;
            }
        };
        for (k, br) in g.branches.iter().enumerate() {
            let (cond, j) = match br.element {
                Element::Resistor(r) => (1.0 / r, 0.0),
                Element::Memristor { model, .. } => (1.0 / model.resistance(), 0.0),
                Element::Switch { model, v_gs, .. } => {
                    let drive = match model.polarity {
                        Polarity::N => v_gs,
                        Polarity::P => -v_gs,
                    };
                    (1.0 / if drive >= model.v_on { model.r_on } else { model.r_off }, 0.0)
                }
                // On: i = g_on (v - vf) + g_off vf, i.e. a conductance plus a
                // constant current flowing b -> a.
                Element::Diode(d) if on[k] => (d.g_on, (d.g_on - d.g_off) * d.v_forward),
                Element::Diode(d) => (d.g_off, 0.0),
            };
            stamp(br.a, br.b, cond, j);
        }
        for s in &g.current_sources {
            stamp(s.to, s.from, 0.0, s.amps);
        }
        let mut x = gauss_full_pivot(a.clone(), rhs.clone());
        // Two rounds of residual correction.
        for _ in 0..2 {
            let r: Vec<f64> = (0..m).map(|i| rhs[i] - (0..m).map(|j| a[i][j] * x[j]).sum::<f64>()).collect();
            let dx = gauss_full_pivot(a.clone(), r);
            x.iter_mut().zip(dx).for_each(|(x, d)| *x += d);
        }
        let v: Vec<f64> = (0..n).map(|k| fixed[k].unwrap_or_else(|| x[index[k]])).collect();
        let mut changed = false;
        for &k in &diodes {
            let Element::Diode(d) = g.branches[k].element else { unreachable!() };
            let now = v[g.branches[k].a] - v[g.branches[k].b] > d.v_forward;
            changed |= now != on[k];
            on[k] = now;
        }
        if !changed {
            return v;
        }
    }
    panic!("oracle diode iteration did not settle");
}

pub fn random_case(rng: &mut ChaCha8Rng, r_off: f64) -> (CircuitGraph, bool) {
    let mut cfg = ArrayConfig { rows: 2, cols: 2, ..ArrayConfig::default() }.with_leakage(r_off, 1.0 / r_off);
    for r in 0..2 {
        for c in 0..2 {
            let ohms = 10f64.powf(rng.gen_range(2.7..9.0));
            cfg.devices.insert(Address::new(r, c), DeviceModel::ideal(ohms));
        }
    }
    cfg.vddh = rng.gen_range(5.0..=22.0);
    let array = build_array(cfg).unwrap();
    let addr = Address::new(rng.gen_range(0..2), rng.gen_range(0..2));
    let req = match rng.gen_range(0..4) {
        0 => OperationRequest::read(addr),
        1 => OperationRequest::new(Mode::Set, addr, 100.0, rng.gen_range(0.5..array.config().vddh)),
        2 => OperationRequest::new(Mode::Reset, addr, 100.0, rng.gen_range(0.0..array.config().vddh - 0.5)),
        _ => OperationRequest::new(Mode::Form, addr, 100.0, rng.gen_range(5.0..array.config().vddh)),
    }
    .with_vddh(array.config().vddh);
    let act = if rng.gen_bool(0.8) { Activation::in_pulse(&req) } else { Activation::idle(addr, req.v_pad, req.vddh) };
    (netlist_for_operation(&array, &act).unwrap(), req.mode == Mode::Read)
}

/// Worst relative node-voltage mismatch over 100 random cases.
pub fn worst_mismatch(seed: u64, r_off: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (g, read) = random_case(&mut rng, r_off);
        let opts = if read { SolveOptions::READ } else { SolveOptions::PROGRAMMING };
        let engine = solve_dc(&g, opts).unwrap();
        let oracle = oracle_solve(&g);
        for (&a, &b) in engine.node_voltages.iter().zip(&oracle) {
            if a != b {
                worst = worst.max((a - b).abs() / b.abs());
            }
        }
    }
    worst
}

