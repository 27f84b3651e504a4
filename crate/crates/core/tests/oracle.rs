//! Cross-checks the nodal engine against the naive solver in `common`.

mod common;

use common::worst_mismatch;

// Sense islands that float on pair-switch leakage are conditioned roughly
// as g_on / g_off; with a 1 MOhm floor every node is well determined.
#[test]
fn engine_matches_naive_nodal_solver() {
    let worst = worst_mismatch(0x2a2a, 1e6);
    assert!(worst <= 1e-9, "worst relative mismatch {worst:e}");
}

#[test]
fn engine_matches_naive_solver_with_high_leakage_resistance() {
    // 0.1 S / 1 nS: only ~8 significant digits survive on floating islands.
    let worst = worst_mismatch(0x2a2b, 1e9);
    assert!(worst <= 1e-6, "worst relative mismatch {worst:e}");
}
