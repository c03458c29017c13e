//! Solver cross-checks against a generate-and-test model enumerator on every
//! three-node mDAG and every binary support.

mod common;

use std::sync::OnceLock;

use common::oracle::{binary_supports, solver_oracle};
use mdag_core::enumeration::enumerate_mdags;
use mdag_core::graph::MDag;
use mdag_core::separation::esep_fingerprint;
use mdag_core::supports::{solve, Engine, SolverConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ORACLE_BOUND: usize = 2;

fn sat(bound: Option<usize>) -> SolverConfig {
    SolverConfig { engine: Engine::Sat, bound, ..Default::default() }
}

/// Compatibility of every binary support with every three-node mDAG at the default bound.
fn table() -> &'static (Vec<MDag>, Vec<Vec<bool>>) {
    static T: OnceLock<(Vec<MDag>, Vec<Vec<bool>>)> = OnceLock::new();
    T.get_or_init(|| {
        let graphs = enumerate_mdags(3).unwrap();
        let supports = binary_supports(3);
        let rows = graphs
            .iter()
            .map(|g| supports.iter().map(|s| solve(s, g, &sat(None)).unwrap().is_compatible()).collect())
            .collect();
        (graphs, rows)
    })
}

#[test]
fn engines_agree_with_model_enumeration_at_fixed_bound() {
    let supports = binary_supports(3);
    let backtrack = SolverConfig { engine: Engine::Backtrack, bound: Some(ORACLE_BOUND), ..Default::default() };
    let mut incompatible = 0;
    for g in enumerate_mdags(3).unwrap() {
        for s in &supports {
            let want = solver_oracle(s, &g, ORACLE_BOUND);
            let by_sat = solve(s, &g, &sat(Some(ORACLE_BOUND))).unwrap().is_compatible();
            let by_dfs = solve(s, &g, &backtrack).unwrap().is_compatible();
            assert_eq!(by_sat, want, "sat on {s} vs {:?}", g.facets());
            assert_eq!(by_dfs, want, "backtrack on {s} vs {:?}", g.facets());
            incompatible += usize::from(!want);
        }
    }
    assert!(incompatible > 0);
}

#[test]
fn two_and_three_node_supports_agree_with_oracle_at_default_bound() {
    let (graphs, rows) = table();
    for n in [2usize, 3] {
        let gs = if n == 3 { graphs.clone() } else { enumerate_mdags(2).unwrap() };
        for (gi, g) in gs.iter().enumerate() {
            for (si, s) in binary_supports(n).iter().enumerate() {
                let got = if n == 3 { rows[gi][si] } else { solve(s, g, &sat(None)).unwrap().is_compatible() };
                if s.len() <= 3 {
                    assert_eq!(got, solver_oracle(s, g, s.len()), "{s}");
                }
            }
        }
    }
}

#[test]
fn larger_bound_never_flips_a_verdict() {
    let (graphs, rows) = table();
    for (g, row) in graphs.iter().zip(rows) {
        for (s, &at_len) in binary_supports(3).iter().zip(row) {
            let above = solve(s, g, &sat(Some(s.len() + 1))).unwrap().is_compatible();
            assert_eq!(at_len, above, "{s} vs {:?}", g.facets());
        }
    }
}

#[test]
fn compatible_models_generate_exactly_the_support() {
    let (graphs, rows) = table();
    let supports = binary_supports(3);
    for (g, row) in graphs.iter().zip(rows).step_by(5) {
        for (s, _) in supports.iter().zip(row).filter(|(_, &c)| c).step_by(7) {
            let c = solve(s, g, &SolverConfig::default()).unwrap();
            match c {
                mdag_core::supports::Compatibility::Compatible { model } => {
                    assert_eq!(model.generated_events(g), s.events)
                }
                other => panic!("{other:?}"),
            }
        }
    }
}

#[test]
fn differing_esep_pairs_are_separated_by_a_binary_support() {
    let (graphs, rows) = table();
    let mut pairs = Vec::new();
    for i in 0..graphs.len() {
        for j in i + 1..graphs.len() {
            if esep_fingerprint(&graphs[i]) != esep_fingerprint(&graphs[j]) {
                pairs.push((i, j));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    pairs.shuffle(&mut rng);
    assert!(pairs.len() >= 50);
    for &(i, j) in &pairs[..50] {
        assert!(rows[i].iter().zip(&rows[j]).any(|(a, b)| a != b), "pair {i},{j}");
    }
}
