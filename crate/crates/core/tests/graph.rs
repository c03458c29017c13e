mod common;

use common::{bell, evans, triangle};
use mdag_core::enumeration::enumerate_mdags;
use mdag_core::error::Error;
use mdag_core::graph::*;
use mdag_core::separation::dsep_fingerprint;
use proptest::prelude::*;

fn set(v: &[usize]) -> NodeSet {
    NodeSet::from_nodes(v.iter().copied())
}

/// A=0, B=1, C=2, D=3, E=4.
fn five_node_example() -> Dag {
    Dag::new(5, 0, &[(3, 0), (3, 2), (3, 1), (0, 1), (2, 4)]).unwrap()
}

/// Observed A=0, D=1, E=2, F=3; latent B=4 (parents A, C) and C=5.
fn exogenization_example() -> Dag {
    Dag::new(4, 2, &[(0, 4), (5, 4), (4, 1), (4, 2), (5, 3)]).unwrap()
}

/// Observed D=0, E=1, F=2, G=3 with three latent sources.
fn unseparable_nonadjacent() -> MDag {
    MDag::new(4, &[(0, 1), (1, 2)], &[vec![0, 2], vec![1, 3], vec![0, 3]]).unwrap()
}

#[test]
fn bell_dag_builds() {
    let d = build_dag(4, 1, &[(0, 2), (1, 3), (4, 2), (4, 3)]).unwrap();
    assert_eq!(d.n_observed(), 4);
    assert_eq!(d.n_latent(), 1);
    assert_eq!(to_mdag(&d), bell());
}

#[test]
fn construction_errors() {
    assert!(build_dag(1, 0, &[]).is_ok());
    assert!(matches!(build_dag(2, 0, &[(0, 1), (1, 0)]), Err(Error::Cycle)));
    assert!(matches!(build_dag(2, 0, &[(1, 1)]), Err(Error::SelfLoop(1))));
    assert!(matches!(build_dag(2, 0, &[(0, 2)]), Err(Error::Index { index: 2, len: 2 })));
    assert!(matches!(MDag::new(7, &[], &[]), Err(Error::Range { .. })));
    assert!(matches!(MDag::new(3, &[], &[vec![0, 3]]), Err(Error::Index { .. })));
}

#[test]
fn relatives_of_example() {
    let d = five_node_example();
    assert_eq!(d.relatives(1, Relation::Parents).unwrap(), set(&[0, 3]));
    assert_eq!(d.relatives(3, Relation::Children).unwrap(), set(&[0, 1, 2]));
    assert_eq!(d.relatives(4, Relation::Ancestors).unwrap(), set(&[2, 3, 4]));
    assert_eq!(d.relatives(3, Relation::Descendants).unwrap(), set(&[0, 1, 2, 3, 4]));
    assert!(matches!(d.relatives(5, Relation::Parents), Err(Error::Index { .. })));
    for v in 0..5 {
        assert_eq!(d.ancestors(v).inter(d.descendants(v)), NodeSet::singleton(v));
    }
}

#[test]
fn exogenization_rewires_parents_to_children() {
    let g = exogenization_example();
    let b = exogenize(&g, 4).unwrap();
    assert_eq!(b.parents(4), NodeSet::EMPTY);
    assert_eq!(b.parents(1), set(&[0, 4, 5]));
    assert_eq!(b.parents(2), set(&[0, 4, 5]));
    assert_eq!(b.parents(3), set(&[5]));
    let root = exogenize(&g, 5).unwrap();
    assert_eq!(root, g);
    assert!(matches!(exogenize(&g, 0), Err(Error::NotLatent(0))));
    assert!(matches!(exogenize(&g, 6), Err(Error::Index { .. })));
}

#[test]
fn exogenizing_a_chain_latent() {
    let g = Dag::new(2, 1, &[(0, 2), (2, 1)]).unwrap();
    let e = exogenize(&g, 2).unwrap();
    assert_eq!(e.edges(), vec![(0, 1), (2, 1)]);
    assert_eq!(e.parents(2), NodeSet::EMPTY);
}

#[test]
fn reduction_of_the_exogenization_example() {
    let m = to_mdag(&exogenization_example());
    assert_eq!(m.edges(), vec![(0, 1), (0, 2)]);
    assert_eq!(m.facets(), &[set(&[1, 2, 3])]);
}

#[test]
fn nested_latents_merge() {
    let g = Dag::new(3, 2, &[(3, 0), (3, 1), (4, 0), (4, 1), (4, 2)]).unwrap();
    assert_eq!(to_mdag(&g).facets(), &[set(&[0, 1, 2])]);
    let free = Dag::new(3, 0, &[(0, 1), (1, 2)]).unwrap();
    let m = to_mdag(&free);
    assert!(m.facets().is_empty());
    assert_eq!(m.edges(), free.edges());
}

#[test]
fn exogenization_preserves_observed_dsep() {
    for m in enumerate_mdags(3).unwrap() {
        for extra in 0..3 {
            let mut edges = m.as_dag().edges();
            let lam = 3 + m.facets().len();
            edges.push((extra, lam));
            for c in 0..3 {
                if c != extra && !m.as_dag().descendants(c).contains(extra) {
                    edges.push((lam, c));
                }
            }
            let g = Dag::new(3, m.facets().len() + 1, &edges).unwrap();
            for l in 3..g.n_total() {
                let e = exogenize(&g, l).unwrap();
                assert_eq!(dsep_fingerprint(&e), dsep_fingerprint(&g));
            }
        }
    }
}

#[test]
fn reduction_is_idempotent() {
    for m in enumerate_mdags(3).unwrap().into_iter().chain(enumerate_mdags(4).unwrap().into_iter().step_by(37)) {
        assert_eq!(to_mdag(&m.embed()), m);
    }
}

#[test]
fn relabeled_pair_shares_a_code() {
    let a = MDag::new(2, &[(0, 1)], &[vec![0, 1]]).unwrap();
    let b = MDag::new(2, &[(1, 0)], &[vec![0, 1]]).unwrap();
    assert_eq!(canonical_form(&a), canonical_form(&b));
    let tri = MDag::new(4, &[], &[vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
    assert_ne!(canonical_form(&bell()), canonical_form(&tri));
}

#[test]
fn three_node_codes_are_distinct() {
    let mdags = enumerate_mdags(3).unwrap();
    let codes: std::collections::HashSet<_> = mdags.iter().map(canonical_form).collect();
    assert_eq!(codes.len(), 46);
}

#[test]
fn codes_round_trip() {
    for m in enumerate_mdags(4).unwrap() {
        let code = canonical_form(&m);
        assert_eq!(code.decode().unwrap(), m);
        assert_eq!(code.to_string().parse::<CanonicalCode>().unwrap(), code);
        let json = serde_json::to_string(&code).unwrap();
        assert_eq!(serde_json::from_str::<CanonicalCode>(&json).unwrap(), code);
    }
    assert!("4-zz-00".parse::<CanonicalCode>().is_err());
}

#[test]
fn deletion_examples() {
    let e = evans().delete_observed(NodeSet::singleton(0));
    assert!(e.facets().is_empty());
    assert!(e.edges().is_empty());
    assert_eq!(triangle().delete_observed(NodeSet::EMPTY), triangle());
    let g = unseparable_nonadjacent().delete_observed(set(&[0, 1]));
    assert_eq!(g.n_observed(), 2);
    assert!(g.facets().is_empty() && g.edges().is_empty());
}

#[test]
fn adjacency_examples() {
    let b = bell();
    assert!(b.adjacent(2, 3).unwrap());
    assert!(!b.adjacent(0, 1).unwrap());
    assert!(b.adjacent(0, 2).unwrap());
    assert!(!unseparable_nonadjacent().adjacent(2, 3).unwrap());
    assert!(matches!(b.adjacent(0, 4), Err(Error::Index { .. })));
}

#[test]
fn graph_json_round_trips() {
    let m = bell();
    let text = serde_json::to_string(&m).unwrap();
    assert_eq!(parse_graph(&text).unwrap(), m);
    let dag = r#"{"n_obs":4,"n_lat":1,"edges":[[0,2],[1,3],[4,2],[4,3]]}"#;
    assert_eq!(parse_graph(dag).unwrap(), m);
    assert!(parse_graph(r#"{"n":2,"edges":[[0,1],[1,0]],"facets":[]}"#).is_err());
}

fn arb_mdag() -> impl Strategy<Value = MDag> {
    (2usize..=5)
        .prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(any::<bool>(), n * (n - 1) / 2),
                proptest::collection::vec(0u32..1 << n, 0..4),
            )
        })
        .prop_map(|(n, forward, facets)| {
            let mut edges = Vec::new();
            let mut k = 0;
            for u in 0..n {
                for v in u + 1..n {
                    if forward[k] {
                        edges.push((u, v));
                    }
                    k += 1;
                }
            }
            let mut parents = vec![NodeSet::EMPTY; n];
            for (u, v) in edges {
                parents[v] = parents[v].with(u);
            }
            MDag::from_masks(n, parents, facets.into_iter().map(NodeSet).collect()).unwrap()
        })
}

proptest! {
    #[test]
    fn code_is_relabeling_invariant(m in arb_mdag(), seed in any::<u64>()) {
        let n = m.n_observed();
        let perms = all_permutations(n);
        let perm = &perms[(seed % perms.len() as u64) as usize];
        let p = m.permuted(perm);
        prop_assert_eq!(canonical_form(&m), canonical_form(&p));
        prop_assert_eq!(dsep_fingerprint(&p), dsep_fingerprint(&m).permuted(perm));
    }

    #[test]
    fn representative_is_isomorphic(m in arb_mdag()) {
        let (code, perm) = canonical_form_with_perm(&m);
        prop_assert_eq!(m.permuted(&perm), code.decode().unwrap());
        for a in automorphisms(&m) {
            prop_assert_eq!(m.permuted(&a), m.clone());
        }
    }
}
