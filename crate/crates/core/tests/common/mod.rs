//! Named graphs and supports shared by the integration tests.
#![allow(dead_code)]

pub mod oracle;

use mdag_core::graph::MDag;
use mdag_core::supports::Support;

/// X=0, Y=1, A=2, B=3: settings feed outcomes, one shared source.
pub fn bell() -> MDag {
    MDag::new(4, &[(0, 2), (1, 3)], &[vec![2, 3]]).unwrap()
}

/// Correlations of the PR box over (X, Y, A, B).
pub fn pr_box() -> Support {
    Support::from_strs(&[2; 4], &["0000", "0011", "0100", "0111", "1000", "1011", "1110", "1101"]).unwrap()
}

/// Three pairwise sources over A=0, B=1, C=2.
pub fn triangle() -> MDag {
    MDag::new(3, &[], &[vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap()
}

/// Unrelated confounders over C=0, D=1, E=2.
pub fn evans() -> MDag {
    MDag::new(3, &[(0, 1), (0, 2)], &[vec![0, 1], vec![0, 2]]).unwrap()
}

/// Perfectly correlated D, E while C is constant.
pub fn evans_support() -> Support {
    Support::from_strs(&[2; 3], &["000", "011"]).unwrap()
}

/// Instrumental scenario over X=0, A=1, B=2.
pub fn instrumental() -> MDag {
    MDag::new(3, &[(0, 1), (1, 2)], &[vec![1, 2]]).unwrap()
}

/// A four-node structure with three pairwise sources, A=0, B=1, C=2, D=3.
pub fn four_node_support_example() -> MDag {
    MDag::new(4, &[(1, 2), (0, 3), (2, 3)], &[vec![1, 3], vec![0, 1], vec![0, 2]]).unwrap()
}

pub fn four_node_support_example_support() -> Support {
    Support::from_strs(&[2; 4], &["0000", "0001", "0100", "1010"]).unwrap()
}

/// The four structures certified only by the ternary support (A=0, B=1, C=2, D=3).
pub fn ternary_only() -> Vec<MDag> {
    let edges = [(0, 1), (1, 2), (1, 3), (2, 3)];
    [
        vec![vec![1, 2], vec![0, 2], vec![0, 3]],
        vec![vec![1, 2], vec![0, 2], vec![0, 3], vec![2, 3]],
        vec![vec![1, 3], vec![0, 2], vec![0, 3]],
        vec![vec![1, 3], vec![0, 2], vec![0, 3], vec![2, 3]],
    ]
    .iter()
    .map(|f| MDag::new(4, &edges, f).unwrap())
    .collect()
}

/// The three structures no support test resolves (A=0, B=1, C=2, D=3).
pub fn unresolved_trio() -> Vec<MDag> {
    let edges = [(0, 1), (1, 2), (1, 3), (2, 3)];
    [
        vec![vec![1, 2, 3], vec![0, 2], vec![0, 3]],
        vec![vec![1, 2], vec![1, 3], vec![0, 2], vec![0, 3]],
        vec![vec![1, 2], vec![1, 3], vec![0, 2], vec![0, 3], vec![2, 3]],
    ]
    .iter()
    .map(|f| MDag::new(4, &edges, f).unwrap())
    .collect()
}

/// A=0, C=1, D=2, E=3 with a source shared by D and E.
pub fn hlp_start() -> MDag {
    MDag::new(4, &[(0, 2), (1, 2), (1, 3)], &[vec![2, 3]]).unwrap()
}

/// [`hlp_start`] plus E -> D.
pub fn hlp_middle() -> MDag {
    MDag::new(4, &[(0, 2), (1, 2), (1, 3), (3, 2)], &[vec![2, 3]]).unwrap()
}

/// The latent-free end point of the transformation path.
pub fn hlp_end() -> MDag {
    MDag::latent_free(4, &[(0, 2), (1, 2), (1, 3), (3, 2)]).unwrap()
}
