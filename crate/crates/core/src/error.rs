//! Error type shared by every module.

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by graph construction, queries, solvers and the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// The edge set contains a directed cycle.
    #[error("edge set contains a directed cycle")]
    Cycle,
    /// A node index is out of range.
    #[error("node index {index} out of range for {len} nodes")]
    Index { index: usize, len: usize },
    /// A self-loop was supplied.
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    /// The node passed to `exogenize` is observed.
    #[error("node {0} is not latent")]
    NotLatent(usize),
    /// Query sets overlap or a required set is empty.
    #[error("query sets must be pairwise disjoint with X and Y nonempty")]
    Disjointness,
    /// A set argument is too small.
    #[error("set must contain at least two nodes")]
    Size,
    /// A size parameter is outside the supported range.
    #[error("{what} = {value} is outside the supported range {range}")]
    Range { what: &'static str, value: usize, range: &'static str },
    /// A documented precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// No latent-free graph shares the d-separation fingerprint.
    #[error("no latent-free graph shares this d-separation fingerprint")]
    NoPartner,
    /// Verdicts for smaller graphs are required but absent.
    #[error("verdict store for {0}-node graphs is unavailable")]
    MissingStore(usize),
    /// Support arity does not match the graph.
    #[error("support has {found} variables but the graph has {expected} observed nodes")]
    Arity { found: usize, expected: usize },
    /// Exhaustive enumeration would exceed the configured cap.
    #[error("cardinality product {product} exceeds the exhaustive cap {cap}")]
    Cap { product: usize, cap: usize },
    /// Search exceeded its budget.
    #[error("search timed out after exploring {explored} nodes")]
    Timeout { explored: u64 },
    /// A cache or store failed its integrity check.
    #[error("content hash mismatch in {}", path.display())]
    CacheCorruption { path: PathBuf },
    /// Malformed input.
    #[error("parse error: {0}")]
    Parse(String),
    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// Underlying JSON failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Result alias for this crate.
pub type Result<T> = std::result::Result<T, Error>;
