//! Enumeration and algebraicness classification of marginalized DAGs (mDAGs).
//!
//! An mDAG is a DAG over observed nodes together with an antichain of
//! facets, each the children set of an exogenous latent. This crate
//! enumerates mDAGs up to relabeling, decides d- and e-separation, and runs
//! a cascade of tests that certify a structure as Algebraic (only equality
//! constraints) or Non-Algebraic, each verdict carrying a checkable witness.

pub mod classify;
pub mod enumeration;
pub mod error;
pub mod graph;
pub mod pipeline;
pub mod separation;
pub mod supports;

pub use error::{Error, Result};
