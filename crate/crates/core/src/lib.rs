//! Self-supervised graph representation learning on the unit hypersphere.
//!
//! A GNN encoder is trained to align each node with the normalized mean of
//! its neighbors while keeping the mean embedding small. The weight of the
//! second term is adjusted every epoch from a collapse diagnostic. The crate
//! also ships the tape-based differentiation core it trains with, and the
//! downstream evaluations (linear probe, k-means NMI, link-prediction AUC).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod diff;
pub mod egab;
pub mod encoder;
mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod objective;
pub mod parallel;
pub mod pipeline;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
