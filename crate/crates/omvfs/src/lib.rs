//! Streaming engine for online unsupervised multi-view feature
//! selection.
//!
//! Aligned multi-view data arrives in fixed-size chunks. A buffered,
//! graph-regularized joint nonnegative factorization maintains one
//! feature-selection matrix per view plus a consensus cluster indicator
//! over a sliding window of recent chunks; running aggregation matrices
//! compress everything older. Feature importance is the l2 norm of the
//! rows of each view's selection matrix.
//!
//! The crate also ships a full-batch reference solver, clustering
//! metrics (multi-view spherical k-means, optimal-matching accuracy,
//! NMI), and a synthetic stream generator with planted features and a
//! dominant-class drift schedule, which together act as the
//! verification harness for the streaming solver.

pub mod checkpoint;
pub mod driver;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod offline;
pub mod optimizer;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    BandwidthPolicy, FeatureRanking, HyperParams, ModelState, MultiViewChunk, ViewSpec,
};
