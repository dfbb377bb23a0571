//! Rooted, slate-marked network configurations and the truncated rooted-graph
//! distance between them.

mod distance;
mod graph;
mod matching;
mod rooted;
mod slate;

pub use distance::{config_distance, mark_discrepancy, DistanceMatrix, PreparedConfig};
pub use graph::Graph;
pub use matching::{MatchOptions, RootMarkPolicy};
pub use rooted::{extract_config, extract_config_marked, ConfigDump, RootedConfig};
pub use slate::{TreatmentSlate, MAX_SLATE_DIM};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("node {node} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("slate dimension {0} outside [1, {max}]", max = MAX_SLATE_DIM)]
    SlateDimension(usize),
    #[error("slate entry {value} at position {pos} is not -1 or +1")]
    InvalidSlateEntry { pos: usize, value: i8 },
    #[error("slate dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("expected {expected} per-node marks, got {got}")]
    MarkCount { expected: usize, got: usize },
    #[error("radius {requested} exceeds config radius {available}")]
    RadiusTooLarge { requested: usize, available: usize },
    #[error("ball has {size} vertices, above the cap of {cap}")]
    BallTooLarge { size: usize, cap: usize },
    #[error("covariate marks requested but missing on a config")]
    MissingCovariateMarks,
    #[error("invalid config: {0}")]
    Invalid(String),
}
