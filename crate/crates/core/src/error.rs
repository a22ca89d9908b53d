//! Error type shared by all estimators.

use thiserror::Error;

/// Library-wide error enum. Each variant corresponds to a rejection class
/// surfaced by one or more operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("directed graph where an undirected one is required: {0}")]
    DirectedGraph(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("degenerate variance at node {node} (diagonal entry not positive)")]
    DegenerateVariance { node: usize },

    #[error("saturated correlation |rho| >= 1 at pair ({i}, {j})")]
    SaturatedCorrelation { i: usize, j: usize },

    #[error("invalid precision matrix: {0}")]
    InvalidPrecision(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("outside function domain: {0}")]
    Domain(String),

    #[error("kernel error: {0}")]
    Kernel(String),

    #[error("ambiguous problem: {0}")]
    Ambiguity(String),

    #[error("anchor conflict: {0}")]
    Anchor(String),

    #[error("empty observation slot at t = {0}")]
    EmptySlot(usize),

    #[error("zero signal")]
    ZeroSignal,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("csv parse error: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
