//! graphtopo: identification of graph topologies from matrices of nodal
//! signals.
//!
//! The crate covers correlation and partial-correlation networks with FDR
//! control, graphical lasso and its Laplacian-constrained variant, graph
//! learning from smooth signals via an accelerated dual method, SEM / VARM /
//! DAG fitting, kernel-based nonlinear SVARMs, time-varying estimators with
//! joint diagonalization, and joint inference of signals and topology from
//! partial observations.

pub mod corrnet;
pub mod dynjd;
pub mod error;
pub mod gmrf;
pub mod graph;
pub mod io;
pub mod jisg;
pub mod ksvarm;
pub mod semdag;
pub mod smoothlearn;
pub mod synth;

pub(crate) mod linalg;

pub use error::{Error, Result};
pub use graph::{
    degree_map, edge_vector_from_graph, laplacian, score_recovery, DegreeOperator, EdgeVector,
    Graph, RecoveryReport, SignalMatrix,
};
pub use synth::{generate_smooth_signals, generate_synthetic, SyntheticKind};
