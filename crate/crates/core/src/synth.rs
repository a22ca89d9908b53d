//! Synthetic graph and signal generators used for benchmarking the solvers.
//!
//! All generators are deterministic under a fixed seed (ChaCha stream).

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{laplacian, Graph, SignalMatrix};

/// Graph families available from [`generate_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticKind {
    /// Undirected G(N, p) with unit weights.
    ErdosRenyi { edge_prob: f64 },
    /// Undirected path 1-2-...-N with unit weights.
    Chain,
    /// Directed acyclic graph: random topological order, each admissible
    /// ordered pair kept with probability `edge_prob`, weights drawn
    /// uniformly from +/-[0.5, 2.0].
    RandomDag { edge_prob: f64 },
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::Param(format!("edge probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Draws a reproducible synthetic graph with `n` nodes.
pub fn generate_synthetic(kind: SyntheticKind, n: usize, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Param(format!("need at least 2 nodes, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SyntheticKind::Chain => {
            let mut w = DMatrix::zeros(n, n);
            for k in 0..n - 1 {
                w[(k, k + 1)] = 1.0;
                w[(k + 1, k)] = 1.0;
            }
            Graph::undirected(w)
        }
        SyntheticKind::ErdosRenyi { edge_prob } => {
            check_prob(edge_prob)?;
            let mut w = DMatrix::zeros(n, n);
            for j in 1..n {
                for i in 0..j {
                    if rng.random::<f64>() < edge_prob {
                        w[(i, j)] = 1.0;
                        w[(j, i)] = 1.0;
                    }
                }
            }
            Graph::undirected(w)
        }
        SyntheticKind::RandomDag { edge_prob } => {
            check_prob(edge_prob)?;
            // Random topological order via Fisher-Yates.
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let mut w = DMatrix::zeros(n, n);
            // Edge from order[a] to order[b] for a < b; W_ij nonzero means j -> i.
            for a in 0..n {
                for b in a + 1..n {
                    if rng.random::<f64>() < edge_prob {
                        let mag = rng.random_range(0.5..2.0);
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        w[(order[b], order[a])] = sign * mag;
                    }
                }
            }
            Graph::directed(w)
        }
    }
}

/// Samples T columns from N(0, (L + delta I)^-1) on an undirected graph.
///
/// The chapter motivates smoothness without fixing a generative model; the
/// diagonally loaded Laplacian precision is the standard proper-GMRF choice
/// and makes the expected total variation tr(L (L + delta I)^-1) explicit.
pub fn generate_smooth_signals(
    g: &Graph,
    t: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<SignalMatrix> {
    if noise_scale <= 0.0 {
        return Err(Error::Param(format!("noise scale must be positive, got {noise_scale}")));
    }
    let n = g.n_nodes();
    let mut prec = laplacian(g)?;
    for i in 0..n {
        prec[(i, i)] += noise_scale;
    }
    let eig = prec.symmetric_eigen();
    // Covariance square root: V diag(1/sqrt(lambda)) V^T applied to white noise.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = DMatrix::zeros(n, t);
    for col in 0..t {
        let z = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let scaled = DVector::from_fn(n, |i, _| z[i] / eig.eigenvalues[i].sqrt());
        let y = &eig.eigenvectors * scaled;
        data.set_column(col, &y);
    }
    SignalMatrix::new(data)
}

/// Default diagonal loading for the smooth-signal generator.
pub const DEFAULT_NOISE_SCALE: f64 = 1e-2;
