//! Core graph and signal data types shared by every estimator.
//!
//! Edge vectorization follows a single convention throughout the crate:
//! the upper triangle of a symmetric zero-diagonal adjacency is read in
//! column-major order, i.e. pairs (0,1), (0,2), (1,2), (0,3), (1,3), ...

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// N x T matrix of nodal observations. Columns are time snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    data: DMatrix<f64>,
}

impl SignalMatrix {
    /// Validates finiteness and N >= 2. T = 0 is allowed (empty sample set).
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::Shape(format!(
                "signal matrix needs at least 2 nodes, got {}",
                data.nrows()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal matrix entry".into()));
        }
        Ok(Self { data })
    }

    pub fn n_nodes(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Row of the matrix: all T samples observed at one node.
    pub fn node_series(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    pub fn snapshot(&self, t: usize) -> DVector<f64> {
        self.data.column(t).into_owned()
    }
}

/// Weighted adjacency matrix with a directedness flag.
///
/// Undirected graphs are symmetric with nonnegative weights; both kinds
/// keep an identically zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    weights: DMatrix<f64>,
    directed: bool,
}

impl Graph {
    pub fn undirected(weights: DMatrix<f64>) -> Result<Self> {
        Self::validate_square(&weights)?;
        let n = weights.nrows();
        for j in 0..n {
            for i in 0..j {
                if (weights[(i, j)] - weights[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Shape(format!(
                        "undirected adjacency must be symmetric; mismatch at ({i}, {j})"
                    )));
                }
                if weights[(i, j)] < 0.0 {
                    return Err(Error::Param(format!(
                        "undirected weights must be nonnegative; W[{i},{j}] = {}",
                        weights[(i, j)]
                    )));
                }
            }
        }
        Ok(Self { weights, directed: false })
    }

    pub fn directed(weights: DMatrix<f64>) -> Result<Self> {
        Self::validate_square(&weights)?;
        Ok(Self { weights, directed: true })
    }

    fn validate_square(weights: &DMatrix<f64>) -> Result<()> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::Shape(format!(
                "adjacency must be square, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if weights.nrows() < 2 {
            return Err(Error::Shape("graph needs at least 2 nodes".into()));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("adjacency entry".into()));
        }
        for i in 0..weights.nrows() {
            if weights[(i, i)] != 0.0 {
                return Err(Error::Param(format!("diagonal must be zero, W[{i},{i}] != 0")));
            }
        }
        Ok(())
    }

    pub fn empty(n: usize, directed: bool) -> Result<Self> {
        let weights = DMatrix::zeros(n, n);
        if directed { Self::directed(weights) } else { Self::undirected(weights) }
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Nodal degree vector W1 (undirected) or in-degree row sums (directed).
    pub fn degree_vector(&self) -> DVector<f64> {
        let n = self.n_nodes();
        DVector::from_fn(n, |i, _| self.weights.row(i).sum())
    }

    /// Edges with |weight| above `tol`. Undirected graphs list each pair once
    /// (i < j); directed graphs list ordered pairs (i, j) with W_ij != 0,
    /// read as j -> i.
    pub fn support(&self, tol: f64) -> Vec<(usize, usize)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        if self.directed {
            for i in 0..n {
                for j in 0..n {
                    if i != j && self.weights[(i, j)].abs() > tol {
                        out.push((i, j));
                    }
                }
            }
        } else {
            for (i, j) in edge_pairs(n) {
                if self.weights[(i, j)].abs() > tol {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self, tol: f64) -> usize {
        self.support(tol).len()
    }
}

/// Iterates unordered pairs (i, j), j > i, in column-major upper-triangular
/// order. This is the shared edge enumeration for all EdgeVector users.
pub fn edge_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..n).flat_map(move |j| (0..j).map(move |i| (i, j)))
}

/// Number of unordered pairs N(N-1)/2.
pub fn n_pairs(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Position of pair (i, j), i < j, in the shared edge order.
pub fn pair_index(i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    j * (j - 1) / 2 + i
}

/// Upper-triangular vectorization w of a symmetric zero-diagonal adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVector {
    w: DVector<f64>,
    n_nodes: usize,
}

impl EdgeVector {
    pub fn new(w: DVector<f64>, n_nodes: usize) -> Result<Self> {
        if w.len() != n_pairs(n_nodes) {
            return Err(Error::Shape(format!(
                "edge vector for {} nodes needs {} entries, got {}",
                n_nodes,
                n_pairs(n_nodes),
                w.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("edge weight".into()));
        }
        if w.iter().any(|&v| v < 0.0) {
            return Err(Error::Param("edge weights must be nonnegative".into()));
        }
        Ok(Self { w, n_nodes })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.len() == 0
    }

    /// Inverse of [`edge_vector_from_graph`]: rebuilds the symmetric adjacency.
    pub fn to_graph(&self) -> Graph {
        let n = self.n_nodes;
        let mut weights = DMatrix::zeros(n, n);
        for (k, (i, j)) in edge_pairs(n).enumerate() {
            weights[(i, j)] = self.w[k];
            weights[(j, i)] = self.w[k];
        }
        Graph { weights, directed: false }
    }
}

/// Extracts the upper triangle of an undirected graph in the shared order.
pub fn edge_vector_from_graph(g: &Graph) -> Result<EdgeVector> {
    if g.is_directed() {
        return Err(Error::DirectedGraph("edge vectorization".into()));
    }
    let n = g.n_nodes();
    let w = DVector::from_iterator(n_pairs(n), edge_pairs(n).map(|(i, j)| g.weights()[(i, j)]));
    Ok(EdgeVector { w, n_nodes: n })
}

/// Linear map S from edge weights to nodal degrees, d = Sw. The matrix is
/// never materialized; `apply` and `apply_adjoint` act directly.
#[derive(Debug, Clone, Copy)]
pub struct DegreeOperator {
    n_nodes: usize,
}

impl DegreeOperator {
    pub fn new(n_nodes: usize) -> Self {
        Self { n_nodes }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        n_pairs(self.n_nodes)
    }

    /// d = S w: each edge weight contributes to the degrees of both endpoints.
    pub fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut d = DVector::zeros(self.n_nodes);
        for (k, (i, j)) in edge_pairs(self.n_nodes).enumerate() {
            d[i] += w[k];
            d[j] += w[k];
        }
        d
    }

    /// (S^T v)_k = v_i + v_j for edge k = (i, j).
    pub fn apply_adjoint(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n_edges(), edge_pairs(self.n_nodes).map(|(i, j)| v[i] + v[j]))
    }
}

/// Degree vector of the graph reconstructed from `w`.
pub fn degree_map(w: &EdgeVector) -> DVector<f64> {
    DegreeOperator::new(w.n_nodes()).apply(w.values())
}

/// Combinatorial Laplacian L = diag(W1) - W of an undirected graph.
pub fn laplacian(g: &Graph) -> Result<DMatrix<f64>> {
    if g.is_directed() {
        return Err(Error::DirectedGraph("laplacian".into()));
    }
    let n = g.n_nodes();
    let d = g.degree_vector();
    let mut l = -g.weights().clone();
    for i in 0..n {
        l[(i, i)] = d[i];
    }
    Ok(l)
}

/// Support-recovery scores plus the raw Frobenius weight error.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub frobenius_error: f64,
}

/// Compares edge supports after zeroing entries with |W_ij| <= weight_tol.
///
/// Convention: when both supports are empty the scores are 1; when only the
/// estimate is empty precision is 0 (no true positives to credit).
pub fn score_recovery(estimated: &Graph, truth: &Graph, weight_tol: f64) -> Result<RecoveryReport> {
    if estimated.n_nodes() != truth.n_nodes() {
        return Err(Error::Shape(format!(
            "node count mismatch: {} vs {}",
            estimated.n_nodes(),
            truth.n_nodes()
        )));
    }
    if estimated.is_directed() != truth.is_directed() {
        return Err(Error::Shape("directedness mismatch".into()));
    }
    let est: std::collections::BTreeSet<_> = estimated.support(weight_tol).into_iter().collect();
    let tru: std::collections::BTreeSet<_> = truth.support(weight_tol).into_iter().collect();
    let tp = est.intersection(&tru).count() as f64;
    let (precision, recall) = if est.is_empty() && tru.is_empty() {
        (1.0, 1.0)
    } else {
        let p = if est.is_empty() { 0.0 } else { tp / est.len() as f64 };
        let r = if tru.is_empty() { 1.0 } else { tp / tru.len() as f64 };
        (p, r)
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let frobenius_error = (estimated.weights() - truth.weights()).norm();
    Ok(RecoveryReport { precision, recall, f1, frobenius_error })
}

/// Default threshold below which a weight counts as "no edge".
pub const DEFAULT_WEIGHT_TOL: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn graph3() -> Graph {
        // W12 = 1, W13 = 2, W23 = 4 in 1-based labels
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 4.0, 2.0, 4.0, 0.0]);
        Graph::undirected(w).unwrap()
    }

    #[test]
    fn edge_vector_single_edge() {
        let g = Graph::undirected(DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0])).unwrap();
        let e = edge_vector_from_graph(&g).unwrap();
        assert_eq!(e.values().as_slice(), &[3.0]);
    }

    #[test]
    fn edge_vector_empty_graph() {
        let g = Graph::empty(4, false).unwrap();
        let e = edge_vector_from_graph(&g).unwrap();
        assert_eq!(e.len(), 6);
        assert!(e.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn edge_vector_column_major_order() {
        let e = edge_vector_from_graph(&graph3()).unwrap();
        assert_eq!(e.values().as_slice(), &[1.0, 2.0, 4.0]);
    }

    #[test]
    fn edge_vector_rejects_directed() {
        let mut w = DMatrix::zeros(2, 2);
        w[(0, 1)] = 1.0;
        let g = Graph::directed(w).unwrap();
        assert!(matches!(edge_vector_from_graph(&g), Err(Error::DirectedGraph(_))));
    }

    #[test]
    fn edge_vector_round_trip() {
        let g = graph3();
        let back = edge_vector_from_graph(&g).unwrap().to_graph();
        assert_eq!(back.weights(), g.weights());
    }

    #[test]
    fn degree_map_examples() {
        let g2 = Graph::undirected(DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0])).unwrap();
        let d = degree_map(&edge_vector_from_graph(&g2).unwrap());
        assert_eq!(d.as_slice(), &[3.0, 3.0]);

        let zero = EdgeVector::new(DVector::zeros(3), 3).unwrap();
        assert!(degree_map(&zero).iter().all(|&v| v == 0.0));

        let d3 = degree_map(&edge_vector_from_graph(&graph3()).unwrap());
        assert_eq!(d3.as_slice(), &[3.0, 5.0, 6.0]);
    }

    #[test]
    fn adjoint_consistent_with_apply() {
        // <Sw, v> == <w, S^T v> for a fixed instance
        let op = DegreeOperator::new(5);
        let w = DVector::from_fn(op.n_edges(), |k, _| (k as f64 + 1.0) * 0.3);
        let v = DVector::from_fn(5, |i, _| (i as f64) - 2.0);
        let lhs = op.apply(&w).dot(&v);
        let rhs = w.dot(&op.apply_adjoint(&v));
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn laplacian_examples() {
        let g2 = Graph::undirected(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let l = laplacian(&g2).unwrap();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));

        let l0 = laplacian(&Graph::empty(3, false).unwrap()).unwrap();
        assert!(l0.iter().all(|&v| v == 0.0));

        let l3 = laplacian(&graph3()).unwrap();
        let expect =
            DMatrix::from_row_slice(3, 3, &[3.0, -1.0, -2.0, -1.0, 5.0, -4.0, -2.0, -4.0, 6.0]);
        assert_eq!(l3, expect);
    }

    #[test]
    fn laplacian_row_sums_vanish() {
        let l = laplacian(&graph3()).unwrap();
        let ones = DVector::from_element(3, 1.0);
        assert!((l * ones).norm() < 1e-12);
    }

    #[test]
    fn score_recovery_cases() {
        let truth = graph3();
        let r = score_recovery(&truth, &truth, 1e-6).unwrap();
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.frobenius_error, 0.0);

        let empty = Graph::empty(3, false).unwrap();
        let r = score_recovery(&empty, &truth, 1e-6).unwrap();
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.f1, 0.0);

        // truth has 2 edges, estimate shares 1 of its 2
        let t = Graph::undirected(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        ))
        .unwrap();
        let e = Graph::undirected(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
        ))
        .unwrap();
        let r = score_recovery(&e, &t, 1e-6).unwrap();
        assert_abs_diff_eq!(r.precision, 0.5);
        assert_abs_diff_eq!(r.recall, 0.5);
        assert_abs_diff_eq!(r.f1, 0.5);
    }

    #[test]
    fn score_recovery_shape_mismatch() {
        let a = Graph::empty(3, false).unwrap();
        let b = Graph::empty(4, false).unwrap();
        assert!(matches!(score_recovery(&a, &b, 1e-6), Err(Error::Shape(_))));
    }

    #[test]
    fn signal_matrix_rejects_single_node() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        assert!(SignalMatrix::new(m).is_err());
    }

    #[test]
    fn signal_matrix_rejects_nan() {
        let m = DMatrix::from_row_slice(2, 1, &[f64::NAN, 0.0]);
        assert!(matches!(SignalMatrix::new(m), Err(Error::NonFinite(_))));
    }
}
