//! Graph learning from smooth signals via an accelerated proximal-gradient
//! method on the dual, plus the discriminative multi-class variant and
//! low-pass GFT classification.
//!
//! Primal problem over edge weights w >= 0 with distance vector e:
//!   min  2 w'e + beta ||w||^2 - alpha 1' log(S w)
//! The dual is smooth with gradient Lipschitz constant (N-1)/beta, which
//! permits momentum iterations with a closed-form proximal step and an O(1/k)
//! guarantee on the recovered primal sequence.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::{laplacian, DegreeOperator, EdgeVector, Graph, SignalMatrix};
use crate::linalg::sorted_symmetric_eigen;

/// Upper-triangular vectorization of the nodal squared-distance matrix.
/// Entries may be negative for discriminative effective distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceVector {
    e: DVector<f64>,
    n_nodes: usize,
}

impl DistanceVector {
    pub fn new(e: DVector<f64>, n_nodes: usize) -> Result<Self> {
        if e.len() != crate::graph::n_pairs(n_nodes) {
            return Err(Error::Shape(format!(
                "distance vector for {} nodes needs {} entries, got {}",
                n_nodes,
                crate::graph::n_pairs(n_nodes),
                e.len()
            )));
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("distance entry".into()));
        }
        Ok(Self { e, n_nodes })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.e
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
}

/// E_ij = || ybar_i - ybar_j ||^2 over node series, in the shared edge order.
pub fn distance_vector(y: &SignalMatrix) -> DistanceVector {
    let n = y.n_nodes();
    let e = DVector::from_iterator(
        crate::graph::n_pairs(n),
        crate::graph::edge_pairs(n)
            .map(|(i, j)| (y.node_series(i) - y.node_series(j)).norm_squared()),
    );
    DistanceVector { e, n_nodes: n }
}

/// Momentum state of the dual iteration.
#[derive(Debug, Clone)]
pub struct DualState {
    /// Dual variable lambda_k.
    pub lambda: DVector<f64>,
    /// Extrapolation point omega_k.
    pub omega: DVector<f64>,
    /// Momentum scalar t_k.
    pub t: f64,
    /// Iteration counter.
    pub k: usize,
}

/// Solver output: primal weights, dual state, and objective values.
#[derive(Debug, Clone)]
pub struct SmoothLearnResult {
    pub w: EdgeVector,
    pub dual: DualState,
    /// 2 w'e + beta ||w||^2 - alpha 1' log(Sw) at the returned iterate.
    pub primal_obj: f64,
    /// Minimization-form dual value F(lambda) + G(lambda); the duality gap
    /// is primal_obj + dual_obj >= 0.
    pub dual_obj: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-iterate snapshots used by the convergence-envelope check.
#[derive(Debug, Clone, Default)]
pub struct IterateHistory {
    /// Primal iterate w_hat_k for k = 1, 2, ...
    pub primal: Vec<DVector<f64>>,
    /// Dual iterate lambda_k for k = 1, 2, ...
    pub dual: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct LearnGraphOptions {
    /// Relative dual-iterate change that stops the iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial dual point; defaults to zero.
    pub lambda0: Option<DVector<f64>>,
}

impl Default for LearnGraphOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100_000, lambda0: None }
    }
}

fn check_params(alpha: f64, beta: f64) -> Result<()> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::Param(format!("alpha must be positive, got {alpha}")));
    }
    if beta <= 0.0 || !beta.is_finite() {
        return Err(Error::Param(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

/// Primal recovery map: w(lambda) = max(0, (S'lambda - 2e) / (2 beta)).
fn primal_from_dual(
    op: &DegreeOperator,
    lambda: &DVector<f64>,
    e: &DVector<f64>,
    beta: f64,
) -> DVector<f64> {
    let st = op.apply_adjoint(lambda);
    DVector::from_fn(e.len(), |k, _| ((st[k] - 2.0 * e[k]) / (2.0 * beta)).max(0.0))
}

/// Primal objective; +inf when some degree is nonpositive.
pub fn primal_objective(
    w: &DVector<f64>,
    e: &DVector<f64>,
    alpha: f64,
    beta: f64,
    n_nodes: usize,
) -> f64 {
    let op = DegreeOperator::new(n_nodes);
    let d = op.apply(w);
    if d.iter().any(|&v| v <= 0.0) {
        return f64::INFINITY;
    }
    2.0 * w.dot(e) + beta * w.norm_squared() - alpha * d.iter().map(|v| v.ln()).sum::<f64>()
}

/// Minimization-form dual value F(lambda) + G(lambda); +inf outside the
/// domain lambda > 0 of the barrier conjugate.
pub fn dual_objective(
    lambda: &DVector<f64>,
    e: &DVector<f64>,
    alpha: f64,
    beta: f64,
    n_nodes: usize,
) -> f64 {
    if lambda.iter().any(|&v| v <= 0.0) {
        return f64::INFINITY;
    }
    let op = DegreeOperator::new(n_nodes);
    let w = primal_from_dual(op.as_ref(), lambda, e, beta);
    let st = op.apply_adjoint(lambda);
    let f_conj = w.dot(&st) - 2.0 * w.dot(e) - beta * w.norm_squared();
    let g_conj: f64 = lambda.iter().map(|&l| alpha * ((alpha / l).ln() - 1.0)).sum();
    f_conj + g_conj
}

// DegreeOperator is Copy; this lets the helpers above take &DegreeOperator.
impl AsRef<DegreeOperator> for DegreeOperator {
    fn as_ref(&self) -> &DegreeOperator {
        self
    }
}

/// Learns an undirected graph from a distance vector by momentum iterations
/// on the dual problem. See module docs for the updates; the step is exact
/// with constant L = (N-1)/beta, so there is nothing to tune beyond
/// (alpha, beta).
pub fn learn_graph(
    e: &DistanceVector,
    alpha: f64,
    beta: f64,
    opts: &LearnGraphOptions,
) -> Result<SmoothLearnResult> {
    let (result, _) = run_dual_solver(e, alpha, beta, opts, false)?;
    Ok(result)
}

/// Same solver, recording every primal/dual iterate.
pub fn learn_graph_with_history(
    e: &DistanceVector,
    alpha: f64,
    beta: f64,
    opts: &LearnGraphOptions,
) -> Result<(SmoothLearnResult, IterateHistory)> {
    run_dual_solver(e, alpha, beta, opts, true)
}

fn run_dual_solver(
    e: &DistanceVector,
    alpha: f64,
    beta: f64,
    opts: &LearnGraphOptions,
    record: bool,
) -> Result<(SmoothLearnResult, IterateHistory)> {
    check_params(alpha, beta)?;
    let n = e.n_nodes();
    let op = DegreeOperator::new(n);
    let lip = (n as f64 - 1.0) / beta;
    let ev = e.values();

    let lambda0 = match &opts.lambda0 {
        Some(l0) => {
            if l0.len() != n {
                return Err(Error::Shape(format!(
                    "lambda0 must have length {n}, got {}",
                    l0.len()
                )));
            }
            l0.clone()
        }
        None => DVector::zeros(n),
    };

    let mut history = IterateHistory::default();
    let mut lambda_prev = lambda0.clone();
    let mut omega = lambda0.clone();
    let mut t = 1.0_f64;
    let mut lambda = lambda0;
    let mut converged = false;
    let mut iters = 0;

    for k in 1..=opts.max_iter {
        iters = k;
        // w_bar = max(0, (S'omega - 2e) / (2 beta))
        let w_bar = primal_from_dual(&op, &omega, ev, beta);
        let s_wbar = op.apply(&w_bar);
        // u = (S w_bar - L omega + sqrt((S w_bar - L omega)^2 + 4 alpha L)) / 2
        let u = DVector::from_fn(n, |i, _| {
            let v = s_wbar[i] - lip * omega[i];
            (v + (v * v + 4.0 * alpha * lip).sqrt()) / 2.0
        });
        let lambda_next = DVector::from_fn(n, |i, _| omega[i] - (s_wbar[i] - u[i]) / lip);
        let t_next = 0.5 + (0.25 + t * t).sqrt();
        let momentum = (t - 1.0) / t_next;
        omega = &lambda_next + (&lambda_next - &lambda) * momentum;
        lambda_prev.copy_from(&lambda);
        lambda = lambda_next;
        t = t_next;

        if record {
            history.primal.push(primal_from_dual(&op, &lambda, ev, beta));
            history.dual.push(lambda.clone());
        }

        let delta = (&lambda - &lambda_prev).norm();
        if delta <= opts.tol * lambda_prev.norm().max(1.0) {
            converged = true;
            break;
        }
    }

    let w = primal_from_dual(&op, &lambda, ev, beta);
    let primal_obj = primal_objective(&w, ev, alpha, beta, n);
    let dual_obj = dual_objective(&lambda, ev, alpha, beta, n);
    let result = SmoothLearnResult {
        w: EdgeVector::new(w, n)?,
        dual: DualState { lambda, omega, t, k: iters },
        primal_obj,
        dual_obj,
        iterations: iters,
        converged,
    };
    Ok((result, history))
}

/// Checks the O(1/k) primal envelope
///   ||w_hat_k - w*|| <= sqrt(2(N-1)) ||lambda_0 - lambda*|| / (beta k)
/// for every recorded iterate against a high-accuracy reference pair.
pub fn convergence_envelope(
    history: &IterateHistory,
    lambda_star: &DVector<f64>,
    w_star: &DVector<f64>,
    beta: f64,
    n_nodes: usize,
    lambda0: &DVector<f64>,
) -> Result<bool> {
    if history.primal.is_empty() {
        return Err(Error::EmptyInput("iterate history".into()));
    }
    let scale = (2.0 * (n_nodes as f64 - 1.0)).sqrt() * (lambda0 - lambda_star).norm() / beta;
    for (idx, w_k) in history.primal.iter().enumerate() {
        let k = (idx + 1) as f64;
        if (w_k - w_star).norm() > scale / k + 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Effective distances for the discriminative per-class problem:
/// e_eff = e_c - gamma * sum_{k != c} e_k, which plugs straight back into
/// [`learn_graph`].
pub fn discriminative_distances(
    class_distances: &[DistanceVector],
    gamma: f64,
    target_class: usize,
) -> Result<DistanceVector> {
    if gamma < 0.0 {
        return Err(Error::Param(format!("gamma must be nonnegative, got {gamma}")));
    }
    let c = class_distances
        .get(target_class)
        .ok_or_else(|| Error::Param(format!("class index {target_class} out of range")))?;
    let n = c.n_nodes();
    if class_distances.iter().any(|d| d.n_nodes() != n) {
        return Err(Error::Shape("distance vectors must share the node count".into()));
    }
    let mut e = c.values().clone();
    for (k, d) in class_distances.iter().enumerate() {
        if k != target_class {
            e -= d.values() * gamma;
        }
    }
    Ok(DistanceVector { e, n_nodes: n })
}

/// Classifies a signal by the fraction of its energy captured by the K
/// lowest-frequency Laplacian eigenvectors of each class graph; ties go to
/// the lowest class index.
pub fn gft_classify(class_graphs: &[Graph], signal: &DVector<f64>, n_low: usize) -> Result<usize> {
    if class_graphs.is_empty() {
        return Err(Error::EmptyInput("class graphs".into()));
    }
    let n = class_graphs[0].n_nodes();
    if class_graphs.iter().any(|g| g.n_nodes() != n) {
        return Err(Error::Shape("class graphs must share the node count".into()));
    }
    if signal.len() != n {
        return Err(Error::Shape(format!("signal length {} != {n}", signal.len())));
    }
    if n_low == 0 || n_low >= n {
        return Err(Error::Param(format!("need 1 <= K < N, got K = {n_low}")));
    }
    let energy = signal.norm_squared();
    if energy == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let mut best = 0;
    let mut best_frac = f64::NEG_INFINITY;
    for (c, g) in class_graphs.iter().enumerate() {
        let l = laplacian(g)?;
        let (_, vectors) = sorted_symmetric_eigen(&l);
        let mut captured = 0.0;
        for m in 0..n_low {
            let coef = vectors.column(m).dot(signal);
            captured += coef * coef;
        }
        let frac = captured / energy;
        if frac > best_frac {
            best_frac = frac;
            best = c;
        }
    }
    Ok(best)
}
