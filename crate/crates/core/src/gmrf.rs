//! Sparse Gaussian graphical model selection: graphical lasso and its
//! Laplacian-constrained variant.

use nalgebra::{DMatrix, DVector};

use crate::corrnet::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::graph::{edge_pairs, n_pairs, SignalMatrix};

/// Estimated precision matrix with solver diagnostics.
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    theta: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value (maximization form) after each sweep.
    pub objective_trace: Vec<f64>,
}

impl PrecisionEstimate {
    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub(crate) fn from_parts(
        theta: DMatrix<f64>,
        converged: bool,
        iterations: usize,
        objective_trace: Vec<f64>,
    ) -> Self {
        Self { theta, converged, iterations, objective_trace }
    }
}

/// Estimated Laplacian with diagonal loading, Theta = L + gamma I.
#[derive(Debug, Clone)]
pub struct LaplacianEstimate {
    laplacian: DMatrix<f64>,
    pub loading: f64,
    pub converged: bool,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
}

impl LaplacianEstimate {
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }
}

/// Solver controls shared by both estimators.
///
/// `penalize_diagonal` selects whether the l1 penalty covers the full matrix
/// (the literal ||Theta||_1 reading, default) or off-diagonal entries only.
#[derive(Debug, Clone, Copy)]
pub struct GlassoOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub penalize_diagonal: bool,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, penalize_diagonal: true }
    }
}

/// Rate-optimal penalty 2 sqrt(log(N) / T).
pub fn default_lambda(n_nodes: usize, n_samples: usize) -> f64 {
    2.0 * ((n_nodes as f64).ln() / n_samples as f64).sqrt()
}

/// Objective of the maximization problem
/// log det Theta - trace(Sigma Theta) - lambda * pen(Theta).
pub fn glasso_objective(
    theta: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    lambda: f64,
    penalize_diagonal: bool,
) -> f64 {
    let n = theta.nrows();
    let chol = match theta.clone().cholesky() {
        Some(c) => c,
        None => return f64::NEG_INFINITY,
    };
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let mut trace = 0.0;
    let mut pen = 0.0;
    for i in 0..n {
        for j in 0..n {
            trace += sigma[(i, j)] * theta[(j, i)];
            if i != j || penalize_diagonal {
                pen += theta[(i, j)].abs();
            }
        }
    }
    logdet - trace - lambda * pen
}

/// Max-norm of the stationarity residual of the graphical lasso problem.
/// Zero entries contribute max(0, |R_ij| - lambda) with R = Theta^-1 - Sigma.
fn kkt_residual(
    theta: &DMatrix<f64>,
    w: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    lambda: f64,
    penalize_diagonal: bool,
) -> f64 {
    let n = theta.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let r = w[(i, j)] - sigma[(i, j)];
            let penalized = i != j || penalize_diagonal;
            let res = if !penalized {
                r.abs()
            } else if theta[(i, j)] != 0.0 {
                (r - lambda * theta[(i, j)].signum()).abs()
            } else {
                (r.abs() - lambda).max(0.0)
            };
            worst = worst.max(res);
        }
    }
    worst
}

/// Graphical lasso via cyclic block-coordinate descent on the primal:
/// each column block (theta_Rj, theta_jj) is minimized exactly, with the
/// inner lasso solved by coordinate descent. The objective is nondecreasing
/// across sweeps and the exit test is the KKT residual.
pub fn graphical_lasso(
    c: &CovarianceEstimate,
    lambda: f64,
    opts: &GlassoOptions,
) -> Result<PrecisionEstimate> {
    if lambda < 0.0 {
        return Err(Error::Param(format!("lambda must be nonnegative, got {lambda}")));
    }
    let sigma = c.sigma();
    let n = sigma.nrows();
    for i in 0..n {
        if sigma[(i, i)] <= 0.0 {
            return Err(Error::DegenerateVariance { node: i });
        }
    }
    let lam_d = if opts.penalize_diagonal { lambda } else { 0.0 };

    // Theta0 = diag(1 / (sigma_ii + lambda_d)), W0 = its inverse.
    let mut theta = DMatrix::zeros(n, n);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        theta[(i, i)] = 1.0 / (sigma[(i, i)] + lam_d);
        w[(i, i)] = sigma[(i, i)] + lam_d;
    }

    let mut trace = Vec::with_capacity(opts.max_iter + 1);
    trace.push(glasso_objective(&theta, sigma, lambda, opts.penalize_diagonal));

    let rest_of = |j: usize| -> Vec<usize> { (0..n).filter(|&k| k != j).collect() };
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_iter {
        sweeps += 1;
        for j in 0..n {
            let rest = rest_of(j);
            // Q = (Theta_RR)^-1 from the maintained inverse W.
            let wjj = w[(j, j)];
            let mut q = DMatrix::zeros(n - 1, n - 1);
            for (a, &ia) in rest.iter().enumerate() {
                for (b, &ib) in rest.iter().enumerate() {
                    q[(a, b)] = w[(ia, ib)] - w[(ia, j)] * w[(ib, j)] / wjj;
                }
            }
            let gamma = 1.0 / (sigma[(j, j)] + lam_d);
            let scale = sigma[(j, j)] + lam_d;
            // Inner lasso: min_u scale * u'Qu + 2 s_Rj' u + 2 lambda |u|_1
            let mut u = DVector::from_fn(n - 1, |a, _| theta[(rest[a], j)]);
            let s_col = DVector::from_fn(n - 1, |a, _| sigma[(rest[a], j)]);
            let mut qu = &q * &u;
            for _ in 0..10_000 {
                let mut max_move = 0.0_f64;
                for k in 0..n - 1 {
                    let qkk = q[(k, k)];
                    if qkk <= 0.0 {
                        continue;
                    }
                    let partial = scale * (qu[k] - qkk * u[k]) + s_col[k];
                    let new = crate::linalg::soft_threshold(-partial, lambda) / (scale * qkk);
                    let delta = new - u[k];
                    if delta != 0.0 {
                        qu += q.column(k) * delta;
                        u[k] = new;
                        max_move = max_move.max(delta.abs());
                    }
                }
                if max_move <= 1e-12 {
                    break;
                }
            }
            let quad = u.dot(&(&q * &u));
            // Write the column of Theta and refresh the inverse blocks.
            for (a, &ia) in rest.iter().enumerate() {
                theta[(ia, j)] = u[a];
                theta[(j, ia)] = u[a];
            }
            theta[(j, j)] = gamma + quad;
            let qu_vec = &q * &u;
            w[(j, j)] = 1.0 / gamma;
            for (a, &ia) in rest.iter().enumerate() {
                let v = -qu_vec[a] / gamma;
                w[(ia, j)] = v;
                w[(j, ia)] = v;
            }
            for (a, &ia) in rest.iter().enumerate() {
                for (b, &ib) in rest.iter().enumerate() {
                    w[(ia, ib)] = q[(a, b)] + qu_vec[a] * qu_vec[b] / gamma;
                }
            }
        }
        trace.push(glasso_objective(&theta, sigma, lambda, opts.penalize_diagonal));
        // Exact inverse for the optimality check, avoiding drift in W.
        let w_exact = match theta.clone().try_inverse() {
            Some(inv) => inv,
            None => w.clone(),
        };
        if kkt_residual(&theta, &w_exact, sigma, lambda, opts.penalize_diagonal) <= opts.tol {
            converged = true;
            break;
        }
        w = w_exact;
    }
    Ok(PrecisionEstimate { theta, converged, iterations: sweeps, objective_trace: trace })
}

/// Minimum diagonal loading kept by the Laplacian solver; the boundary
/// gamma = 0 would make the log-determinant diverge.
pub const GAMMA_MIN: f64 = 1e-8;

/// Objective of the Laplacian-constrained problem in (w, gamma) coordinates.
/// The l1 term reduces to 2 lambda 1'w on the constraint set (off-diagonal
/// penalty; the loaded diagonal is not penalized so that e.g. Sigma = I
/// yields gamma = 1 for every lambda).
pub fn laplacian_objective(
    w_edges: &DVector<f64>,
    gamma: f64,
    sigma: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    let n = sigma.nrows();
    let theta = theta_from_edges(w_edges, gamma, n);
    let chol = match theta.cholesky() {
        Some(c) => c,
        None => return f64::NEG_INFINITY,
    };
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let mut trace_term = gamma * sigma.trace();
    for (k, (i, j)) in edge_pairs(n).enumerate() {
        trace_term += w_edges[k] * (sigma[(i, i)] + sigma[(j, j)] - 2.0 * sigma[(i, j)]);
    }
    logdet - trace_term - 2.0 * lambda * w_edges.sum()
}

fn theta_from_edges(w_edges: &DVector<f64>, gamma: f64, n: usize) -> DMatrix<f64> {
    let mut theta = DMatrix::zeros(n, n);
    for (k, (i, j)) in edge_pairs(n).enumerate() {
        theta[(i, j)] = -w_edges[k];
        theta[(j, i)] = -w_edges[k];
        theta[(i, i)] += w_edges[k];
        theta[(j, j)] += w_edges[k];
    }
    for i in 0..n {
        theta[(i, i)] += gamma;
    }
    theta
}

/// Laplacian-constrained GMRF estimation (Theta = L + gamma I, L1 = 0,
/// off-diagonals <= 0) by projected gradient ascent on the edge weights and
/// the loading, with a monotone backtracking line search.
pub fn laplacian_gmrf(
    c: &CovarianceEstimate,
    lambda: f64,
    opts: &GlassoOptions,
) -> Result<LaplacianEstimate> {
    if lambda < 0.0 {
        return Err(Error::Param(format!("lambda must be nonnegative, got {lambda}")));
    }
    let sigma = c.sigma();
    let n = sigma.nrows();
    let p = n_pairs(n);
    let mut w = DVector::zeros(p);
    let mut gamma: f64 = n as f64 / sigma.trace().max(GAMMA_MIN);
    let mut obj = laplacian_objective(&w, gamma, sigma, lambda);
    let mut trace = vec![obj];
    let mut step = 1.0;
    let mut converged = false;
    let mut iters = 0;
    let cost: DVector<f64> = DVector::from_iterator(
        p,
        edge_pairs(n).map(|(i, j)| sigma[(i, i)] + sigma[(j, j)] - 2.0 * sigma[(i, j)]),
    );
    while iters < opts.max_iter {
        iters += 1;
        let theta = theta_from_edges(&w, gamma, n);
        let m = match theta.try_inverse() {
            Some(inv) => inv,
            None => {
                return Err(Error::InvalidPrecision("iterate lost positive definiteness".into()))
            }
        };
        let grad_w = DVector::from_iterator(
            p,
            edge_pairs(n)
                .enumerate()
                .map(|(k, (i, j))| m[(i, i)] + m[(j, j)] - 2.0 * m[(i, j)] - cost[k] - 2.0 * lambda),
        );
        let grad_g = m.trace() - sigma.trace();

        // Projected-gradient optimality residual.
        let mut resid = if gamma > GAMMA_MIN { grad_g.abs() } else { grad_g.max(0.0) };
        for k in 0..p {
            let r = if w[k] > 0.0 { grad_w[k].abs() } else { grad_w[k].max(0.0) };
            resid = resid.max(r);
        }
        if resid <= opts.tol {
            converged = true;
            break;
        }

        // Backtracking ascent step with projection onto the constraint set.
        let mut accepted = false;
        for _ in 0..60 {
            let w_new = DVector::from_fn(p, |k, _| (w[k] + step * grad_w[k]).max(0.0));
            let g_new = (gamma + step * grad_g).max(GAMMA_MIN);
            let obj_new = laplacian_objective(&w_new, g_new, sigma, lambda);
            let move_sq = (&w_new - &w).norm_squared() + (g_new - gamma).powi(2);
            if obj_new.is_finite() && obj_new >= obj + 1e-4 * move_sq / step {
                w = w_new;
                gamma = g_new;
                obj = obj_new;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        trace.push(obj);
        if !accepted {
            break;
        }
    }
    let lap = {
        let mut lap = DMatrix::zeros(n, n);
        for (k, (i, j)) in edge_pairs(n).enumerate() {
            lap[(i, j)] = -w[k];
            lap[(j, i)] = -w[k];
            lap[(i, i)] += w[k];
            lap[(j, j)] += w[k];
        }
        lap
    };
    Ok(LaplacianEstimate {
        laplacian: lap,
        loading: gamma,
        converged,
        iterations: iters,
        objective_trace: trace,
    })
}

/// Aggregate smoothness sum_t y_t' L y_t of the signals with respect to a
/// Laplacian; equals (1/2) ||W o E||_1 for the corresponding adjacency.
pub fn smoothness_total(y: &SignalMatrix, lap: &DMatrix<f64>) -> Result<f64> {
    let n = y.n_nodes();
    if lap.nrows() != n || lap.ncols() != n {
        return Err(Error::Shape(format!(
            "laplacian is {}x{} but signals have {} nodes",
            lap.nrows(),
            lap.ncols(),
            n
        )));
    }
    let mut total = 0.0;
    for t in 0..y.n_samples() {
        let yt = y.data().column(t);
        total += (yt.transpose() * lap * yt)[(0, 0)];
    }
    Ok(total)
}
