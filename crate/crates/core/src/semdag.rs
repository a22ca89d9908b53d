//! Linear SEM fitting, continuous DAG learning with three acyclicity
//! characterizations, and group-sparse VARM estimation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, SignalMatrix};
use crate::linalg::{
    coordinate_lasso_sweep, is_acyclic_support, matrix_exp, perron_radius, soft_threshold,
    spectral_norm_sym,
};

/// Fitted structural equation model y = W y + B x + e with diagonal B.
#[derive(Debug, Clone)]
pub struct SemModel {
    /// Directed weights, zero diagonal; W_ij is the effect of node j on i.
    pub w: DMatrix<f64>,
    /// Diagonal of the exogenous loading matrix B.
    pub b: DVector<f64>,
    /// Full objective after each coordinate sweep.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SemOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SemOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_sweeps: 10_000 }
    }
}

/// Penalized least squares for the SEM: minimizes
///   sum_t ||y_t - W y_t - B x_t||^2 + alpha ||W||_1
/// subject to diag(W) = 0 and B diagonal. Rows decouple into independent
/// lasso problems solved by coordinate descent (in parallel), with the
/// loading coordinate left unpenalized.
pub fn sem_fit(
    y: &SignalMatrix,
    x: &SignalMatrix,
    alpha: f64,
    opts: &SemOptions,
) -> Result<SemModel> {
    if y.n_nodes() != x.n_nodes() || y.n_samples() != x.n_samples() {
        return Err(Error::Shape(format!(
            "endogenous {}x{} vs exogenous {}x{}",
            y.n_nodes(),
            y.n_samples(),
            x.n_nodes(),
            x.n_samples()
        )));
    }
    if alpha < 0.0 {
        return Err(Error::Param(format!("alpha must be nonnegative, got {alpha}")));
    }
    if y.n_samples() == 0 {
        return Err(Error::EmptyInput("no samples".into()));
    }
    let n = y.n_nodes();
    let yd = y.data();
    let xd = x.data();
    let gram_yy = yd * yd.transpose();

    // Per row i the regressors are (y_j, j != i; x_i). Assemble Gram blocks.
    struct RowProblem {
        a: DMatrix<f64>,
        r: DVector<f64>,
        penalized: Vec<bool>,
        coef: DVector<f64>,
        /// y_i'y_i for the constant part of the residual.
        yy: f64,
    }
    let mut rows: Vec<RowProblem> = (0..n)
        .map(|i| {
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let m = n; // n-1 weight coords + 1 loading coord
            let mut a = DMatrix::zeros(m, m);
            let mut r = DVector::zeros(m);
            for (p, &jp) in others.iter().enumerate() {
                for (q, &jq) in others.iter().enumerate() {
                    a[(p, q)] = gram_yy[(jp, jq)];
                }
                r[p] = gram_yy[(jp, i)];
            }
            let xi = xd.row(i).transpose();
            for (p, &jp) in others.iter().enumerate() {
                let v = yd.row(jp).transpose().dot(&xi);
                a[(p, m - 1)] = v;
                a[(m - 1, p)] = v;
            }
            a[(m - 1, m - 1)] = xi.dot(&xi);
            r[m - 1] = yd.row(i).transpose().dot(&xi);
            let mut penalized = vec![true; m];
            penalized[m - 1] = false;
            RowProblem { a, r, penalized, coef: DVector::zeros(m), yy: gram_yy[(i, i)] }
        })
        .collect();

    let row_objective = |row: &RowProblem| -> f64 {
        let quad = row.coef.dot(&(&row.a * &row.coef)) - 2.0 * row.r.dot(&row.coef) + row.yy;
        let l1: f64 = row
            .coef
            .iter()
            .zip(&row.penalized)
            .filter(|&(_, &p)| p)
            .map(|(c, _)| c.abs())
            .sum();
        quad + alpha * l1
    };

    let mut trace = vec![rows.iter().map(row_objective).sum::<f64>()];
    for _ in 0..opts.max_sweeps {
        let moves: Vec<f64> = rows
            .par_iter_mut()
            .map(|row| {
                let mut coef = row.coef.clone();
                let delta =
                    coordinate_lasso_sweep(&row.a, &row.r, alpha, 0.0, &row.penalized, &mut coef);
                row.coef = coef;
                delta
            })
            .collect();
        trace.push(rows.iter().map(row_objective).sum::<f64>());
        if moves.iter().fold(0.0_f64, |m, &d| m.max(d)) <= opts.tol {
            break;
        }
    }

    let mut w = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        for (p, &j) in others.iter().enumerate() {
            w[(i, j)] = row.coef[p];
        }
        b[i] = row.coef[n - 1];
    }
    Ok(SemModel { w, b, objective_trace: trace })
}

/// trace(exp(W o W)) - N and its gradient 2 (exp(W o W))' o W.
pub fn acyclicity_expm(w: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let n = w.nrows();
    let ww = w.component_mul(w);
    let e = matrix_exp(&ww);
    let value = e.trace() - n as f64;
    let grad = e.transpose().component_mul(w) * 2.0;
    (value.max(0.0), grad)
}

/// trace((I + W o W / N)^N) - N and its gradient 2 (M^{N-1})' o W.
pub fn acyclicity_poly(w: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let n = w.nrows();
    let mut m = w.component_mul(w) / n as f64;
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    // powers: M^{N-1} for the gradient, M^N for the value
    let mut p = DMatrix::identity(n, n);
    for _ in 0..n - 1 {
        p = &p * &m;
    }
    let value = (&p * &m).trace() - n as f64;
    let grad = p.transpose().component_mul(w) * 2.0;
    (value.max(0.0), grad)
}

/// N log s - log det(sI - W o W) and its gradient 2 (sI - W o W)^-T o W.
/// The domain requires s to exceed the spectral radius of W o W.
pub fn acyclicity_ldet(w: &DMatrix<f64>, s: f64) -> Result<(f64, DMatrix<f64>)> {
    if s <= 0.0 {
        return Err(Error::Param(format!("s must be positive, got {s}")));
    }
    let n = w.nrows();
    let ww = w.component_mul(w);
    if perron_radius(&ww) >= s * (1.0 - 1e-12) {
        return Err(Error::Domain(format!("spectral radius of W o W reaches s = {s}")));
    }
    let mut m = -ww;
    for i in 0..n {
        m[(i, i)] += s;
    }
    let lu = m.clone().lu();
    let det = lu.determinant();
    if det <= 0.0 {
        return Err(Error::Domain("det(sI - W o W) is not positive".into()));
    }
    let value = (n as f64) * s.ln() - det.ln();
    let inv = lu.try_inverse().ok_or_else(|| Error::Domain("sI - W o W is singular".into()))?;
    let grad = inv.transpose().component_mul(w) * 2.0;
    Ok((value.max(0.0), grad))
}

/// Acyclicity surrogate used inside [`dag_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcyclicityKind {
    Expm,
    Poly,
    /// Log-determinant characterization with parameter s.
    Ldet,
}

#[derive(Debug, Clone, Copy)]
pub struct DagOptions {
    /// l1 weight on the adjacency.
    pub alpha: f64,
    pub h_kind: AcyclicityKind,
    /// s parameter of the log-det characterization.
    pub ldet_s: f64,
    pub h_tol: f64,
    /// Hard threshold applied before the exact cycle check.
    pub w_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub rho_init: f64,
    pub rho_max: f64,
}

impl Default for DagOptions {
    fn default() -> Self {
        Self {
            alpha: 0.03,
            h_kind: AcyclicityKind::Expm,
            ldet_s: 1.0,
            h_tol: 1e-8,
            w_tol: 0.3,
            max_outer: 60,
            max_inner: 3000,
            rho_init: 1.0,
            rho_max: 1e16,
        }
    }
}

/// DAG estimate with diagnostics.
#[derive(Debug, Clone)]
pub struct DagResult {
    /// Weights before thresholding.
    pub w: DMatrix<f64>,
    /// Final acyclicity residual.
    pub h_value: f64,
    /// Whether the thresholded weights pass an exact topological cycle check.
    pub is_dag: bool,
    /// Thresholded weights (|w| < w_tol zeroed).
    pub w_thresholded: DMatrix<f64>,
    /// Acyclicity residual after each outer iteration.
    pub h_trace: Vec<f64>,
}

fn h_and_grad(w: &DMatrix<f64>, kind: AcyclicityKind, s: f64) -> Result<(f64, DMatrix<f64>)> {
    match kind {
        AcyclicityKind::Expm => Ok(acyclicity_expm(w)),
        AcyclicityKind::Poly => Ok(acyclicity_poly(w)),
        AcyclicityKind::Ldet => acyclicity_ldet(w, s),
    }
}

/// Continuous DAG structure learning: least squares with an l1 penalty and
/// an augmented-Lagrangian outer loop driving the acyclicity residual to
/// zero, followed by hard thresholding and an exact cycle check.
pub fn dag_fit(y: &SignalMatrix, opts: &DagOptions) -> Result<DagResult> {
    if opts.alpha < 0.0 {
        return Err(Error::Param("alpha must be nonnegative".into()));
    }
    let n = y.n_nodes();
    let t = y.n_samples() as f64;
    if y.n_samples() < 2 {
        return Err(Error::InsufficientSamples("dag_fit needs T >= 2".into()));
    }
    let yd = y.data();
    let gram = yd * yd.transpose() / t;

    let mut w = DMatrix::<f64>::zeros(n, n);
    let mut rho = opts.rho_init;
    let mut mult = 0.0;
    let (mut h_val, _) = h_and_grad(&w, opts.h_kind, opts.ldet_s)?;
    let mut h_trace = Vec::new();

    // smooth part: 1/(2T)||Y - WY||_F^2 + rho/2 h^2 + mult h
    let smooth = |w: &DMatrix<f64>, rho: f64, mult: f64| -> Result<(f64, DMatrix<f64>)> {
        let loss = 0.5 * ((w * &gram * w.transpose()).trace() - 2.0 * (w * &gram).trace()
            + gram.trace());
        let grad_loss = (w * &gram) - &gram;
        let (h, gh) = h_and_grad(w, opts.h_kind, opts.ldet_s)?;
        let val = loss + 0.5 * rho * h * h + mult * h;
        let grad = grad_loss + gh * (rho * h + mult);
        Ok((val, grad))
    };

    for _outer in 0..opts.max_outer {
        // Inner proximal-gradient descent with backtracking.
        let mut step = 1.0;
        let (mut f_cur, mut g_cur) = smooth(&w, rho, mult)?;
        for _ in 0..opts.max_inner {
            let mut accepted = false;
            let mut w_next = w.clone();
            for _ in 0..60 {
                w_next = DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        0.0
                    } else {
                        soft_threshold(w[(i, j)] - step * g_cur[(i, j)], step * opts.alpha)
                    }
                });
                match smooth(&w_next, rho, mult) {
                    Ok((f_next, _)) => {
                        let dw = &w_next - &w;
                        let ub = f_cur + g_cur.dot(&dw) + dw.norm_squared() / (2.0 * step);
                        if f_next <= ub + 1e-15 {
                            accepted = true;
                            break;
                        }
                    }
                    Err(_) => {} // left the ldet domain; shrink
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            let delta = (&w_next - &w).amax();
            w = w_next;
            let pair = smooth(&w, rho, mult)?;
            f_cur = pair.0;
            g_cur = pair.1;
            step = (step * 1.2).min(1e6);
            if delta <= 1e-9 {
                break;
            }
        }

        let (h_new, _) = h_and_grad(&w, opts.h_kind, opts.ldet_s)?;
        h_trace.push(h_new);
        if h_new <= opts.h_tol {
            h_val = h_new;
            break;
        }
        mult += rho * h_new;
        // Penalty grows unless the residual dropped by at least 25%.
        if h_new > 0.75 * h_val {
            rho = (rho * 10.0).min(opts.rho_max);
        }
        h_val = h_new;
    }

    let w_thresholded =
        DMatrix::from_fn(n, n, |i, j| if w[(i, j)].abs() >= opts.w_tol { w[(i, j)] } else { 0.0 });
    let is_dag = h_val <= opts.h_tol && is_acyclic_support(&w_thresholded, 0.0);
    Ok(DagResult { w, h_value: h_val, is_dag, w_thresholded, h_trace })
}

/// Exposed for diagnostics: exact topological cycle check on a support.
pub fn is_acyclic(w: &DMatrix<f64>, tol: f64) -> bool {
    is_acyclic_support(w, tol)
}

/// Fitted vector autoregressive model of order L.
#[derive(Debug, Clone)]
pub struct VarmModel {
    /// Lag matrices W^(1)..W^(L).
    pub lags: Vec<DMatrix<f64>>,
    pub order: usize,
    pub objective_trace: Vec<f64>,
}

/// Edge declaration rule over the lag coefficients of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRule {
    /// Edge present when at least one lag coefficient is nonzero.
    Or,
    /// Edge present only when every lag coefficient is nonzero.
    And,
}

#[derive(Debug, Clone, Copy)]
pub struct VarmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub rule: EdgeRule,
    /// Weights with |w| <= this count as zero for edge extraction.
    pub weight_tol: f64,
}

impl Default for VarmOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50_000, rule: EdgeRule::Or, weight_tol: 1e-6 }
    }
}

/// Lagged regressor matrix Z (NL x T') and targets (N x T').
fn lagged_design(y: &SignalMatrix, order: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = y.n_nodes();
    let t = y.n_samples();
    let t_eff = t - order;
    let yd = y.data();
    let mut z = DMatrix::zeros(n * order, t_eff);
    let mut targets = DMatrix::zeros(n, t_eff);
    for (col, tt) in (order..t).enumerate() {
        for lag in 1..=order {
            for i in 0..n {
                z[((lag - 1) * n + i, col)] = yd[(i, tt - lag)];
            }
        }
        for i in 0..n {
            targets[(i, col)] = yd[(i, tt)];
        }
    }
    (z, targets)
}

/// Smallest group penalty that zeroes every group: max_{i,j} 2 ||r_{i,j}||_2
/// with r the lagged cross-moments.
pub fn varm_lambda_max(y: &SignalMatrix, order: usize) -> Result<f64> {
    if y.n_samples() <= order {
        return Err(Error::InsufficientSamples(format!(
            "need T > L, got T = {} and L = {order}",
            y.n_samples()
        )));
    }
    let n = y.n_nodes();
    let (z, targets) = lagged_design(y, order);
    let r = &z * targets.transpose(); // (NL) x N
    let mut best = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let mut sq = 0.0;
            for lag in 0..order {
                sq += r[(lag * n + j, i)].powi(2);
            }
            best = best.max(2.0 * sq.sqrt());
        }
    }
    Ok(best)
}

/// Group-sparse VARM estimation: minimizes
///   sum_t ||y_t - sum_l W^(l) y_{t-l}||^2 + lambda sum_{ij} ||w_ij||_2
/// by per-row proximal-gradient steps with group soft-thresholding (the
/// lambda = 0 problem is solved directly). Returns the model and the graph
/// extracted with the requested rule.
pub fn varm_fit(
    y: &SignalMatrix,
    order: usize,
    lambda_group: f64,
    opts: &VarmOptions,
) -> Result<(VarmModel, Graph)> {
    if order == 0 {
        return Err(Error::Param("order must be at least 1".into()));
    }
    if y.n_samples() <= order {
        return Err(Error::InsufficientSamples(format!(
            "need T > L, got T = {} and L = {order}",
            y.n_samples()
        )));
    }
    if lambda_group < 0.0 {
        return Err(Error::Param("lambda_group must be nonnegative".into()));
    }
    let n = y.n_nodes();
    let (z, targets) = lagged_design(y, order);
    let gram = &z * z.transpose();
    let cross = &z * targets.transpose(); // (NL) x N, column i targets node i

    let mut beta = DMatrix::<f64>::zeros(n * order, n); // column per target node
    let mut trace = Vec::new();

    let objective = |beta: &DMatrix<f64>| -> f64 {
        let mut val = 0.0;
        for i in 0..n {
            let bi = beta.column(i);
            val += (bi.transpose() * &gram * bi)[(0, 0)] - 2.0 * cross.column(i).dot(&bi)
                + targets.row(i).norm_squared();
        }
        if lambda_group > 0.0 {
            for i in 0..n {
                for j in 0..n {
                    let mut sq = 0.0;
                    for lag in 0..order {
                        sq += beta[(lag * n + j, i)].powi(2);
                    }
                    val += lambda_group * sq.sqrt();
                }
            }
        }
        val
    };

    if lambda_group == 0.0 {
        // Unpenalized least squares solved directly.
        let chol = {
            let mut g = gram.clone();
            // tiny ridge keeps rank-deficient designs solvable
            for k in 0..g.nrows() {
                g[(k, k)] += 1e-12 * gram.trace().max(1.0) / g.nrows() as f64;
            }
            g.cholesky().ok_or_else(|| Error::DegenerateInput("singular lag Gram".into()))?
        };
        for i in 0..n {
            let sol = chol.solve(&cross.column(i).into_owned());
            beta.set_column(i, &sol);
        }
        trace.push(objective(&beta));
    } else {
        let lip = 2.0 * spectral_norm_sym(&gram);
        if lip <= 0.0 {
            return Err(Error::DegenerateInput("zero lag Gram".into()));
        }
        let step = 1.0 / lip;
        trace.push(objective(&beta));
        for _ in 0..opts.max_iter {
            let mut max_move = 0.0_f64;
            let cols: Vec<DVector<f64>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let bi = beta.column(i).into_owned();
                    let grad = &gram * &bi * 2.0 - cross.column(i) * 2.0;
                    let v = &bi - grad * step;
                    let mut next = DVector::zeros(n * order);
                    for j in 0..n {
                        let mut sq = 0.0;
                        for lag in 0..order {
                            sq += v[lag * n + j].powi(2);
                        }
                        let norm = sq.sqrt();
                        let scale_g =
                            if norm > 0.0 { (1.0 - step * lambda_group / norm).max(0.0) } else { 0.0 };
                        for lag in 0..order {
                            next[lag * n + j] = scale_g * v[lag * n + j];
                        }
                    }
                    next
                })
                .collect();
            for (i, col) in cols.into_iter().enumerate() {
                max_move = max_move.max((&col - beta.column(i).into_owned()).amax());
                beta.set_column(i, &col);
            }
            trace.push(objective(&beta));
            if max_move <= opts.tol {
                break;
            }
        }
    }

    let lags: Vec<DMatrix<f64>> = (0..order)
        .map(|lag| DMatrix::from_fn(n, n, |i, j| beta[(lag * n + j, i)]))
        .collect();
    let model = VarmModel { lags, order, objective_trace: trace };
    let graph = graph_from_varm(&model, opts.rule, opts.weight_tol)?;
    Ok((model, graph))
}

/// Applies the OR/AND rule to the lag coefficients of every ordered pair.
/// Edge weight is the max |W^(l)_ij| over lags; self-loops are excluded.
pub fn graph_from_varm(model: &VarmModel, rule: EdgeRule, tol: f64) -> Result<Graph> {
    let n = model.lags[0].nrows();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let present = match rule {
                EdgeRule::Or => model.lags.iter().any(|m| m[(i, j)].abs() > tol),
                EdgeRule::And => model.lags.iter().all(|m| m[(i, j)].abs() > tol),
            };
            if present {
                w[(i, j)] =
                    model.lags.iter().map(|m| m[(i, j)].abs()).fold(0.0_f64, f64::max);
            }
        }
    }
    Graph::directed(w)
}

/// Gaussian-likelihood BIC over a grid of model orders 1..=l_max; returns
/// the minimizing order and all scores.
pub fn select_order_bic(
    y: &SignalMatrix,
    l_max: usize,
    lambda_group: f64,
) -> Result<(usize, Vec<f64>)> {
    if l_max == 0 {
        return Err(Error::Param("l_max must be at least 1".into()));
    }
    let n = y.n_nodes() as f64;
    let mut scores = Vec::with_capacity(l_max);
    for order in 1..=l_max {
        let (model, _) = varm_fit(y, order, lambda_group, &VarmOptions::default())?;
        let t_eff = (y.n_samples() - order) as f64;
        let (z, targets) = lagged_design(y, order);
        let mut rss = 0.0;
        for col in 0..z.ncols() {
            let zt = z.column(col);
            for i in 0..y.n_nodes() {
                let mut pred = 0.0;
                for lag in 0..order {
                    for j in 0..y.n_nodes() {
                        pred += model.lags[lag][(i, j)] * zt[lag * y.n_nodes() + j];
                    }
                }
                rss += (targets[(i, col)] - pred).powi(2);
            }
        }
        let m = n * t_eff;
        let k = n * n * order as f64;
        scores.push(m * (rss / m).max(1e-300).ln() + k * m.ln());
    }
    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i + 1)
        .unwrap();
    Ok((best, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(n: usize, t: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, t, |_, _| -> f64 { StandardNormal.sample(&mut rng) })
    }

    #[test]
    fn sem_large_alpha_scalar_loadings() {
        let n = 3;
        let t = 40;
        let yd = randn(n, t, 1);
        let xd = randn(n, t, 2);
        let y = SignalMatrix::new(yd.clone()).unwrap();
        let x = SignalMatrix::new(xd.clone()).unwrap();
        let fit = sem_fit(&y, &x, 1e6, &SemOptions::default()).unwrap();
        assert!(fit.w.amax() < 1e-12);
        for i in 0..n {
            let num: f64 = (0..t).map(|k| yd[(i, k)] * xd[(i, k)]).sum();
            let den: f64 = (0..t).map(|k| xd[(i, k)] * xd[(i, k)]).sum();
            assert_abs_diff_eq!(fit.b[i], num / den, epsilon = 1e-10);
        }
    }

    #[test]
    fn sem_noise_free_recovery() {
        // y = (I - W0)^-1 x with b0 = 1 and rich inputs
        let n = 5;
        let t = 400;
        let mut w0 = DMatrix::zeros(n, n);
        w0[(1, 0)] = 0.6;
        w0[(2, 1)] = -0.4;
        w0[(3, 2)] = 0.5;
        w0[(4, 0)] = 0.3;
        let xd = randn(n, t, 7);
        let inv = (DMatrix::identity(n, n) - &w0).try_inverse().unwrap();
        let yd = &inv * &xd;
        let y = SignalMatrix::new(yd).unwrap();
        let x = SignalMatrix::new(xd).unwrap();
        let fit = sem_fit(&y, &x, 1e-6, &SemOptions::default()).unwrap();
        assert!((&fit.w - &w0).amax() <= 1e-4, "err = {}", (&fit.w - &w0).amax());
        for i in 0..n {
            assert_abs_diff_eq!(fit.b[i], 1.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn sem_exact_fit_reaches_zero_residual() {
        // Y = X and alpha = 0: W = 0, b = 1 attains zero residual.
        let n = 3;
        let yd = randn(n, 50, 3);
        let y = SignalMatrix::new(yd.clone()).unwrap();
        let x = SignalMatrix::new(yd).unwrap();
        let fit = sem_fit(&y, &x, 0.0, &SemOptions::default()).unwrap();
        let last = *fit.objective_trace.last().unwrap();
        assert!(last < 1e-12, "residual {last}");
    }

    #[test]
    fn sem_objective_monotone() {
        let y = SignalMatrix::new(randn(4, 60, 11)).unwrap();
        let x = SignalMatrix::new(randn(4, 60, 12)).unwrap();
        let fit = sem_fit(&y, &x, 0.5, &SemOptions::default()).unwrap();
        for pair in fit.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "objective rose: {pair:?}");
        }
    }

    #[test]
    fn sem_shape_mismatch() {
        let y = SignalMatrix::new(randn(3, 10, 0)).unwrap();
        let x = SignalMatrix::new(randn(3, 11, 0)).unwrap();
        assert!(matches!(sem_fit(&y, &x, 0.1, &SemOptions::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn expm_examples() {
        let z = DMatrix::zeros(3, 3);
        assert_eq!(acyclicity_expm(&z).0, 0.0);
        let tri = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
        assert!(acyclicity_expm(&tri).0 < 1e-12);
        let cyc = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(acyclicity_expm(&cyc).0, 1.0861612696304874, epsilon = 1e-10);
    }

    #[test]
    fn poly_examples() {
        let z = DMatrix::zeros(4, 4);
        assert_eq!(acyclicity_poly(&z).0, 0.0);
        let cyc = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(acyclicity_poly(&cyc).0, 0.5, epsilon = 1e-12);
        let dag = DMatrix::from_row_slice(2, 2, &[0.0, 0.7, 0.0, 0.0]);
        assert!(acyclicity_poly(&dag).0 < 1e-12);
    }

    #[test]
    fn ldet_examples() {
        let z = DMatrix::zeros(3, 3);
        assert!(acyclicity_ldet(&z, 1.7).unwrap().0 < 1e-12);
        let cyc = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(
            acyclicity_ldet(&cyc, 2.0).unwrap().0,
            0.2876820724517808,
            epsilon = 1e-10
        );
        assert!(matches!(acyclicity_ldet(&cyc, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn gradients_match_central_differences() {
        let w = randn(5, 5, 17) * 0.4;
        let h = 1e-5;
        let funcs: Vec<(&str, Box<dyn Fn(&DMatrix<f64>) -> (f64, DMatrix<f64>)>)> = vec![
            ("expm", Box::new(|m: &DMatrix<f64>| acyclicity_expm(m))),
            ("poly", Box::new(|m: &DMatrix<f64>| acyclicity_poly(m))),
            ("ldet", Box::new(|m: &DMatrix<f64>| acyclicity_ldet(m, 2.5).unwrap())),
        ];
        for (name, f) in funcs {
            let (_, grad) = f(&w);
            for i in 0..5 {
                for j in 0..5 {
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    wp[(i, j)] += h;
                    wm[(i, j)] -= h;
                    let fd = (f(&wp).0 - f(&wm).0) / (2.0 * h);
                    let denom = fd.abs().max(grad[(i, j)].abs()).max(1e-8);
                    assert!(
                        (fd - grad[(i, j)]).abs() / denom < 1e-5,
                        "{name} grad mismatch at ({i},{j}): fd {fd}, grad {}",
                        grad[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn acyclicity_zero_on_random_dags_positive_on_cycles() {
        for seed in 0..100 {
            let g = crate::synth::generate_synthetic(
                crate::synth::SyntheticKind::RandomDag { edge_prob: 0.5 },
                6,
                seed,
            )
            .unwrap();
            let w = g.weights();
            assert!(acyclicity_expm(w).0 < 1e-9);
            assert!(acyclicity_poly(w).0 < 1e-9);
            let s = 1.0 + perron_radius(&w.component_mul(w));
            assert!(acyclicity_ldet(w, s).unwrap().0 < 1e-9);

            // add a directed cycle on top
            let mut wc = w.clone();
            wc[(0, 1)] = 0.8;
            wc[(1, 0)] = 0.8;
            assert!(acyclicity_expm(&wc).0 > 1e-6);
            assert!(acyclicity_poly(&wc).0 > 1e-8);
            let s = 1.0 + perron_radius(&wc.component_mul(&wc));
            assert!(acyclicity_ldet(&wc, s).unwrap().0 > 1e-8);
        }
    }

    #[test]
    fn dag_fit_two_node_direction() {
        // y2 = 0.8 y1 + noise: the edge 1 -> 2 (W_21) should be recovered.
        let mut hits = 0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = 600;
            let mut data = DMatrix::zeros(2, t);
            for k in 0..t {
                let y1: f64 = StandardNormal.sample(&mut rng);
                let n2: f64 = StandardNormal.sample(&mut rng);
                data[(0, k)] = y1;
                data[(1, k)] = 0.8 * y1 + n2;
            }
            let y = SignalMatrix::new(data).unwrap();
            let r = dag_fit(&y, &DagOptions::default()).unwrap();
            if r.w_thresholded[(1, 0)].abs() > 0.0 && r.w_thresholded[(0, 1)] == 0.0 {
                hits += 1;
            }
        }
        assert!(hits >= 6, "direction recovered only {hits}/10 times");
    }

    #[test]
    fn dag_fit_reaches_acyclic_solutions() {
        for kind in [AcyclicityKind::Expm, AcyclicityKind::Poly, AcyclicityKind::Ldet] {
            let g = crate::synth::generate_synthetic(
                crate::synth::SyntheticKind::RandomDag { edge_prob: 0.5 },
                5,
                3,
            )
            .unwrap();
            let n = 5;
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let t = 800;
            let inv = (DMatrix::identity(n, n) - g.weights()).try_inverse().unwrap();
            let data = {
                let e = DMatrix::from_fn(n, t, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
                &inv * e
            };
            let y = SignalMatrix::new(data).unwrap();
            let r = dag_fit(&y, &DagOptions { h_kind: kind, ..Default::default() }).unwrap();
            assert!(r.h_value <= 1e-8, "{kind:?}: h = {}", r.h_value);
            assert!(r.is_dag, "{kind:?} produced a cycle");
        }
    }

    #[test]
    fn varm_exact_recovery_without_penalty() {
        // noise-free VAR(1) trajectory; lambda = 0 solves the linear system.
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut w0 = DMatrix::from_fn(n, n, |_, _| -> f64 {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * 0.5
        });
        let rho = perron_radius(&w0.map(|v| v.abs()));
        w0 /= rho * 1.25;
        let t = 14;
        let mut data = DMatrix::zeros(n, t);
        for i in 0..n {
            data[(i, 0)] = StandardNormal.sample(&mut rng);
        }
        for k in 1..t {
            let prev = data.column(k - 1).into_owned();
            data.set_column(k, &(&w0 * prev));
        }
        let y = SignalMatrix::new(data).unwrap();
        let (model, _) = varm_fit(&y, 1, 0.0, &VarmOptions::default()).unwrap();
        assert!((&model.lags[0] - &w0).amax() < 1e-8, "err {}", (&model.lags[0] - &w0).amax());
    }

    #[test]
    fn varm_lambda_max_zeroes_everything() {
        let y = SignalMatrix::new(randn(3, 40, 5)).unwrap();
        let lmax = varm_lambda_max(&y, 2).unwrap();
        let (model, graph) = varm_fit(&y, 2, lmax * 1.0001, &VarmOptions::default()).unwrap();
        for m in &model.lags {
            assert!(m.amax() < 1e-9);
        }
        assert_eq!(graph.edge_count(1e-9), 0);
        // just below the threshold something becomes active
        let (model, _) = varm_fit(&y, 2, lmax * 0.95, &VarmOptions::default()).unwrap();
        assert!(model.lags.iter().map(|m| m.amax()).fold(0.0_f64, f64::max) > 1e-9);
    }

    #[test]
    fn varm_objective_monotone() {
        let y = SignalMatrix::new(randn(4, 80, 9)).unwrap();
        let lmax = varm_lambda_max(&y, 2).unwrap();
        let (model, _) = varm_fit(&y, 2, lmax * 0.3, &VarmOptions::default()).unwrap();
        for pair in model.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "objective rose: {pair:?}");
        }
    }

    #[test]
    fn edge_rules_or_vs_and() {
        let lags = vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 0.9, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.0]),
        ];
        let model = VarmModel { lags, order: 2, objective_trace: vec![] };
        let or_graph = graph_from_varm(&model, EdgeRule::Or, 1e-9).unwrap();
        let and_graph = graph_from_varm(&model, EdgeRule::And, 1e-9).unwrap();
        assert_eq!(or_graph.edge_count(0.0), 1);
        assert_eq!(and_graph.edge_count(0.0), 0);
    }

    #[test]
    fn varm_insufficient_samples() {
        let y = SignalMatrix::new(randn(3, 4, 2)).unwrap();
        assert!(matches!(
            varm_fit(&y, 4, 0.1, &VarmOptions::default()),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn bic_prefers_true_order() {
        // VAR(2) data: BIC grid should not pick order 1.
        let n = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a1 = DMatrix::from_row_slice(3, 3, &[0.4, 0.2, 0.0, 0.0, 0.3, 0.2, 0.1, 0.0, 0.3]);
        let a2 = DMatrix::from_row_slice(3, 3, &[0.4, 0.0, 0.2, 0.2, 0.4, 0.0, 0.0, 0.2, 0.4]);
        let t = 400;
        let mut data = DMatrix::zeros(n, t);
        for k in 2..t {
            let prev1 = data.column(k - 1).into_owned();
            let prev2 = data.column(k - 2).into_owned();
            let noise = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            data.set_column(k, &(&a1 * prev1 + &a2 * prev2 + noise * 0.1));
        }
        let y = SignalMatrix::new(data).unwrap();
        let (best, scores) = select_order_bic(&y, 3, 0.0).unwrap();
        assert!(best >= 2, "bic chose {best}: {scores:?}");
    }
}
