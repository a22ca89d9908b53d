//! Time-varying topology estimators with temporal coupling, and
//! joint-diagonalization topology identification with anchor constraints.
//!
//! The chain coupling weight is called eta throughout; the barrier weight
//! alpha keeps its static meaning.

use nalgebra::{DMatrix, DVector};

use crate::corrnet::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::gmrf::{glasso_objective, GlassoOptions, PrecisionEstimate};
use crate::graph::{Graph, SignalMatrix};
use crate::linalg::{coordinate_lasso_gram, soft_threshold};
use crate::smoothlearn::{
    learn_graph, primal_objective, DistanceVector, LearnGraphOptions,
};

/// Graphs over a common vertex set, one per time slot.
#[derive(Debug, Clone)]
pub struct GraphSequence {
    graphs: Vec<Graph>,
}

impl GraphSequence {
    pub fn new(graphs: Vec<Graph>) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::EmptyInput("graph sequence".into()));
        }
        let n = graphs[0].n_nodes();
        if graphs.iter().any(|g| g.n_nodes() != n) {
            return Err(Error::Shape("graphs must share a common vertex set".into()));
        }
        Ok(Self { graphs })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Frobenius norms of successive differences, the change-point summary.
    pub fn temporal_differences(&self) -> Vec<f64> {
        self.graphs
            .windows(2)
            .map(|pair| (pair[1].weights() - pair[0].weights()).norm())
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TvOptions {
    /// Relative objective change that stops the block sweeps.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for TvOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_sweeps: 500 }
    }
}

/// Slowly time-varying smooth-signal graph learning: block-coordinate sweeps
/// over slots, each solved by the static dual solver with an augmented
/// quadratic pulling toward the neighboring slots. eta = 0 decouples exactly.
pub fn tv_smooth_learn(
    distances: &[DistanceVector],
    alpha: f64,
    beta: f64,
    eta: f64,
    opts: &TvOptions,
) -> Result<(GraphSequence, Vec<f64>)> {
    if distances.is_empty() {
        return Err(Error::EmptyInput("distance sequence".into()));
    }
    if eta < 0.0 {
        return Err(Error::Param("eta must be nonnegative".into()));
    }
    let n = distances[0].n_nodes();
    if distances.iter().any(|d| d.n_nodes() != n) {
        return Err(Error::Shape("distance vectors must share the node count".into()));
    }
    let t = distances.len();
    let p = distances[0].values().len();
    let inner = LearnGraphOptions { tol: 1e-11, max_iter: 200_000, lambda0: None };

    let mut ws: Vec<DVector<f64>> = vec![DVector::zeros(p); t];
    // coupling in edge coordinates: ||W_t - W_u||_F^2 = 2 ||w_t - w_u||^2
    let objective = |ws: &[DVector<f64>]| -> f64 {
        let mut total = 0.0;
        for (k, w) in ws.iter().enumerate() {
            total += primal_objective(w, distances[k].values(), alpha, beta, n);
        }
        for pair in ws.windows(2) {
            total += 2.0 * eta * (&pair[1] - &pair[0]).norm_squared();
        }
        total
    };

    // First pass solves the decoupled slots to get a feasible starting point.
    for k in 0..t {
        let r = learn_graph(&distances[k], alpha, beta, &inner)?;
        ws[k] = r.w.values().clone();
    }
    let mut obj = objective(&ws);
    // For stiff coupling the block sweeps crawl along the consensus mode, so
    // also try starting every slot at the summed-distance solution and keep
    // whichever start scores better.
    if eta > 0.0 && t > 1 {
        let mut sum = distances[0].values().clone();
        for d in &distances[1..] {
            sum += d.values();
        }
        let consensus = learn_graph(
            &DistanceVector::new(sum, n)?,
            alpha * t as f64,
            beta * t as f64,
            &inner,
        )?;
        let candidate: Vec<DVector<f64>> = vec![consensus.w.values().clone(); t];
        let cand_obj = objective(&candidate);
        if cand_obj < obj {
            ws = candidate;
            obj = cand_obj;
        }
    }
    let mut trace = vec![obj];
    if eta > 0.0 && t > 1 {
        for _ in 0..opts.max_sweeps {
            for k in 0..t {
                let mut e_eff = distances[k].values().clone();
                let mut m = 0.0;
                if k > 0 {
                    e_eff -= &ws[k - 1] * (2.0 * eta);
                    m += 1.0;
                }
                if k + 1 < t {
                    e_eff -= &ws[k + 1] * (2.0 * eta);
                    m += 1.0;
                }
                let dv = DistanceVector::new(e_eff, n)?;
                let r = learn_graph(&dv, alpha, beta + 2.0 * eta * m, &inner)?;
                ws[k] = r.w.values().clone();
            }
            let new_obj = objective(&ws);
            trace.push(new_obj);
            if (obj - new_obj).abs() <= opts.tol * obj.abs().max(1.0) {
                obj = new_obj;
                break;
            }
            obj = new_obj;
        }
    }
    let graphs = ws
        .into_iter()
        .map(|w| crate::graph::EdgeVector::new(w, n).map(|e| e.to_graph()))
        .collect::<Result<Vec<_>>>()?;
    Ok((GraphSequence::new(graphs)?, trace))
}

/// Stationarity residual of the coupled per-slot graphical lasso problem.
fn tv_glasso_residual(
    theta: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    lambda: f64,
    penalize_diagonal: bool,
    eta: f64,
    neighbor_sum: &DMatrix<f64>,
    n_neighbors: f64,
) -> f64 {
    let n = theta.nrows();
    let inv = match theta.clone().try_inverse() {
        Some(i) => i,
        None => return f64::INFINITY,
    };
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let r = inv[(i, j)]
                - sigma[(i, j)]
                - 2.0 * eta * (n_neighbors * theta[(i, j)] - neighbor_sum[(i, j)]);
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

/// One slot of the time-varying graphical lasso: proximal gradient on
///   -log det T + tr(Sigma T) + eta sum_nb ||T - T_nb||_F^2 + lambda pen(T)
/// with a monotone line search; returns (theta, converged, sweeps used).
fn tv_glasso_slot(
    sigma: &DMatrix<f64>,
    lambda: f64,
    opts: &GlassoOptions,
    eta: f64,
    neighbor_sum: &DMatrix<f64>,
    n_neighbors: f64,
    theta0: DMatrix<f64>,
) -> Result<(DMatrix<f64>, bool, usize)> {
    let n = sigma.nrows();
    let smooth = |th: &DMatrix<f64>| -> f64 {
        let chol = match th.clone().cholesky() {
            Some(c) => c,
            None => return f64::INFINITY,
        };
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let mut val = -logdet;
        for i in 0..n {
            for j in 0..n {
                val += sigma[(i, j)] * th[(j, i)];
            }
        }
        val += eta * (n_neighbors * th.norm_squared() - 2.0 * th.dot(neighbor_sum));
        val
    };
    let pen = |th: &DMatrix<f64>| -> f64 {
        let mut p = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j || opts.penalize_diagonal {
                    p += th[(i, j)].abs();
                }
            }
        }
        lambda * p
    };
    let mut theta = theta0;
    let mut f_cur = smooth(&theta);
    let mut step = 1.0 / (1.0 + 4.0 * eta * n_neighbors);
    let mut converged = false;
    let mut iters = 0;
    for k in 0..opts.max_iter * 40 {
        iters = k + 1;
        let inv = theta
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidPrecision("slot iterate singular".into()))?;
        let grad = DMatrix::from_fn(n, n, |i, j| {
            -inv[(i, j)]
                + sigma[(i, j)]
                + 2.0 * eta * (n_neighbors * theta[(i, j)] - neighbor_sum[(i, j)])
        });
        let mut accepted = false;
        let mut theta_next = theta.clone();
        for _ in 0..60 {
            theta_next = DMatrix::from_fn(n, n, |i, j| {
                let v = theta[(i, j)] - step * grad[(i, j)];
                if i != j || opts.penalize_diagonal {
                    soft_threshold(v, step * lambda)
                } else {
                    v
                }
            });
            // symmetrize against rounding
            theta_next = (&theta_next + theta_next.transpose()) * 0.5;
            let f_next = smooth(&theta_next);
            if f_next.is_finite() {
                let d = &theta_next - &theta;
                if f_next <= f_cur + grad.dot(&d) + d.norm_squared() / (2.0 * step) + 1e-15 {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let moved = (&theta_next - &theta).amax();
        theta = theta_next;
        f_cur = smooth(&theta);
        step = (step * 1.3).min(1e3);
        let _ = pen; // penalty enters through the prox; value used in tests via glasso_objective
        if moved <= 1e-12
            || tv_glasso_residual(
                &theta,
                sigma,
                lambda,
                opts.penalize_diagonal,
                eta,
                neighbor_sum,
                n_neighbors,
            ) <= opts.tol
        {
            converged = true;
            break;
        }
    }
    Ok((theta, converged, iters))
}

/// Time-varying graphical lasso with squared-Frobenius chain coupling,
/// solved by alternating slot minimizations; eta = 0 reduces to independent
/// static fits.
pub fn tv_graphical_lasso(
    covariances: &[CovarianceEstimate],
    lambda: f64,
    eta: f64,
    glasso_opts: &GlassoOptions,
    opts: &TvOptions,
) -> Result<Vec<PrecisionEstimate>> {
    if covariances.is_empty() {
        return Err(Error::EmptyInput("covariance sequence".into()));
    }
    if lambda < 0.0 || eta < 0.0 {
        return Err(Error::Param("lambda and eta must be nonnegative".into()));
    }
    let n = covariances[0].n_nodes();
    if covariances.iter().any(|c| c.n_nodes() != n) {
        return Err(Error::Shape("covariances must share the node count".into()));
    }
    let t = covariances.len();
    // decoupled warm start
    let mut thetas: Vec<DMatrix<f64>> = Vec::with_capacity(t);
    for c in covariances {
        let est = crate::gmrf::graphical_lasso(c, lambda, glasso_opts)?;
        thetas.push(est.theta().clone());
    }
    let mut converged_flags = vec![true; t];
    let mut total_iters = vec![0usize; t];
    if eta > 0.0 && t > 1 {
        let seq_objective = |ths: &[DMatrix<f64>]| -> f64 {
            let mut total = 0.0;
            for (k, th) in ths.iter().enumerate() {
                total -=
                    glasso_objective(th, covariances[k].sigma(), lambda, glasso_opts.penalize_diagonal);
            }
            for pair in ths.windows(2) {
                total += eta * (&pair[1] - &pair[0]).norm_squared();
            }
            total
        };
        let mut obj = seq_objective(&thetas);
        for _ in 0..opts.max_sweeps {
            for k in 0..t {
                let mut nb_sum = DMatrix::zeros(n, n);
                let mut m = 0.0;
                if k > 0 {
                    nb_sum += &thetas[k - 1];
                    m += 1.0;
                }
                if k + 1 < t {
                    nb_sum += &thetas[k + 1];
                    m += 1.0;
                }
                let (th, ok, iters) = tv_glasso_slot(
                    covariances[k].sigma(),
                    lambda,
                    glasso_opts,
                    eta,
                    &nb_sum,
                    m,
                    thetas[k].clone(),
                )?;
                thetas[k] = th;
                converged_flags[k] = ok;
                total_iters[k] += iters;
            }
            let new_obj = seq_objective(&thetas);
            if (obj - new_obj).abs() <= opts.tol * obj.abs().max(1.0) {
                break;
            }
            obj = new_obj;
        }
    }
    Ok(thetas
        .into_iter()
        .zip(converged_flags)
        .zip(total_iters)
        .map(|((theta, converged), iterations)| {
            let obj = glasso_objective(
                &theta,
                covariances[0].sigma(),
                lambda,
                glasso_opts.penalize_diagonal,
            );
            PrecisionEstimate::from_parts(theta, converged, iterations, vec![obj])
        })
        .collect())
}

/// Per-slot output of the adaptive SEM tracker.
#[derive(Debug, Clone)]
pub struct DynamicSemTrack {
    pub graphs: GraphSequence,
    /// Exogenous loadings per slot.
    pub loadings: Vec<DVector<f64>>,
}

/// Exponentially weighted SEM tracking over cascades: at every slot the
/// weighted Gram recursions are updated with forgetting factor gamma and the
/// row lasso problems are re-solved (warm-started). gamma = 1 pools all
/// history, matching the batch fit at the final slot.
pub fn dynamic_sem_track(
    cascades: &[SignalMatrix],
    exogenous: &DMatrix<f64>,
    gamma: f64,
    alpha: f64,
    opts: &crate::semdag::SemOptions,
) -> Result<DynamicSemTrack> {
    if cascades.is_empty() {
        return Err(Error::EmptyInput("cascade set".into()));
    }
    if !(0.0 < gamma && gamma <= 1.0) {
        return Err(Error::Param(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if alpha < 0.0 {
        return Err(Error::Param("alpha must be nonnegative".into()));
    }
    let n = cascades[0].n_nodes();
    let t = cascades[0].n_samples();
    if cascades.iter().any(|c| c.n_nodes() != n || c.n_samples() != t) {
        return Err(Error::Shape("cascades must share dimensions".into()));
    }
    if exogenous.nrows() != n || exogenous.ncols() != cascades.len() {
        return Err(Error::Shape(format!(
            "exogenous matrix must be {}x{}, got {}x{}",
            n,
            cascades.len(),
            exogenous.nrows(),
            exogenous.ncols()
        )));
    }

    // Per-row regressors: (y_j, j != i; x_i). Gram A (n x n), cross r.
    let mut grams: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, n); n];
    let mut crosses: Vec<DVector<f64>> = vec![DVector::zeros(n); n];
    let mut coefs: Vec<DVector<f64>> = vec![DVector::zeros(n); n];
    let mut graphs = Vec::with_capacity(t);
    let mut loadings = Vec::with_capacity(t);

    for slot in 0..t {
        for i in 0..n {
            grams[i] *= gamma;
            crosses[i] *= gamma;
        }
        for (c, cascade) in cascades.iter().enumerate() {
            let yt = cascade.data().column(slot);
            for i in 0..n {
                let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let mut z = DVector::zeros(n);
                for (p, &j) in others.iter().enumerate() {
                    z[p] = yt[j];
                }
                z[n - 1] = exogenous[(i, c)];
                // rank-one accumulate
                for a in 0..n {
                    for b in 0..n {
                        grams[i][(a, b)] += z[a] * z[b];
                    }
                    crosses[i][a] += z[a] * yt[i];
                }
            }
        }
        let mut w = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        let mut penalized = vec![true; n];
        penalized[n - 1] = false;
        for i in 0..n {
            let coef = coordinate_lasso_gram(
                &grams[i],
                &crosses[i],
                alpha,
                0.0,
                &penalized,
                coefs[i].clone(),
                opts.tol,
                opts.max_sweeps,
            );
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            for (p, &j) in others.iter().enumerate() {
                w[(i, j)] = coef[p];
            }
            b[i] = coef[n - 1];
            coefs[i] = coef;
        }
        graphs.push(Graph::directed(w)?);
        loadings.push(b);
    }
    Ok(DynamicSemTrack { graphs: GraphSequence::new(graphs)?, loadings })
}

/// Ridge added to short-segment correlation estimates.
pub const SEGMENT_RIDGE: f64 = 1e-8;

/// Sample correlation matrices over declared segments; `boundaries` holds
/// M+1 increasing offsets 0 = b_0 < ... < b_M = T.
pub fn segment_correlations(y: &SignalMatrix, boundaries: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    if boundaries.len() < 3 {
        return Err(Error::Ambiguity("need at least two segments".into()));
    }
    if boundaries[0] != 0 || *boundaries.last().unwrap() != y.n_samples() {
        return Err(Error::Param("boundaries must start at 0 and end at T".into()));
    }
    if boundaries.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Param("boundaries must be strictly increasing".into()));
    }
    let n = y.n_nodes();
    let mut out = Vec::with_capacity(boundaries.len() - 1);
    for seg in boundaries.windows(2) {
        let len = seg[1] - seg[0];
        let mut r = DMatrix::zeros(n, n);
        for t in seg[0]..seg[1] {
            let yt = y.data().column(t);
            for a in 0..n {
                for b in 0..n {
                    r[(a, b)] += yt[a] * yt[b] / len as f64;
                }
            }
        }
        for d in 0..n {
            r[(d, d)] += SEGMENT_RIDGE;
        }
        out.push(r);
    }
    Ok(out)
}

/// Joint-diagonalization problem: per-segment output correlations plus known
/// adjacency entries (anchors) that pin down the scaling/permutation class.
#[derive(Debug, Clone)]
pub struct JdProblem {
    slices: Vec<DMatrix<f64>>,
    anchors: Vec<(usize, usize, f64)>,
}

impl JdProblem {
    pub fn new(slices: Vec<DMatrix<f64>>, anchors: Vec<(usize, usize, f64)>) -> Result<Self> {
        if slices.len() < 2 {
            return Err(Error::Ambiguity(
                "joint diagonalization needs at least two segments".into(),
            ));
        }
        let n = slices[0].nrows();
        for s in &slices {
            if s.nrows() != n || s.ncols() != n {
                return Err(Error::Shape("slices must be square and equally sized".into()));
            }
            for i in 0..n {
                for j in 0..i {
                    if (s[(i, j)] - s[(j, i)]).abs() > 1e-8 * s[(i, j)].abs().max(1.0) {
                        return Err(Error::Shape("slices must be symmetric".into()));
                    }
                }
            }
        }
        let mut seen = std::collections::BTreeMap::new();
        for &(i, j, v) in &anchors {
            if i >= n || j >= n {
                return Err(Error::Anchor(format!("anchor ({i}, {j}) out of range")));
            }
            if i == j {
                return Err(Error::Anchor(format!(
                    "anchor on the diagonal ({i}, {i}) conflicts with h_ii = 1"
                )));
            }
            if let Some(&prev) = seen.get(&(i, j)) {
                let prev: f64 = prev;
                if (prev - v).abs() > 1e-12 {
                    return Err(Error::Anchor(format!("conflicting anchors at ({i}, {j})")));
                }
            }
            seen.insert((i, j), v);
        }
        Ok(Self { slices, anchors })
    }

    pub fn slices(&self) -> &[DMatrix<f64>] {
        &self.slices
    }

    pub fn anchors(&self) -> &[(usize, usize, f64)] {
        &self.anchors
    }
}

/// Result of [`jd_fit`]: the demixing matrix H (unit diagonal), the graph
/// W = I - H, and the final off-diagonal residual.
#[derive(Debug, Clone)]
pub struct JdResult {
    pub h: DMatrix<f64>,
    pub w: Graph,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn jd_objective(h: &DMatrix<f64>, slices: &[DMatrix<f64>]) -> f64 {
    let mut total = 0.0;
    for r in slices {
        let m = h * r * h.transpose();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if i != j {
                    total += m[(i, j)] * m[(i, j)];
                }
            }
        }
    }
    total
}

/// Joint diagonalization with anchors by row-wise block coordinate descent:
/// each row of H minimizes a convex quadratic subject to its equality
/// constraints (h_ii = 1 and anchored entries), solved in closed form.
pub fn jd_fit(problem: &JdProblem, tol: f64, max_iter: usize) -> Result<JdResult> {
    let slices = &problem.slices;
    let n = slices[0].nrows();
    let mut h = DMatrix::<f64>::identity(n, n);
    for &(i, j, w_ij) in &problem.anchors {
        h[(i, j)] = -w_ij;
    }
    let mut obj = jd_objective(&h, slices);
    let mut converged = false;
    let mut iters = 0;
    for sweep in 0..max_iter {
        iters = sweep + 1;
        for i in 0..n {
            // quadratic form M_i = sum_m sum_{j != i} (R_m h_j)(R_m h_j)'
            let mut m_i = DMatrix::<f64>::zeros(n, n);
            for r in slices {
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let v = r * h.row(j).transpose();
                    for a in 0..n {
                        for b in 0..n {
                            m_i[(a, b)] += v[a] * v[b];
                        }
                    }
                }
            }
            // fixed coordinates of row i
            let mut fixed: Vec<(usize, f64)> = vec![(i, 1.0)];
            for &(ai, aj, w_ij) in &problem.anchors {
                if ai == i {
                    fixed.push((aj, -w_ij));
                }
            }
            let fixed_idx: Vec<usize> = fixed.iter().map(|&(k, _)| k).collect();
            let free: Vec<usize> = (0..n).filter(|k| !fixed_idx.contains(k)).collect();
            if free.is_empty() {
                continue;
            }
            let mut a_ff = DMatrix::<f64>::zeros(free.len(), free.len());
            for (p, &fp) in free.iter().enumerate() {
                for (q, &fq) in free.iter().enumerate() {
                    a_ff[(p, q)] = m_i[(fp, fq)];
                }
            }
            let mut rhs = DVector::<f64>::zeros(free.len());
            for (p, &fp) in free.iter().enumerate() {
                for &(k, val) in &fixed {
                    rhs[p] -= m_i[(fp, k)] * val;
                }
            }
            // tiny ridge keeps degenerate systems solvable
            let ridge = 1e-14 * a_ff.trace().max(1e-30);
            for d in 0..free.len() {
                a_ff[(d, d)] += ridge;
            }
            let sol = a_ff
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::DegenerateInput("singular row system".into()))?;
            for (p, &fp) in free.iter().enumerate() {
                h[(i, fp)] = sol[p];
            }
            for &(k, val) in &fixed {
                h[(i, k)] = val;
            }
        }
        let new_obj = jd_objective(&h, slices);
        if (obj - new_obj).abs() <= tol * obj.max(1.0) {
            obj = new_obj;
            converged = true;
            break;
        }
        obj = new_obj;
    }
    let mut w = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[(i, j)] = -h[(i, j)];
            }
        }
    }
    Ok(JdResult { h, w: Graph::directed(w)?, residual: obj, iterations: iters, converged })
}
