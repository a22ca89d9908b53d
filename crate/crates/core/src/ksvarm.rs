//! Nonlinear topology identification via kernel-based sparse SVARMs with
//! optional multi-kernel dictionaries.
//!
//! Each candidate influence (source node, lag, kernel) contributes a Gram
//! matrix; the per-target regression is group-sparse in the kernel norm
//! sqrt(alpha' K alpha). Factoring K = R R' turns every group into a plain
//! Euclidean group-lasso block, solved by monotone proximal gradient steps.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, SignalMatrix};
use crate::linalg::spectral_norm_sym;

/// Scalar kernel choices for the dictionary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Gaussian { bandwidth: f64 },
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { bandwidth } if *bandwidth <= 0.0 => {
                Err(Error::Param(format!("gaussian bandwidth must be positive, got {bandwidth}")))
            }
            KernelSpec::Polynomial { degree, .. } if *degree == 0 => {
                Err(Error::Param("polynomial degree must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    fn eval(&self, a: f64, b: f64) -> f64 {
        match self {
            KernelSpec::Linear => a * b,
            KernelSpec::Gaussian { bandwidth } => {
                (-((a - b) * (a - b)) / (2.0 * bandwidth * bandwidth)).exp()
            }
            KernelSpec::Polynomial { degree, offset } => (a * b + offset).powi(*degree as i32),
        }
    }
}

/// Median of pairwise absolute differences between observed scalar values,
/// used as the default gaussian bandwidth. Falls back to 1 for constant data.
pub fn median_bandwidth(y: &SignalMatrix) -> f64 {
    let vals: Vec<f64> = y.data().iter().copied().collect();
    // subsample deterministically to keep the pair count bounded
    let stride = (vals.len() / 512).max(1);
    let sub: Vec<f64> = vals.iter().step_by(stride).copied().collect();
    let mut diffs = Vec::with_capacity(sub.len() * (sub.len() - 1) / 2);
    for i in 0..sub.len() {
        for j in 0..i {
            diffs.push((sub[i] - sub[j]).abs());
        }
    }
    if diffs.is_empty() {
        return 1.0;
    }
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = diffs[diffs.len() / 2];
    if med > 0.0 { med } else { 1.0 }
}

/// Jitter added to every Gram diagonal before factorization.
pub const GRAM_JITTER: f64 = 1e-10;

/// Identifier of one dictionary group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupId {
    /// Source node i.
    pub source: usize,
    /// Lag 0..=L (0 is the instantaneous term).
    pub lag: usize,
    /// Kernel index within the dictionary.
    pub kernel: usize,
}

/// Gram matrices K_i^(l,p) over the aligned target window, plus their
/// Cholesky factors.
#[derive(Debug, Clone)]
pub struct KernelStack {
    groups: Vec<GroupId>,
    grams: Vec<DMatrix<f64>>,
    factors: Vec<DMatrix<f64>>,
    n_nodes: usize,
    order: usize,
    n_kernels: usize,
    t_eff: usize,
}

impl KernelStack {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_kernels(&self) -> usize {
        self.n_kernels
    }

    /// Usable targets T' = T - L.
    pub fn t_eff(&self) -> usize {
        self.t_eff
    }

    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    pub fn gram(&self, idx: usize) -> &DMatrix<f64> {
        &self.grams[idx]
    }
}

/// Builds the Gram stack: entry (t, t') of K_i^(l,p) is
/// kernel_p(y_{i, t-l}, y_{i, t'-l}) over the aligned target window.
pub fn build_kernel_stack(
    y: &SignalMatrix,
    order: usize,
    specs: &[KernelSpec],
) -> Result<KernelStack> {
    if specs.is_empty() {
        return Err(Error::Param("kernel dictionary is empty".into()));
    }
    for s in specs {
        s.validate()?;
    }
    let t = y.n_samples();
    if t <= order {
        return Err(Error::InsufficientSamples(format!(
            "need T > L, got T = {t} and L = {order}"
        )));
    }
    let n = y.n_nodes();
    let t_eff = t - order;
    let yd = y.data();
    let mut groups = Vec::new();
    let mut grams = Vec::new();
    let mut factors = Vec::new();
    for i in 0..n {
        for lag in 0..=order {
            for (p, spec) in specs.iter().enumerate() {
                let mut k = DMatrix::zeros(t_eff, t_eff);
                for a in 0..t_eff {
                    for b in 0..=a {
                        let va = yd[(i, order + a - lag)];
                        let vb = yd[(i, order + b - lag)];
                        let v = spec.eval(va, vb);
                        k[(a, b)] = v;
                        k[(b, a)] = v;
                    }
                }
                let mut jittered = k.clone();
                for d in 0..t_eff {
                    jittered[(d, d)] += GRAM_JITTER;
                }
                let chol = jittered.cholesky().ok_or_else(|| {
                    Error::Kernel(format!(
                        "gram for node {i}, lag {lag}, kernel {p} is not PSD after jitter"
                    ))
                })?;
                groups.push(GroupId { source: i, lag, kernel: p });
                grams.push(k);
                factors.push(chol.l());
            }
        }
    }
    Ok(KernelStack { groups, grams, factors, n_nodes: n, order, n_kernels: specs.len(), t_eff })
}

/// Fitted coefficients of one active group.
#[derive(Debug, Clone)]
pub struct GroupFit {
    pub target: usize,
    pub id: GroupId,
    /// Representer coefficients alpha (length T').
    pub alpha: DVector<f64>,
    /// Kernel norm sqrt(alpha' K alpha) of the fitted component.
    pub norm: f64,
}

/// Fitted kernel SVARM.
#[derive(Debug, Clone)]
pub struct KsvarmModel {
    /// All groups with their coefficients (zero groups included).
    pub groups: Vec<GroupFit>,
    /// Directed graph: edge i -> j when some group (i, l, p) targeting j has
    /// norm above the edge threshold; weight is the largest such norm.
    pub edge_graph: Graph,
    /// Fitted values K alpha summed per target, row per node (N x T').
    pub fitted: DMatrix<f64>,
    /// Per-target objective traces (monotone nonincreasing).
    pub objective_traces: Vec<Vec<f64>>,
    pub converged: bool,
}

impl KsvarmModel {
    /// Sum of group norms per (source, target) split by kernel index;
    /// useful to observe which dictionary member was selected.
    pub fn kernel_norm_totals(&self) -> Vec<f64> {
        let p = self.groups.iter().map(|g| g.id.kernel).max().map_or(0, |m| m + 1);
        let mut totals = vec![0.0; p];
        for g in &self.groups {
            totals[g.id.kernel] += g.norm;
        }
        totals
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KsvarmOptions {
    /// Include the lag-0 (instantaneous) groups for sources i != target.
    pub include_instantaneous: bool,
    /// Group-norm threshold for declaring an edge.
    pub edge_threshold: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KsvarmOptions {
    fn default() -> Self {
        Self { include_instantaneous: true, edge_threshold: 1e-6, tol: 1e-9, max_iter: 20_000 }
    }
}

fn target_groups(stack: &KernelStack, target: usize, opts: &KsvarmOptions) -> Vec<usize> {
    stack
        .groups
        .iter()
        .enumerate()
        .filter(|(_, g)| {
            if g.lag == 0 {
                opts.include_instantaneous && g.source != target
            } else {
                true
            }
        })
        .map(|(idx, _)| idx)
        .collect()
}

/// Smallest lambda that zeroes every group: max_{j,g} || R_g' y_j ||_2.
pub fn ksvarm_lambda_max(stack: &KernelStack, y: &SignalMatrix, opts: &KsvarmOptions) -> Result<f64> {
    let targets = target_vectors(stack, y)?;
    let mut best = 0.0_f64;
    for (j, yj) in targets.iter().enumerate() {
        for &gi in &target_groups(stack, j, opts) {
            let v = stack.factors[gi].transpose() * yj;
            best = best.max(v.norm());
        }
    }
    Ok(best)
}

fn target_vectors(stack: &KernelStack, y: &SignalMatrix) -> Result<Vec<DVector<f64>>> {
    if y.n_nodes() != stack.n_nodes {
        return Err(Error::Shape("stack and signals disagree on the node count".into()));
    }
    if y.n_samples() != stack.t_eff + stack.order {
        return Err(Error::Shape("stack and signals disagree on the sample count".into()));
    }
    let yd = y.data();
    Ok((0..stack.n_nodes)
        .map(|i| DVector::from_fn(stack.t_eff, |a, _| yd[(i, stack.order + a)]))
        .collect())
}

/// Group-sparse kernel regression per target node: minimizes
///   1/2 ||y_j - sum_g K_g alpha_g||^2 + lambda sum_g sqrt(alpha_g' K_g alpha_g)
/// by proximal gradient on the factored coordinates, in parallel over
/// targets. Edges follow the OR rule over lags (and kernels).
pub fn ksvarm_fit(
    stack: &KernelStack,
    y: &SignalMatrix,
    lambda: f64,
    opts: &KsvarmOptions,
) -> Result<KsvarmModel> {
    if lambda < 0.0 {
        return Err(Error::Param("lambda must be nonnegative".into()));
    }
    let targets = target_vectors(stack, y)?;
    let n = stack.n_nodes;
    let t_eff = stack.t_eff;

    struct TargetFit {
        xi: Vec<DVector<f64>>,
        group_idx: Vec<usize>,
        trace: Vec<f64>,
        converged: bool,
    }

    let fits: Vec<TargetFit> = (0..n)
        .into_par_iter()
        .map(|j| {
            let group_idx = target_groups(stack, j, opts);
            let yj = &targets[j];
            // Lipschitz constant of the smooth part: lambda_max(sum_g K_g).
            let mut ksum = DMatrix::zeros(t_eff, t_eff);
            for &gi in &group_idx {
                ksum += &stack.grams[gi];
            }
            let lip = spectral_norm_sym(&ksum).max(GRAM_JITTER);
            let step = 1.0 / (lip * (1.0 + 1e-9));

            let mut xi: Vec<DVector<f64>> = group_idx.iter().map(|_| DVector::zeros(t_eff)).collect();
            let mut fit = DVector::<f64>::zeros(t_eff);
            let objective = |fit: &DVector<f64>, xi: &[DVector<f64>]| -> f64 {
                0.5 * (yj - fit).norm_squared()
                    + lambda * xi.iter().map(|x| x.norm()).sum::<f64>()
            };
            let mut trace = vec![objective(&fit, &xi)];
            let mut converged = false;
            for _ in 0..opts.max_iter {
                let residual = yj - &fit;
                let mut max_move = 0.0_f64;
                let mut new_fit = DVector::<f64>::zeros(t_eff);
                for (slot, &gi) in group_idx.iter().enumerate() {
                    let r = &stack.factors[gi];
                    let grad = -(r.transpose() * &residual);
                    let v = &xi[slot] - grad * step;
                    let norm = v.norm();
                    let scale_g = if norm > 0.0 { (1.0 - step * lambda / norm).max(0.0) } else { 0.0 };
                    let next = v * scale_g;
                    max_move = max_move.max((&next - &xi[slot]).amax());
                    new_fit += r * &next;
                    xi[slot] = next;
                }
                fit = new_fit;
                trace.push(objective(&fit, &xi));
                if max_move <= opts.tol {
                    converged = true;
                    break;
                }
            }
            TargetFit { xi, group_idx, trace, converged }
        })
        .collect();

    let mut groups = Vec::new();
    let mut fitted = DMatrix::zeros(n, t_eff);
    let mut weights = DMatrix::<f64>::zeros(n, n);
    let mut traces = Vec::with_capacity(n);
    let mut converged = true;
    for (j, f) in fits.iter().enumerate() {
        converged &= f.converged;
        let mut fit_row = DVector::<f64>::zeros(t_eff);
        for (slot, &gi) in f.group_idx.iter().enumerate() {
            let xi = &f.xi[slot];
            let norm = xi.norm();
            // alpha solves R' alpha = xi
            let alpha = stack.factors[gi]
                .transpose()
                .solve_upper_triangular(xi)
                .unwrap_or_else(|| DVector::zeros(t_eff));
            fit_row += &stack.factors[gi] * xi;
            let id = stack.groups[gi];
            if id.source != j && norm > opts.edge_threshold {
                // directed edge source -> target j: weights[(j, source)]
                weights[(j, id.source)] = weights[(j, id.source)].max(norm);
            }
            groups.push(GroupFit { target: j, id, alpha, norm });
        }
        fitted.set_row(j, &fit_row.transpose());
        traces.push(f.trace.clone());
    }
    let edge_graph = Graph::directed(weights)?;
    Ok(KsvarmModel { groups, edge_graph, fitted, objective_traces: traces, converged })
}

/// Multi-kernel variant: identical solver over groups indexed by
/// (source, lag, kernel); requires at least two dictionary members.
pub fn mkl_fit(
    stack: &KernelStack,
    y: &SignalMatrix,
    lambda: f64,
    opts: &KsvarmOptions,
) -> Result<KsvarmModel> {
    if stack.n_kernels < 2 {
        return Err(Error::Param(format!(
            "multi-kernel fit needs P >= 2 kernels, got {}",
            stack.n_kernels
        )));
    }
    ksvarm_fit(stack, y, lambda, opts)
}
