//! Correlation and partial-correlation network identification with per-edge
//! hypothesis tests and Benjamini-Hochberg FDR control.

use nalgebra::DMatrix;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::graph::{edge_pairs, n_pairs, Graph, SignalMatrix};

/// Unbiased sample covariance together with the sample count it came from.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    sigma: DMatrix<f64>,
    n_samples: usize,
}

impl CovarianceEstimate {
    /// Wraps an externally supplied covariance (must be square symmetric
    /// with nonnegative diagonal).
    pub fn from_matrix(sigma: DMatrix<f64>, n_samples: usize) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() {
            return Err(Error::Shape("covariance must be square".into()));
        }
        for j in 0..sigma.ncols() {
            for i in 0..j {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 * sigma[(i, j)].abs().max(1.0) {
                    return Err(Error::Shape("covariance must be symmetric".into()));
                }
            }
            if sigma[(j, j)] < 0.0 {
                return Err(Error::Param("covariance diagonal must be nonnegative".into()));
            }
        }
        Ok(Self { sigma, n_samples })
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_nodes(&self) -> usize {
        self.sigma.nrows()
    }
}

/// Sigma_hat = 1/(T-1) * sum_t (y_t - mean)(y_t - mean)'.
pub fn sample_covariance(y: &SignalMatrix) -> Result<CovarianceEstimate> {
    let t = y.n_samples();
    if t < 2 {
        return Err(Error::InsufficientSamples(format!(
            "sample covariance needs T >= 2, got {t}"
        )));
    }
    let n = y.n_nodes();
    let data = y.data();
    let mean = data.column_mean();
    let mut sigma = DMatrix::zeros(n, n);
    for k in 0..t {
        let d = data.column(k) - &mean;
        sigma.syger(1.0 / (t as f64 - 1.0), &d, &d, 1.0);
    }
    // syger fills the lower triangle; mirror it.
    for j in 0..n {
        for i in 0..j {
            sigma[(i, j)] = sigma[(j, i)];
        }
    }
    Ok(CovarianceEstimate { sigma, n_samples: t })
}

/// Pearson correlations rho_ij = sigma_ij / sqrt(sigma_ii sigma_jj).
pub fn pearson_matrix(c: &CovarianceEstimate) -> Result<DMatrix<f64>> {
    let n = c.n_nodes();
    let s = c.sigma();
    for i in 0..n {
        if s[(i, i)] <= 0.0 {
            return Err(Error::DegenerateVariance { node: i });
        }
    }
    let mut rho = DMatrix::zeros(n, n);
    for i in 0..n {
        rho[(i, i)] = 1.0;
        for j in 0..i {
            let r = s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt();
            rho[(i, j)] = r;
            rho[(j, i)] = r;
        }
    }
    Ok(rho)
}

/// One Fisher z-test per unordered node pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTest {
    pub i: usize,
    pub j: usize,
    /// Fisher score atanh(rho_hat).
    pub statistic: f64,
    /// Two-sided p-value under the Normal(0, 1/(T-3)) null.
    pub p_value: f64,
}

/// Clip applied to empirical correlations before atanh so that degenerate
/// samples with |rho| approaching 1 keep the statistic bounded.
pub const CORRELATION_CLIP: f64 = 1e-12;

/// Tests H0: rho_ij = 0 against a two-sided alternative for every unordered
/// pair, using the Fisher score z = atanh(rho_hat) ~ Normal(0, 1/(T-3)).
pub fn fisher_tests(rho: &DMatrix<f64>, n_samples: usize) -> Result<Vec<EdgeTest>> {
    if n_samples <= 3 {
        return Err(Error::InsufficientSamples(format!(
            "fisher test needs T >= 4, got {n_samples}"
        )));
    }
    let n = rho.nrows();
    let sd = 1.0 / ((n_samples as f64 - 3.0).sqrt());
    let mut tests = Vec::with_capacity(n_pairs(n));
    for (i, j) in edge_pairs(n) {
        let r = rho[(i, j)];
        if r.abs() >= 1.0 {
            return Err(Error::SaturatedCorrelation { i, j });
        }
        let clipped = r.clamp(-1.0 + CORRELATION_CLIP, 1.0 - CORRELATION_CLIP);
        let z = clipped.atanh();
        let p = erfc(z.abs() / (sd * std::f64::consts::SQRT_2));
        tests.push(EdgeTest { i, j, statistic: z, p_value: p });
    }
    Ok(tests)
}

/// Benjamini-Hochberg selection at FDR level q: sort p-values ascending,
/// find the largest k with p_(k) <= (k/m) q and declare those k edges.
/// Returns a binary undirected graph.
pub fn bh_fdr_select(tests: &[EdgeTest], q: f64) -> Result<Graph> {
    if tests.is_empty() {
        return Err(Error::EmptyInput("no edge tests".into()));
    }
    if !(0.0..1.0).contains(&q) || q <= 0.0 {
        return Err(Error::Param(format!("q must lie in (0, 1), got {q}")));
    }
    let n = tests.iter().map(|t| t.j).max().unwrap() + 1;
    let m = n_pairs(n);
    if tests.len() != m {
        return Err(Error::Shape(format!(
            "expected one test per unordered pair ({m}), got {}",
            tests.len()
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| tests[a].p_value.partial_cmp(&tests[b].p_value).unwrap());
    let mut cutoff = None;
    for (rank, &idx) in order.iter().enumerate() {
        if tests[idx].p_value <= (rank as f64 + 1.0) / m as f64 * q {
            cutoff = Some(rank);
        }
    }
    let mut w = DMatrix::zeros(n, n);
    if let Some(k) = cutoff {
        for &idx in &order[..=k] {
            let t = &tests[idx];
            w[(t.i, t.j)] = 1.0;
            w[(t.j, t.i)] = 1.0;
        }
    }
    Graph::undirected(w)
}

/// Partial correlations computed from a precision matrix via
/// rho_ij = -theta_ij / sqrt(theta_ii theta_jj), zero-diagonal convention.
#[derive(Debug, Clone)]
pub struct PartialCorrelations {
    pub values: DMatrix<f64>,
    /// False when some |rho_ij| > 1, which flags a non-PD input.
    pub in_range: bool,
}

pub fn partial_correlations(theta: &DMatrix<f64>) -> Result<PartialCorrelations> {
    let n = theta.nrows();
    if theta.ncols() != n {
        return Err(Error::Shape("precision matrix must be square".into()));
    }
    for i in 0..n {
        if theta[(i, i)] <= 0.0 {
            return Err(Error::InvalidPrecision(format!(
                "diagonal entry {i} must be positive, got {}",
                theta[(i, i)]
            )));
        }
    }
    let mut values = DMatrix::zeros(n, n);
    let mut in_range = true;
    for (i, j) in edge_pairs(n) {
        let r = -theta[(i, j)] / (theta[(i, i)] * theta[(j, j)]).sqrt();
        values[(i, j)] = r;
        values[(j, i)] = r;
        if r.abs() > 1.0 {
            in_range = false;
        }
    }
    Ok(PartialCorrelations { values, in_range })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn covariance_of_constant_columns_is_zero() {
        let y = SignalMatrix::new(DMatrix::from_row_slice(2, 3, &[5.0, 5.0, 5.0, -1.0, -1.0, -1.0]))
            .unwrap();
        let c = sample_covariance(&y).unwrap();
        assert!(c.sigma().iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn covariance_two_sample_hand_computation() {
        let y =
            SignalMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0])).unwrap();
        let c = sample_covariance(&y).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]);
        assert_abs_diff_eq!(c.sigma().clone(), expect, epsilon = 1e-14);
    }

    #[test]
    fn covariance_needs_two_samples() {
        let y = SignalMatrix::new(DMatrix::from_row_slice(2, 1, &[1.0, 2.0])).unwrap();
        assert!(matches!(sample_covariance(&y), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn pearson_of_diagonal_covariance_is_identity() {
        let c = CovarianceEstimate::from_matrix(
            DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 3.0, 0.5])),
            10,
        )
        .unwrap();
        let rho = pearson_matrix(&c).unwrap();
        assert_abs_diff_eq!(rho, DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn pearson_saturated_case() {
        let c =
            CovarianceEstimate::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]), 2)
                .unwrap();
        let rho = pearson_matrix(&c).unwrap();
        assert_abs_diff_eq!(rho, DMatrix::from_element(2, 2, 1.0), epsilon = 1e-14);
    }

    #[test]
    fn pearson_rejects_zero_variance() {
        let c =
            CovarianceEstimate::from_matrix(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]), 5)
                .unwrap();
        assert!(matches!(pearson_matrix(&c), Err(Error::DegenerateVariance { node: 0 })));
    }

    #[test]
    fn fisher_null_gives_p_one() {
        let rho = DMatrix::identity(2, 2);
        let tests = fisher_tests(&rho, 10).unwrap();
        assert_eq!(tests.len(), 1);
        assert_eq!(tests[0].statistic, 0.0);
        assert_abs_diff_eq!(tests[0].p_value, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn fisher_frozen_value() {
        // rho = 0.5, T = 28: z = atanh(0.5), sd = 0.2,
        // p = 2 * (1 - Phi(z / sd)) = 0.006022924485883415 (normal-CDF oracle)
        let mut rho = DMatrix::identity(2, 2);
        rho[(0, 1)] = 0.5;
        rho[(1, 0)] = 0.5;
        let tests = fisher_tests(&rho, 28).unwrap();
        assert_abs_diff_eq!(tests[0].statistic, 0.5493061443340548, epsilon = 1e-12);
        assert_abs_diff_eq!(tests[0].p_value, 0.006022924485883415, epsilon = 1e-9);
    }

    #[test]
    fn fisher_sign_symmetry() {
        let mut pos = DMatrix::identity(2, 2);
        pos[(0, 1)] = 0.5;
        pos[(1, 0)] = 0.5;
        let mut neg = DMatrix::identity(2, 2);
        neg[(0, 1)] = -0.5;
        neg[(1, 0)] = -0.5;
        let p_pos = fisher_tests(&pos, 28).unwrap()[0].p_value;
        let p_neg = fisher_tests(&neg, 28).unwrap()[0].p_value;
        assert_abs_diff_eq!(p_pos, p_neg, epsilon = 1e-15);
    }

    #[test]
    fn fisher_rejects_saturation_and_small_t() {
        let mut rho = DMatrix::identity(2, 2);
        rho[(0, 1)] = 1.0;
        rho[(1, 0)] = 1.0;
        assert!(matches!(
            fisher_tests(&rho, 28),
            Err(Error::SaturatedCorrelation { i: 0, j: 1 })
        ));
        let ok = DMatrix::identity(2, 2);
        assert!(matches!(fisher_tests(&ok, 3), Err(Error::InsufficientSamples(_))));
    }

    fn tests_from_ps(ps: &[f64]) -> Vec<EdgeTest> {
        // three p-values cover the N=3 pair set
        edge_pairs(3)
            .zip(ps)
            .map(|((i, j), &p)| EdgeTest { i, j, statistic: 0.0, p_value: p })
            .collect()
    }

    #[test]
    fn bh_rule_hand_evaluated() {
        // thresholds at q = 0.05, m = 3: 0.0167 / 0.0333 / 0.05
        let g = bh_fdr_select(&tests_from_ps(&[0.001, 0.2, 0.8]), 0.05).unwrap();
        assert_eq!(g.edge_count(0.0), 1);
        assert_eq!(g.weights()[(0, 1)], 1.0);
    }

    #[test]
    fn bh_all_ones_empty_graph() {
        let g = bh_fdr_select(&tests_from_ps(&[1.0, 1.0, 1.0]), 0.1).unwrap();
        assert_eq!(g.edge_count(0.0), 0);
    }

    #[test]
    fn bh_all_zero_complete_graph() {
        let g = bh_fdr_select(&tests_from_ps(&[0.0, 0.0, 0.0]), 0.1).unwrap();
        assert_eq!(g.edge_count(0.0), 3);
    }

    #[test]
    fn bh_empty_input_rejected() {
        assert!(matches!(bh_fdr_select(&[], 0.1), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn partial_correlations_examples() {
        let diag = DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 5.0, 1.0]));
        let pc = partial_correlations(&diag).unwrap();
        assert!(pc.values.iter().all(|&v| v == 0.0));
        assert!(pc.in_range);

        let theta = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let pc = partial_correlations(&theta).unwrap();
        assert_abs_diff_eq!(pc.values[(0, 1)], 0.5, epsilon = 1e-14);

        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let pc = partial_correlations(&indefinite).unwrap();
        assert_abs_diff_eq!(pc.values[(0, 1)], -2.0, epsilon = 1e-14);
        assert!(!pc.in_range);
    }

    #[test]
    fn partial_correlations_rejects_nonpositive_diagonal() {
        let theta = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 1.0]);
        assert!(matches!(partial_correlations(&theta), Err(Error::InvalidPrecision(_))));
    }

    #[test]
    fn null_p_values_are_uniform() {
        // Kolmogorov-Smirnov distance of null p-values against U[0,1]
        // at T = 100 over 10^4 replicates stays below 0.05.
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let t = 100;
        let reps = 10_000;
        let mut ps = Vec::with_capacity(reps);
        for _ in 0..reps {
            let data = DMatrix::from_fn(2, t, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            let y = SignalMatrix::new(data).unwrap();
            let rho = pearson_matrix(&sample_covariance(&y).unwrap()).unwrap();
            ps.push(fisher_tests(&rho, t).unwrap()[0].p_value);
        }
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = ps.len() as f64;
        let ks = ps
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let hi = ((k as f64 + 1.0) / n - p).abs();
                let lo = (p - k as f64 / n).abs();
                hi.max(lo)
            })
            .fold(0.0_f64, f64::max);
        assert!(ks < 0.05, "KS statistic {ks} too large");
    }
}
