//! Small shared numerical helpers.

use nalgebra::{DMatrix, DVector};

/// Soft-thresholding operator sign(x) * max(|x| - tau, 0).
pub(crate) fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Largest eigenvalue of a symmetric PSD matrix via power iteration.
pub(crate) fn spectral_norm_sym(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let new_lambda = (next.transpose() * a * &next)[(0, 0)];
        if (new_lambda - lambda).abs() <= 1e-12 * new_lambda.abs().max(1.0) {
            return new_lambda;
        }
        lambda = new_lambda;
        v = next;
    }
    lambda
}

/// Spectral radius of an entrywise-nonnegative matrix (Perron root) via
/// power iteration from a strictly positive start vector.
pub(crate) fn perron_radius(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut v = DVector::from_element(n, 1.0);
    let mut rho = 0.0;
    for _ in 0..300 {
        let w = a * &v;
        let norm = w.amax();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        if (norm - rho).abs() <= 1e-12 * norm.max(1.0) {
            return norm;
        }
        rho = norm;
        v = next;
    }
    rho
}

/// Matrix exponential of a square matrix by scaling and squaring with a
/// truncated Taylor series. Adequate for the desk-scale acyclicity checks.
pub(crate) fn matrix_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|v| v.abs()).fold(0.0_f64, f64::max) * n as f64;
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(s);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// ascending. Returns (values, vectors) with vectors as columns.
pub(crate) fn sorted_symmetric_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = a.clone().symmetric_eigen();
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values = DVector::from_fn(n, |k, _| eig.eigenvalues[idx[k]]);
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Exact acyclicity test of the support of `w` (entries with |w| > tol) by
/// Kahn's topological sort.
pub(crate) fn is_acyclic_support(w: &DMatrix<f64>, tol: f64) -> bool {
    let n = w.nrows();
    // W_ij != 0 encodes an edge j -> i.
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && w[(i, j)].abs() > tol {
                out[j].push(i);
                indeg[i] += 1;
            }
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop() {
        seen += 1;
        for &u in &out[v] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                queue.push(u);
            }
        }
    }
    seen == n
}

/// Coordinate descent for the Gram-form elastic-net problem
///   min_w  w' A w - 2 r' w + l1 * sum_{k: penalized} |w_k| + l2 * ||w||^2.
/// Returns the iterate once the largest coordinate move falls below `tol`.
pub(crate) fn coordinate_lasso_gram(
    a: &DMatrix<f64>,
    r: &DVector<f64>,
    l1: f64,
    l2: f64,
    penalized: &[bool],
    w0: DVector<f64>,
    tol: f64,
    max_sweeps: usize,
) -> DVector<f64> {
    let n = r.len();
    let mut w = w0;
    let mut aw = a * &w;
    for _ in 0..max_sweeps {
        let mut max_delta = 0.0_f64;
        for k in 0..n {
            let akk = a[(k, k)];
            if akk + l2 <= 0.0 {
                continue;
            }
            // partial residual excludes coordinate k
            let rho = r[k] - (aw[k] - akk * w[k]);
            let new = if penalized[k] {
                soft_threshold(rho, l1 / 2.0) / (akk + l2)
            } else {
                rho / (akk + l2)
            };
            let delta = new - w[k];
            if delta != 0.0 {
                aw += a.column(k) * delta;
                w[k] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta <= tol {
            break;
        }
    }
    w
}

/// One cyclic sweep of the coordinate update above; returns the largest move.
pub(crate) fn coordinate_lasso_sweep(
    a: &DMatrix<f64>,
    r: &DVector<f64>,
    l1: f64,
    l2: f64,
    penalized: &[bool],
    w: &mut DVector<f64>,
) -> f64 {
    let n = r.len();
    let mut aw = a * &*w;
    let mut max_delta = 0.0_f64;
    for k in 0..n {
        let akk = a[(k, k)];
        if akk + l2 <= 0.0 {
            continue;
        }
        let rho = r[k] - (aw[k] - akk * w[k]);
        let new = if penalized[k] {
            soft_threshold(rho, l1 / 2.0) / (akk + l2)
        } else {
            rho / (akk + l2)
        };
        let delta = new - w[k];
        if delta != 0.0 {
            aw += a.column(k) * delta;
            w[k] = new;
            max_delta = max_delta.max(delta.abs());
        }
    }
    max_delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exp_of_swap_matrix() {
        // exp([[0,1],[1,0]]) = [[cosh 1, sinh 1], [sinh 1, cosh 1]]
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = matrix_exp(&a);
        assert_abs_diff_eq!(e[(0, 0)], 1.0_f64.cosh(), epsilon = 1e-12);
        assert_abs_diff_eq!(e[(0, 1)], 1.0_f64.sinh(), epsilon = 1e-12);
    }

    #[test]
    fn perron_radius_of_cycle() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 4.0, 4.0, 0.0]);
        assert_abs_diff_eq!(perron_radius(&a), 4.0, epsilon = 1e-9);
    }

    #[test]
    fn acyclicity_check() {
        let dag = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(is_acyclic_support(&dag, 0.0));
        let cyc = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(!is_acyclic_support(&cyc, 0.0));
    }

    #[test]
    fn lasso_gram_soft_thresholds_orthogonal_design() {
        // A = I: solution is soft(r, l1/2)
        let a = DMatrix::identity(3, 3);
        let r = DVector::from_row_slice(&[1.0, 0.2, -0.8]);
        let w = coordinate_lasso_gram(
            &a,
            &r,
            1.0,
            0.0,
            &[true, true, true],
            DVector::zeros(3),
            1e-12,
            100,
        );
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(w[2], -0.3, epsilon = 1e-10);
    }
}
