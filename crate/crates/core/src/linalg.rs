//! Dense factorization helpers shared by the operator and information code.

use nalgebra::{DMatrix, DVector};

/// One-sided Jacobi SVD. Returns `(A V, V)` where `V` is orthogonal `n x n` and the columns
/// of `A V` are mutually orthogonal; their norms are the singular values.
///
/// Used instead of `nalgebra::SVD`, which loses accuracy on exactly rank-deficient inputs.
fn jacobi(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.ncols();
    let mut u = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let eps = f64::EPSILON;
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = u.column(i).norm_squared();
                let beta = u.column(j).norm_squared();
                let gamma = u.column(i).dot(&u.column(j));
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut u, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    (u, v)
}

fn rotate(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (x, y) = (m[(r, i)], m[(r, j)]);
        m[(r, i)] = c * x - s * y;
        m[(r, j)] = s * x + c * y;
    }
}

/// Singular values and a full set of right singular vectors (as columns of an `n x n` matrix),
/// returned in descending order of singular value. Wide matrices get `n` values, the surplus
/// ones zero up to rounding.
pub(crate) fn right_singular_system(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.ncols();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let (u, v) = jacobi(a);
    let sigma: Vec<f64> = (0..n).map(|k| u.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let values = order.iter().map(|&i| sigma[i]).collect();
    let v = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, v)
}

/// Number of singular values above `rel_tol * sigma_max` (list sorted descending).
pub(crate) fn numerical_rank(sigma: &[f64], rel_tol: f64) -> usize {
    let smax = sigma.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    sigma.iter().take_while(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis (columns) of the orthogonal complement of a nonzero vector, built from one
/// Householder reflection.
pub(crate) fn orthogonal_complement(w: &DVector<f64>) -> DMatrix<f64> {
    let n = w.len();
    let norm = w.norm();
    assert!(norm > 0.0, "complement of the zero vector");
    let mut u = w.clone();
    let s = if w[0] >= 0.0 { 1.0 } else { -1.0 };
    u[0] += s * norm;
    let uu = u.norm_squared();
    // columns 1..n of H = I - 2 u u^T / |u|^2
    DMatrix::from_fn(n, n - 1, |r, c| {
        let j = c + 1;
        let delta = if r == j { 1.0 } else { 0.0 };
        delta - 2.0 * u[r] * u[j] / uu
    })
}

/// Minimum-norm least-squares solution of `a x = b`, discarding singular values below
/// `rel_tol * sigma_max`.
pub(crate) fn min_norm_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    min_norm_lstsq_scaled(a, b, rel_tol, 0.0)
}

/// As [`min_norm_lstsq`], with the cutoff `rel_tol * max(sigma_max, scale)`. Use when `a` is
/// derived from a larger operator of norm `scale` and may itself be pure rounding noise.
pub(crate) fn min_norm_lstsq_scaled(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rel_tol: f64,
    scale: f64,
) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.nrows() == 0 {
        return DVector::zeros(a.ncols());
    }
    let (u, v) = jacobi(a);
    let sigma: Vec<f64> = (0..a.ncols()).map(|k| u.column(k).norm()).collect();
    let smax = sigma.iter().copied().fold(scale, f64::max);
    let mut x = DVector::zeros(a.ncols());
    if smax == 0.0 {
        return x;
    }
    for (k, &s) in sigma.iter().enumerate() {
        if s > rel_tol * smax {
            let coef = u.column(k).dot(b) / (s * s);
            x.axpy(coef, &v.column(k), 1.0);
        }
    }
    x
}
