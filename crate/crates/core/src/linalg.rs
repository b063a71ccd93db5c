//! Small dense symmetric-positive-definite solves for d x d systems.
//!
//! All matrices this crate inverts have the form lambda*I + V^T V with
//! lambda > 0, so they are symmetric positive definite by construction
//! and Cholesky factorization applies. Dimensions are the latent factor
//! count (tens at most); no external linear-algebra backend is needed.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower-triangular Cholesky factor L with A = L L^T.
///
/// Returns None when A is not positive definite (a non-positive pivot),
/// which callers treat as a programming error for lambda > 0.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Solve A x = b given the Cholesky factor L of A.
pub fn chol_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    debug_assert_eq!(n, b.len());
    // Forward: L y = b
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    // Backward: L^T x = y
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// A^{-1} from the Cholesky factor L, by solving for each basis vector.
pub fn chol_inverse(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    let mut e = Array1::<f64>::zeros(n);
    for j in 0..n {
        e.fill(0.0);
        e[j] = 1.0;
        let col = chol_solve(l, e.view());
        inv.column_mut(j).assign(&col);
    }
    // Symmetrize to kill round-off asymmetry.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (inv[[i, j]] + inv[[j, i]]);
            inv[[i, j]] = v;
            inv[[j, i]] = v;
        }
    }
    inv
}

/// ln det A from the Cholesky factor L of A.
pub fn chol_log_det(l: &Array2<f64>) -> f64 {
    (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>() * 2.0
}

/// lambda*I + V^T V for a row-per-observation matrix V.
pub fn regularized_gram(v: ArrayView2<f64>, lambda: f64) -> Array2<f64> {
    let d = v.ncols();
    let mut g = v.t().dot(&v);
    for i in 0..d {
        g[[i, i]] += lambda;
    }
    g
}
