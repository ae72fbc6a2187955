//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, QR, SVD};

use crate::{Result, SbarError, C64};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest `|a(i,j) - conj(a(j,i))|`.
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Returns `(a + a^H) / 2` with an exactly real diagonal.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let mut out = a.clone();
    for j in 0..n {
        out[(j, j)] = C64::new(a[(j, j)].re, 0.0);
        for i in 0..j {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            out[(i, j)] = v;
            out[(j, i)] = v.conj();
        }
    }
    out
}

fn is_real(a: &CMatrix) -> bool {
    a.iter().all(|z| z.im == 0.0)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = if is_real(a) {
        let re = a.map(|z| z.re);
        SymmetricEigen::new(re).eigenvalues.iter().copied().collect()
    } else {
        SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect()
    };
    vals.sort_by(|x, y| x.total_cmp(y));
    vals
}

/// Eigen-decomposition `a = V diag(vals) V^H` of a Hermitian matrix.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    if is_real(a) {
        let eig = SymmetricEigen::new(a.map(|z| z.re));
        let vecs = eig.eigenvectors.map(|x| C64::new(x, 0.0));
        (eig.eigenvalues.iter().copied().collect(), vecs)
    } else {
        let eig = SymmetricEigen::new(a.clone());
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    }
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_spectral_norm(a: &CMatrix) -> f64 {
    let vals = hermitian_eigenvalues(a);
    match (vals.first(), vals.last()) {
        (Some(lo), Some(hi)) => lo.abs().max(hi.abs()),
        _ => 0.0,
    }
}

/// 2-norm condition number of a Hermitian matrix (infinite when singular).
pub fn hermitian_condition(a: &CMatrix) -> f64 {
    let vals = hermitian_eigenvalues(a);
    let hi = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lo = vals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Condition number above which a Cholesky factor is treated as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// Cholesky factorisation of a Hermitian positive-definite matrix.
///
/// Fails when the factorisation breaks down or when the squared pivot ratio
/// suggests the matrix is numerically singular.
pub fn spd_factor(a: CMatrix, context: &str) -> Result<Cholesky<C64, Dyn>> {
    let backup = a.clone();
    match Cholesky::new(a) {
        Some(chol) => {
            let l = chol.l_dirty();
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for i in 0..l.nrows() {
                let d = l[(i, i)].re;
                lo = lo.min(d);
                hi = hi.max(d);
            }
            let estimate = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
            if !estimate.is_finite() || estimate > MAX_CONDITION {
                return Err(SbarError::numerical(context, estimate));
            }
            Ok(chol)
        }
        None => Err(SbarError::numerical(context, hermitian_condition(&backup))),
    }
}

/// Rows `rows` and columns `cols` of `a`.
pub fn submatrix(a: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Rows `rows` of `a`, all columns.
pub fn select_rows(a: &CMatrix, rows: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

pub fn trace(a: &CMatrix) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Pairwise summation; the result does not depend on thread scheduling when the
/// input order is fixed.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Least-squares solution of `a x ≈ b`.
///
/// Householder QR when `a` has full column rank; otherwise the minimum-norm
/// solution from an SVD. The flag reports whether the fallback was taken.
pub fn least_squares(a: &CMatrix, b: &CVector) -> (CVector, bool) {
    let (m, n) = a.shape();
    if n == 0 {
        return (CVector::zeros(0), false);
    }
    if m >= n {
        let qr = QR::new(a.clone());
        let r = qr.r();
        let diag: Vec<f64> = (0..n).map(|i| r[(i, i)].norm()).collect();
        let hi = diag.iter().cloned().fold(0.0, f64::max);
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if hi > 0.0 && lo > 1e-10 * hi {
            let qtb = qr.q().adjoint() * b;
            if let Some(x) = r.solve_upper_triangular(&qtb) {
                return (x, false);
            }
        }
    }
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = 1e-12 * smax * (m.max(n) as f64);
    let rank_deficient = m < n || svd.singular_values.iter().any(|&s| s <= eps);
    let x = if smax == 0.0 {
        CVector::zeros(n)
    } else {
        svd.solve(b, eps).unwrap_or_else(|_| CVector::zeros(n))
    };
    (x, rank_deficient)
}
