#![allow(dead_code)]

use rand::Rng;
use sbar::linalg::{CMatrix, CVector};
use sbar::seed::complex_gaussian;
use sbar::C64;

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = CMatrix::identity(n, n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].norm().total_cmp(&m[(j, col)].norm()))
            .unwrap();
        assert!(m[(pivot, col)].norm() > 0.0, "singular matrix in oracle");
        m.swap_rows(col, pivot);
        inv.swap_rows(col, pivot);
        let p = m[(col, col)];
        for j in 0..n {
            m[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = m[(i, col)];
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                let mv = m[(col, j)];
                let iv = inv[(col, j)];
                m[(i, j)] -= f * mv;
                inv[(i, j)] -= f * iv;
            }
        }
    }
    inv
}

/// `B Bᴴ / n + ridge I` with standard complex Gaussian `B`.
pub fn random_psd<R: Rng>(n: usize, ridge: f64, rng: &mut R) -> CMatrix {
    let b = CMatrix::from_fn(n, n, |_, _| complex_gaussian(rng, 1.0));
    let mut s = &b * b.adjoint() / C64::new(n as f64, 0.0);
    for i in 0..n {
        s[(i, i)] += C64::new(ridge, 0.0);
    }
    // exact Hermitian symmetry
    for i in 0..n {
        s[(i, i)].im = 0.0;
        for j in 0..i {
            s[(i, j)] = s[(j, i)].conj();
        }
    }
    s
}

pub fn random_vector<R: Rng>(n: usize, rng: &mut R) -> CVector {
    CVector::from_fn(n, |_, _| complex_gaussian(rng, 1.0))
}

/// Conditions `h ~ CN(0, Σ)` on `y = h(Ω) + CN(0, σ² I)` through the joint
/// covariance of `(h, y)`.
pub fn dense_condition(sigma: &CMatrix, omega: &[usize], y: &CVector, noise: f64) -> (CVector, CMatrix) {
    let n = sigma.nrows();
    let k = omega.len();
    if k == 0 {
        return (CVector::zeros(n), sigma.clone());
    }
    let cross = CMatrix::from_fn(n, k, |i, j| sigma[(i, omega[j])]);
    let mut yy = CMatrix::from_fn(k, k, |i, j| sigma[(omega[i], omega[j])]);
    for i in 0..k {
        yy[(i, i)] += C64::new(noise, 0.0);
    }
    let yy_inv = invert(&yy);
    let gain = &cross * yy_inv;
    (&gain * y, sigma - &gain * cross.adjoint())
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Distinct ports drawn uniformly.
pub fn random_ports<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k).into_vec()
}
