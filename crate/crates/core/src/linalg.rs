//! Scalar helpers and dense complex kernels shared by the estimators.
//!
//! Complex Gaussians follow the circularly symmetric convention
//! `CN(x; mu, v) = exp(-|x - mu|^2 / v) / (pi v)`.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = nalgebra::DVector<C64>;

/// Probabilities handed to `logit` are kept at least this far from 0 and 1.
pub const PROB_FLOOR: f64 = 1e-12;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logit of a probability clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    (p / (1.0 - p)).ln()
}

/// `ln CN(x; mu, var)` for a scalar complex Gaussian.
#[inline]
pub fn ln_cn(x: C64, mu: C64, var: f64) -> f64 {
    -(PI * var).ln() - (x - mu).norm_sqr() / var
}

/// `ln CN(0; mu, var)`.
#[inline]
pub fn ln_cn_zero(mu: C64, var: f64) -> f64 {
    -(PI * var).ln() - mu.norm_sqr() / var
}

#[inline]
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn zgemm_into(a: &CMatrix, b: &CMatrix, c: &mut CMatrix) {
    let (m, k) = a.shape();
    let n = b.ncols();
    debug_assert_eq!(k, b.nrows());
    debug_assert_eq!(c.shape(), (m, n));
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(C64::new(0.0, 0.0));
        return;
    }
    // SAFETY: Complex<f64> is repr(C) {re, im}, layout-identical to [f64; 2].
    // All three matrices are contiguous column-major with the shapes checked
    // above, so every index the kernel touches is in bounds.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
}

/// `a * b`.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut c = CMatrix::zeros(a.nrows(), b.ncols());
    zgemm_into(a, b, &mut c);
    c
}

/// `a^H * b`.
pub fn matmul_adj(a: &CMatrix, b: &CMatrix) -> CMatrix {
    matmul(&a.adjoint(), b)
}

/// `a * b^H`.
pub fn matmul_by_adj(a: &CMatrix, b: &CMatrix) -> CMatrix {
    matmul(a, &b.adjoint())
}

/// Cholesky factor of a Hermitian positive-definite matrix, with a
/// conditioning diagnostic on failure.
pub fn hermitian_cholesky(k: CMatrix, what: &str) -> Result<Cholesky<C64, Dyn>> {
    let n = k.nrows();
    let diag_max = (0..n).map(|i| k[(i, i)].re).fold(0.0_f64, f64::max);
    let diag_min = (0..n).map(|i| k[(i, i)].re).fold(f64::INFINITY, f64::min);
    if !k.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::IllConditioned(format!(
            "{what} ({n}x{n}) has non-finite entries"
        )));
    }
    let indefinite = || {
        Error::IllConditioned(format!(
            "{what} ({n}x{n}) is not positive definite; diagonal range [{diag_min:e}, {diag_max:e}]"
        ))
    };
    // The complex factorization takes complex square roots of the pivots, so
    // a negative pivot shows up as an imaginary diagonal instead of a failure.
    let chol = Cholesky::new(k).ok_or_else(indefinite)?;
    let l = chol.l_dirty();
    let pivots_ok = (0..n).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-10 * d.re
    });
    if pivots_ok {
        Ok(chol)
    } else {
        Err(indefinite())
    }
}

/// Replace `m` by `(m + m^H) / 2` and zero the imaginary part of the diagonal.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)].im = 0.0;
        for i in (j + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_logit_roundtrip() {
        for &x in &[-25.0, -2.5, 0.0, 0.7, 12.0] {
            assert!((logit(sigmoid(x)) - x).abs() < 1e-8);
        }
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(logit(0.0).is_finite() && logit(1.0).is_finite());
    }

    #[test]
    fn gaussian_normalizes_at_origin() {
        // CN(0; 0, 1) = 1/pi
        assert!((ln_cn_zero(C64::new(0.0, 0.0), 1.0) + PI.ln()).abs() < 1e-15);
        let x = C64::new(0.3, -1.2);
        assert_eq!(ln_cn(x, x, 2.0), -(2.0 * PI).ln());
    }

    #[test]
    fn zgemm_matches_naive_product() {
        let a = CMatrix::from_fn(5, 3, |i, j| C64::new(i as f64 - j as f64, 0.5 * (i * j) as f64));
        let b = CMatrix::from_fn(3, 4, |i, j| C64::new((i + 2 * j) as f64, -(i as f64)));
        let fast = matmul(&a, &b);
        let slow = &a * &b;
        assert!((fast - slow).norm() < 1e-12);
        let ah = matmul_adj(&a, &a);
        assert!((ah - a.adjoint() * &a).norm() < 1e-12);
    }

    #[test]
    fn cholesky_reports_indefinite() {
        let k = CMatrix::from_diagonal_element(2, 2, C64::new(-1.0, 0.0));
        let err = hermitian_cholesky(k, "test").unwrap_err();
        assert!(err.to_string().contains("not positive definite"));
    }
}
