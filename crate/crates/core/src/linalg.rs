//! Small dense matrix helpers: exponential, induced 2-norm, spectral abscissa.

use nalgebra::DMatrix;

use crate::{Error, Result};

const PADE_DEGREE: usize = 6;

fn is_diagonal(a: &DMatrix<f64>) -> bool {
    a.iter().enumerate().all(|(idx, v)| {
        let (i, j) = (idx % a.nrows(), idx / a.nrows());
        i == j || *v == 0.0
    })
}

/// `e^{A}` by scaling and squaring with a diagonal Padé approximant.
/// Diagonal matrices are exponentiated entrywise.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if is_diagonal(a) {
        return DMatrix::from_diagonal(&a.diagonal().map(f64::exp));
    }
    let norm_inf = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm_inf > 0.5 {
        (norm_inf / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = a / 2f64.powi(squarings);

    let mut numer = DMatrix::<f64>::identity(n, n);
    let mut denom = DMatrix::<f64>::identity(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut c = 1.0;
    let q = PADE_DEGREE as f64;
    for k in 1..=PADE_DEGREE {
        let kf = k as f64;
        c *= (q - kf + 1.0) / (kf * (2.0 * q - kf + 1.0));
        power = &power * &x;
        numer += &power * c;
        if k % 2 == 0 {
            denom += &power * c;
        } else {
            denom -= &power * c;
        }
    }
    let mut result = denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is nonsingular for ‖X‖ ≤ 1/2");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Norm induced by the Euclidean vector norm (largest singular value).
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if is_diagonal(a) {
        return a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    a.singular_values().iter().fold(0.0f64, |m, v| m.max(*v))
}

/// Largest real part of the eigenvalues.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    if is_diagonal(a) {
        return a
            .diagonal()
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    }
    a.complex_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |m, z| m.max(z.re))
}

/// Frobenius norm of the strictly upper part of a real Schur form of `a`.
///
/// With `A = Q (D + N) Qᵀ`, `‖e^{At}‖ ≤ e^{αt} Σ_{k<n} (‖N‖ t)^k / k!` where
/// `α` is the spectral abscissa. Only matrices with a real spectrum are
/// supported.
pub fn schur_departure(a: &DMatrix<f64>) -> Result<f64> {
    if is_diagonal(a) {
        return Ok(0.0);
    }
    let n = a.nrows();
    let (_, t) = a.clone().schur().unpack();
    let scale = t
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for i in 1..n {
        if t[(i, i - 1)].abs() > 1e-12 * scale {
            return Err(Error::InvalidDesign(
                "closed-loop matrices with complex eigenvalues are not supported".into(),
            ));
        }
    }
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..j {
            sum += t[(i, j)] * t[(i, j)];
        }
    }
    Ok(sum.sqrt())
}
