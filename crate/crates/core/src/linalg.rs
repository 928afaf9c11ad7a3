//! Small dense linear-algebra helpers shared by the surrogate, the steady-state
//! solver and the uncertainty propagation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter of the first retry after a plain factorization fails.
pub const JITTER_START: f64 = 1e-12;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-6;

/// Cholesky factorization of a symmetric PSD matrix with escalating diagonal
/// jitter. A plain factorization is tried first; on failure the jitter,
/// relative to the mean diagonal entry, grows by a factor of ten from
/// [`JITTER_START`] up to [`JITTER_MAX`].
///
/// Returns the factor and the absolute jitter that was added.
pub fn cholesky_jittered(a: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if let Some(ch) = Cholesky::new(a.clone()) {
        return Ok((ch, 0.0));
    }
    let mean_diag = (a.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * mean_diag;
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            return Ok((ch, jitter));
        }
        rel *= 10.0;
    }
    Err(Error::CholeskyFailure {
        condition_estimate: symmetric_condition(a),
    })
}

/// Condition number of a symmetric matrix from its eigenvalues (infinite when
/// the smallest eigenvalue is not positive).
pub fn symmetric_condition(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigen();
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// 2-norm condition number of a general square matrix.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a square matrix, refusing matrices whose condition number
/// exceeds `max_condition`.
pub fn checked_inverse(a: &DMatrix<f64>, max_condition: f64) -> Result<DMatrix<f64>> {
    let condition = condition_number(a);
    if !(condition <= max_condition) {
        return Err(Error::SingularJacobian { condition });
    }
    a.clone()
        .try_inverse()
        .ok_or(Error::SingularJacobian { condition })
}

/// Solves `a x = b`, refusing matrices whose condition number exceeds
/// `max_condition`.
pub fn checked_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    max_condition: f64,
) -> Result<DVector<f64>> {
    let condition = condition_number(a);
    if !(condition <= max_condition) {
        return Err(Error::SingularJacobian { condition });
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or(Error::SingularJacobian { condition })
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
