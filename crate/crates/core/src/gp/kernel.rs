//! Squared-exponential ARD kernel and the negative log marginal likelihood with
//! its gradient in log-hyperparameter space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::cholesky_jittered;

/// Hyperparameters whose covariance is worse conditioned than this are
/// rejected; beyond it interpolation of noiseless data loses accuracy.
pub(crate) const MAX_CONDITION: f64 = 1e8;

/// Kernel hyperparameters in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyperparams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelHyperparams {
    pub fn is_valid(&self) -> bool {
        self.signal_variance > 0.0
            && self.signal_variance.is_finite()
            && self.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite())
            && self.noise_variance >= 0.0
            && self.noise_variance.is_finite()
    }

    /// `s^2 exp(-|a - b|^2_l / 2)`.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// Squared coordinate differences of the training inputs, one `N x N` matrix
/// per input dimension.
pub(crate) struct Pairwise {
    pub sq: Vec<DMatrix<f64>>,
}

impl Pairwise {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        let sq = (0..x.ncols())
            .map(|a| DMatrix::from_fn(n, n, |i, j| (x[(i, a)] - x[(j, a)]).powi(2)))
            .collect();
        Self { sq }
    }

    pub fn n(&self) -> usize {
        self.sq[0].nrows()
    }

    /// Noise-free correlation matrix `exp(-sum_a D_a / (2 l_a^2))`.
    pub fn correlation(&self, lengthscales: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let mut r2 = DMatrix::zeros(n, n);
        for (d, l) in self.sq.iter().zip(lengthscales) {
            r2 += d / (l * l);
        }
        r2.map(|v| (-0.5 * v).exp())
    }
}

/// How the noise variance enters the likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum NoiseParam {
    Fixed(f64),
    /// Optimized; the last entry of the parameter vector is its logarithm.
    Learned,
}

/// Parameter vector layout: `[ln s^2, ln l_1, ..., ln l_d, (ln sigma_n^2)]`.
pub(crate) fn unpack(theta: &[f64], dim: usize, noise: NoiseParam) -> KernelHyperparams {
    KernelHyperparams {
        signal_variance: theta[0].exp(),
        lengthscales: theta[1..=dim].iter().map(|v| v.exp()).collect(),
        noise_variance: match noise {
            NoiseParam::Fixed(v) => v,
            NoiseParam::Learned => theta[dim + 1].exp(),
        },
    }
}

pub(crate) fn pack(h: &KernelHyperparams, noise: NoiseParam) -> Vec<f64> {
    let mut t = vec![h.signal_variance.ln()];
    t.extend(h.lengthscales.iter().map(|l| l.ln()));
    if noise == NoiseParam::Learned {
        t.push(h.noise_variance.max(1e-300).ln());
    }
    t
}

/// Negative log marginal likelihood and its gradient with respect to `theta`.
/// `None` when the covariance cannot be factorized.
pub(crate) fn nlml_and_grad(
    pw: &Pairwise,
    y: &DVector<f64>,
    theta: &[f64],
    noise: NoiseParam,
) -> Option<(f64, Vec<f64>)> {
    let dim = pw.sq.len();
    let h = unpack(theta, dim, noise);
    let n = pw.n();
    let kf = pw.correlation(&h.lengthscales) * h.signal_variance;
    let mut k = kf.clone();
    for i in 0..n {
        k[(i, i)] += h.noise_variance;
    }
    let (chol, _) = cholesky_jittered(&k).ok()?;
    let alpha = chol.solve(y);
    let l = chol.l_dirty();
    let (dmin, dmax) = (0..n).fold((f64::INFINITY, 0.0_f64), |(a, b), i| {
        (a.min(l[(i, i)]), b.max(l[(i, i)]))
    });
    if (dmax / dmin).powi(2) > MAX_CONDITION {
        return None;
    }
    let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
    let value = 0.5 * y.dot(&alpha) + logdet + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if !value.is_finite() {
        return None;
    }
    let mut w = chol.inverse();
    w -= &alpha * alpha.transpose();
    let wk = w.component_mul(&kf);
    let mut grad = Vec::with_capacity(theta.len());
    grad.push(0.5 * wk.sum());
    for (d, l) in pw.sq.iter().zip(&h.lengthscales) {
        grad.push(0.5 * wk.dot(d) / (l * l));
    }
    if noise == NoiseParam::Learned {
        grad.push(0.5 * h.noise_variance * w.trace());
    }
    Some((value, grad))
}
