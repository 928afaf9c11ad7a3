//! Joint posterior draws of the surrogate over a finite set of inputs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::TrainedSurrogate;
use crate::error::{Error, Result};

/// Precomputed joint posterior over `M` inputs; each draw is an `M x n`
/// matrix, one column per output component.
#[derive(Debug, Clone)]
pub struct RealizationSampler {
    mean: DMatrix<f64>,
    factors: Vec<DMatrix<f64>>,
}

impl RealizationSampler {
    /// `points` are joint inputs `(x, p)` in original units.
    pub fn new(gp: &TrainedSurrogate, points: &[Vec<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("no points to sample at".into()));
        }
        if let Some(p) = points.iter().find(|p| p.len() != gp.input_dim()) {
            return Err(Error::DimensionMismatch {
                what: "sample point",
                expected: gp.input_dim(),
                got: p.len(),
            });
        }
        let norm = gp.normalization();
        let u: Vec<Vec<f64>> = points.iter().map(|z| norm.input(z)).collect();
        let n = gp.state_dim();
        let m = points.len();
        let t = gp.uncertainty_scale();
        let mut mean = DMatrix::zeros(m, n);
        let mut factors = Vec::with_capacity(n);
        for c in 0..n {
            let (mu, cov) = gp.joint_posterior_normalized(c, &u);
            let scale = norm.output_scale[c];
            for j in 0..m {
                mean[(j, c)] = norm.output_mean[c] + scale * mu[j];
            }
            let cov = (&cov + cov.transpose()) * 0.5;
            let sig = gp.outputs[c].hyper.signal_variance;
            let factor = if cov.iter().all(|v| v.abs() <= 1e-300 * sig) {
                DMatrix::zeros(m, m)
            } else {
                let (ch, _) = cholesky_jittered_floor(&cov, sig)?;
                ch
            };
            factors.push(factor * (t * scale));
        }
        Ok(Self { mean, factors })
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let (m, n) = self.mean.shape();
        let mut out = self.mean.clone();
        for c in 0..n {
            let xi = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let d = &self.factors[c] * xi;
            for j in 0..m {
                out[(j, c)] += d[j];
            }
        }
        out
    }
}

/// Cholesky of a posterior covariance whose diagonal can be tiny compared with
/// the prior variance. Jitter follows the usual ladder but is referenced to
/// `max(mean diagonal, 1e-4 prior variance)`, which sits above the rounding
/// level of `K** - V^T V`.
fn cholesky_jittered_floor(cov: &DMatrix<f64>, prior_var: f64) -> Result<(DMatrix<f64>, f64)> {
    let m = cov.nrows();
    let reference = (cov.trace() / m as f64).max(1e-4 * prior_var);
    let mut rel = crate::linalg::JITTER_START;
    while rel <= crate::linalg::JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * reference;
        let mut a = cov.clone();
        for i in 0..m {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = nalgebra::Cholesky::new(a) {
            return Ok((ch.l(), jitter));
        }
        rel *= 10.0;
    }
    Err(Error::CholeskyFailure {
        condition_estimate: crate::linalg::symmetric_condition(cov),
    })
}

/// One joint posterior draw over `points`, deterministic per `seed`.
pub fn sample_realization(
    gp: &TrainedSurrogate,
    points: &[Vec<f64>],
    seed: u64,
) -> Result<DMatrix<f64>> {
    let sampler = RealizationSampler::new(gp, points)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sampler.draw(&mut rng))
}
