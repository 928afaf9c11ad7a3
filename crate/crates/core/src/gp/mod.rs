//! Multi-output Gaussian process surrogate of a vector field over the joint
//! input `z = (x, p)`.
//!
//! Each output component gets its own zero-mean GP with a squared-exponential
//! ARD kernel. Inputs are shifted to zero mean and scaled to unit range per
//! dimension, outputs to zero mean and unit variance; every derivative below is
//! taken in original units through these affine maps. The predictive
//! covariance across outputs is diagonal, so its Cholesky factor is
//! `diag(sigma_c)`.

pub mod kernel;
pub mod optimize;
pub mod sample;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_jittered;
use crate::systems::ObservationDataset;
pub use kernel::KernelHyperparams;
use kernel::{nlml_and_grad, pack, unpack, NoiseParam, Pairwise};

/// Standard deviations below this are treated as zero when differentiating.
pub const STD_FLOOR: f64 = 1e-12;

const LN_LENGTHSCALE: (f64, f64) = (-4.605_170_185_988_091, 4.605_170_185_988_091);
const LN_SIGNAL: (f64, f64) = (-9.210_340_371_976_182, 9.210_340_371_976_182);
const LN_NOISE: (f64, f64) = (-10.0 * std::f64::consts::LN_10, std::f64::consts::LN_10);

/// Observation noise treatment during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseSpec {
    /// Known standard deviation in original units; the noise variance is fixed.
    Known(f64),
    Learned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub n_starts: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub noise: NoiseSpec,
    /// Extra starting points per output component (normalized units), tried
    /// after the random starts; typically the previous fit.
    pub warm_start: Option<Vec<KernelHyperparams>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 5,
            max_iter: 200,
            seed: 0,
            noise: NoiseSpec::Learned,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_center: Vec<f64>,
    pub input_range: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_scale: Vec<f64>,
}

impl Normalization {
    pub fn input(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.input_center.iter().zip(&self.input_range))
            .map(|(v, (c, r))| (v - c) / r)
            .collect()
    }
}

/// Log marginal likelihood before and after local optimization from one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartRecord {
    pub initial_lml: f64,
    pub final_lml: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub starts: Vec<StartRecord>,
    pub chosen: usize,
    pub lml: f64,
}

#[derive(Debug, Clone)]
struct OutputModel {
    hyper: KernelHyperparams,
    l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Gaussian predictive distribution of the vector field at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDist {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `B` with `B B^T = cov`.
    pub chol: DMatrix<f64>,
}

/// Gradient of the predictive standard deviation, `n x (n + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StdGradient {
    pub grad: DMatrix<f64>,
    /// Components whose standard deviation fell below [`STD_FLOOR`]; their
    /// rows are zero.
    pub floored: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detail {
    /// Mean and mean Jacobian only.
    MeanJac,
    /// Adds second mean derivatives, variances and standard-deviation gradients.
    Full,
}

/// Everything the downstream propagation needs at one input, in original
/// units. Matrices are indexed `(output, input)`.
#[derive(Debug, Clone)]
pub struct LocalEval {
    pub mean: DVector<f64>,
    pub jac: DMatrix<f64>,
    /// Per output, `(n + 1) x (n + 1)`; empty at [`Detail::MeanJac`].
    pub hess: Vec<DMatrix<f64>>,
    pub std: DVector<f64>,
    pub std_grad: DMatrix<f64>,
    pub std_floor: Vec<bool>,
}

impl LocalEval {
    pub fn variance(&self) -> DVector<f64> {
        self.std.map(|s| s * s)
    }
}

/// Fitted, immutable multi-output surrogate.
#[derive(Debug, Clone)]
pub struct TrainedSurrogate {
    n_state: usize,
    norm: Normalization,
    /// Normalized training inputs, `N x (n + 1)`.
    x: DMatrix<f64>,
    raw_inputs: DMatrix<f64>,
    raw_targets: DMatrix<f64>,
    outputs: Vec<OutputModel>,
    uncertainty_scale: f64,
    reports: Vec<FitReport>,
}

fn normalization(inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Normalization {
    let n = inputs.nrows() as f64;
    let mut input_center = Vec::new();
    let mut input_range = Vec::new();
    for col in inputs.column_iter() {
        input_center.push(col.sum() / n);
        let r = col.max() - col.min();
        input_range.push(if r > 0.0 { r } else { 1.0 });
    }
    let mut output_mean = Vec::new();
    let mut output_scale = Vec::new();
    for col in targets.column_iter() {
        let m = col.sum() / n;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let s = var.sqrt();
        output_mean.push(m);
        output_scale.push(if s > 1e-12 * m.abs().max(1.0) { s } else { 1.0 });
    }
    Normalization {
        input_center,
        input_range,
        output_mean,
        output_scale,
    }
}

fn check_duplicates(x: &DMatrix<f64>, targets: &DMatrix<f64>, noiseless: bool) -> Result<()> {
    if !noiseless {
        return Ok(());
    }
    let n = x.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = (x.row(i) - x.row(j)).norm();
            if dist < 1e-12 {
                let conflict = (0..targets.ncols()).any(|c| {
                    let (a, b) = (targets[(i, c)], targets[(j, c)]);
                    (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs()))
                });
                if conflict {
                    return Err(Error::DegenerateDataset(format!(
                        "observations {i} and {j} share an input but disagree, with zero noise"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn build_output(pw: &Pairwise, y: &DVector<f64>, hyper: KernelHyperparams) -> Result<OutputModel> {
    let n = pw.n();
    let mut k = pw.correlation(&hyper.lengthscales) * hyper.signal_variance;
    for i in 0..n {
        k[(i, i)] += hyper.noise_variance;
    }
    let (chol, jitter) = cholesky_jittered(&k)?;
    let alpha = chol.solve(y);
    Ok(OutputModel {
        hyper,
        l: chol.l(),
        alpha,
        jitter,
    })
}

fn noise_param(noise: NoiseSpec, scale: f64) -> NoiseParam {
    match noise {
        NoiseSpec::Known(sigma) => NoiseParam::Fixed((sigma / scale).powi(2)),
        NoiseSpec::Learned => NoiseParam::Learned,
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo.ln() + u * (hi.ln() - lo.ln())
}

/// Fits one GP per output component by maximizing the log marginal likelihood
/// from several starts.
pub fn fit(data: &ObservationDataset, opts: &FitOptions) -> Result<TrainedSurrogate> {
    if data.len() < 2 {
        return Err(Error::DegenerateDataset(format!(
            "need at least two observations, got {}",
            data.len()
        )));
    }
    if let NoiseSpec::Known(s) = opts.noise {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidInput(format!("invalid noise level {s}")));
        }
    }
    let raw_inputs = data.inputs();
    let raw_targets = data.targets();
    let norm = normalization(&raw_inputs, &raw_targets);
    let x = normalize_inputs(&raw_inputs, &norm);
    check_duplicates(&x, &raw_targets, opts.noise == NoiseSpec::Known(0.0))?;
    let pw = Pairwise::new(&x);
    let dim = x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut outputs = Vec::new();
    let mut reports = Vec::new();
    for c in 0..raw_targets.ncols() {
        let y = normalized_target(&raw_targets, &norm, c);
        let noise = noise_param(opts.noise, norm.output_scale[c]);
        let mut lo = vec![LN_SIGNAL.0];
        let mut hi = vec![LN_SIGNAL.1];
        lo.extend(std::iter::repeat_n(LN_LENGTHSCALE.0, dim));
        hi.extend(std::iter::repeat_n(LN_LENGTHSCALE.1, dim));
        if noise == NoiseParam::Learned {
            lo.push(LN_NOISE.0);
            hi.push(LN_NOISE.1);
        }
        let mut starts: Vec<Vec<f64>> = (0..opts.n_starts)
            .map(|_| {
                let mut t = vec![log_uniform(&mut rng, 0.1, 10.0)];
                for _ in 0..dim {
                    t.push(log_uniform(&mut rng, 0.05, 5.0));
                }
                if noise == NoiseParam::Learned {
                    t.push(log_uniform(&mut rng, 1e-6, 1e-2));
                }
                t
            })
            .collect();
        if let Some(ws) = opts.warm_start.as_ref().and_then(|w| w.get(c)) {
            if ws.is_valid() && ws.lengthscales.len() == dim {
                let mut t = pack(ws, noise);
                for (i, v) in t.iter_mut().enumerate() {
                    *v = v.clamp(lo[i], hi[i]);
                }
                starts.push(t);
            }
        }
        let mut records = Vec::new();
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for (idx, start) in starts.iter().enumerate() {
            let objective = |t: &[f64]| nlml_and_grad(&pw, &y, t, noise);
            let initial = objective(start).map_or(f64::NEG_INFINITY, |(v, _)| -v);
            let res = optimize::minimize_box(objective, start, &lo, &hi, opts.max_iter);
            let (theta, final_lml) = match res {
                Some(r) => (r.x, -r.value),
                None => (start.clone(), f64::NEG_INFINITY),
            };
            records.push(StartRecord {
                initial_lml: initial,
                final_lml,
            });
            if final_lml.is_finite() && best.as_ref().is_none_or(|b| final_lml > b.2) {
                best = Some((idx, theta, final_lml));
            }
        }
        let Some((chosen, theta, lml)) = best else {
            let hyper = unpack(&starts[0], dim, noise);
            let mut k = pw.correlation(&hyper.lengthscales) * hyper.signal_variance;
            for i in 0..k.nrows() {
                k[(i, i)] += hyper.noise_variance;
            }
            return Err(Error::CholeskyFailure {
                condition_estimate: crate::linalg::symmetric_condition(&k),
            });
        };
        outputs.push(build_output(&pw, &y, unpack(&theta, dim, noise))?);
        reports.push(FitReport {
            starts: records,
            chosen,
            lml,
        });
    }
    Ok(TrainedSurrogate {
        n_state: raw_inputs.ncols() - 1,
        norm,
        x,
        raw_inputs,
        raw_targets,
        outputs,
        uncertainty_scale: 1.0,
        reports,
    })
}

fn normalize_inputs(raw: &DMatrix<f64>, norm: &Normalization) -> DMatrix<f64> {
    DMatrix::from_fn(raw.nrows(), raw.ncols(), |i, a| {
        (raw[(i, a)] - norm.input_center[a]) / norm.input_range[a]
    })
}

fn normalized_target(raw: &DMatrix<f64>, norm: &Normalization, c: usize) -> DVector<f64> {
    DVector::from_fn(raw.nrows(), |i, _| {
        (raw[(i, c)] - norm.output_mean[c]) / norm.output_scale[c]
    })
}

#[derive(Serialize, Deserialize)]
struct SurrogateDump {
    hyperparams: Vec<KernelHyperparams>,
    normalization: Normalization,
    train_inputs: Vec<Vec<f64>>,
    train_targets: Vec<Vec<f64>>,
    uncertainty_scale: f64,
}

impl TrainedSurrogate {
    /// Conditions on `data` at given hyperparameters (normalized units) and the
    /// normalization implied by `data`, without optimizing.
    pub fn with_hyperparams(
        data: &ObservationDataset,
        hypers: Vec<KernelHyperparams>,
    ) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::DegenerateDataset(
                "need at least two observations".into(),
            ));
        }
        let raw_inputs = data.inputs();
        let raw_targets = data.targets();
        let norm = normalization(&raw_inputs, &raw_targets);
        Self::assemble(raw_inputs, raw_targets, norm, hypers, 1.0)
    }

    fn assemble(
        raw_inputs: DMatrix<f64>,
        raw_targets: DMatrix<f64>,
        norm: Normalization,
        hypers: Vec<KernelHyperparams>,
        uncertainty_scale: f64,
    ) -> Result<Self> {
        if hypers.len() != raw_targets.ncols() {
            return Err(Error::DimensionMismatch {
                what: "hyperparameter sets",
                expected: raw_targets.ncols(),
                got: hypers.len(),
            });
        }
        let x = normalize_inputs(&raw_inputs, &norm);
        if let Some(h) = hypers
            .iter()
            .find(|h| !h.is_valid() || h.lengthscales.len() != x.ncols())
        {
            return Err(Error::InvalidInput(format!(
                "invalid hyperparameters {h:?}"
            )));
        }
        let pw = Pairwise::new(&x);
        let outputs = hypers
            .into_iter()
            .enumerate()
            .map(|(c, h)| build_output(&pw, &normalized_target(&raw_targets, &norm, c), h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_state: raw_inputs.ncols() - 1,
            norm,
            x,
            raw_inputs,
            raw_targets,
            outputs,
            uncertainty_scale,
            reports: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let dump = SurrogateDump {
            hyperparams: self.hyperparams(),
            normalization: self.norm.clone(),
            train_inputs: self
                .raw_inputs
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            train_targets: self
                .raw_targets
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            uncertainty_scale: self.uncertainty_scale,
        };
        Ok(serde_json::to_string_pretty(&dump)?)
    }

    /// Restores a dumped model; the Cholesky factors are recomputed.
    pub fn from_json(text: &str) -> Result<Self> {
        let d: SurrogateDump = serde_json::from_str(text)?;
        let rows = d.train_inputs.len();
        if rows < 2 || d.train_targets.len() != rows {
            return Err(Error::Parse("training set shape in model dump".into()));
        }
        let cols = d.train_inputs[0].len();
        let outs = d.train_targets[0].len();
        if d.train_inputs.iter().any(|r| r.len() != cols)
            || d.train_targets.iter().any(|r| r.len() != outs)
        {
            return Err(Error::Parse("ragged training set in model dump".into()));
        }
        let inputs = DMatrix::from_fn(rows, cols, |i, j| d.train_inputs[i][j]);
        let targets = DMatrix::from_fn(rows, outs, |i, j| d.train_targets[i][j]);
        Self::assemble(
            inputs,
            targets,
            d.normalization,
            d.hyperparams,
            d.uncertainty_scale,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.n_state
    }

    pub fn input_dim(&self) -> usize {
        self.n_state + 1
    }

    pub fn n_train(&self) -> usize {
        self.x.nrows()
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn hyperparams(&self) -> Vec<KernelHyperparams> {
        self.outputs.iter().map(|o| o.hyper.clone()).collect()
    }

    pub fn fit_reports(&self) -> &[FitReport] {
        &self.reports
    }

    pub fn jitter(&self) -> Vec<f64> {
        self.outputs.iter().map(|o| o.jitter).collect()
    }

    /// Lower Cholesky factor of the (jittered) training covariance of output
    /// `c`, in normalized units.
    pub fn cholesky_factor(&self, c: usize) -> &DMatrix<f64> {
        &self.outputs[c].l
    }

    /// Training covariance `K + sigma_n^2 I` of output `c`, normalized units,
    /// without jitter.
    pub fn training_covariance(&self, c: usize) -> DMatrix<f64> {
        let pw = Pairwise::new(&self.x);
        let h = &self.outputs[c].hyper;
        let mut k = pw.correlation(&h.lengthscales) * h.signal_variance;
        for i in 0..k.nrows() {
            k[(i, i)] += h.noise_variance;
        }
        k
    }

    /// Signal variance of output `c` in original units.
    pub fn signal_variance(&self, c: usize) -> f64 {
        self.outputs[c].hyper.signal_variance * self.norm.output_scale[c].powi(2)
    }

    /// Scale factor `t` applied to every predictive standard deviation
    /// (default 1). Used to study the small-uncertainty limit.
    pub fn with_uncertainty_scale(mut self, t: f64) -> Self {
        self.uncertainty_scale = t;
        self
    }

    pub fn uncertainty_scale(&self) -> f64 {
        self.uncertainty_scale
    }

    fn joint_input(&self, x: &[f64], p: f64) -> Result<Vec<f64>> {
        if x.len() != self.n_state {
            return Err(Error::DimensionMismatch {
                what: "state",
                expected: self.n_state,
                got: x.len(),
            });
        }
        let mut z = x.to_vec();
        z.push(p);
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                component: i,
                context: "surrogate input".into(),
            });
        }
        Ok(z)
    }

    /// Posterior mean and derivatives at the joint input `z`.
    pub fn local(&self, z: &[f64], detail: Detail) -> LocalEval {
        let d = self.input_dim();
        let n = self.n_state;
        let u = self.norm.input(z);
        let full = detail == Detail::Full;
        let mut mean = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, d);
        let mut hess = Vec::new();
        let mut std = DVector::zeros(n);
        let mut std_grad = DMatrix::zeros(n, d);
        let mut std_floor = vec![false; n];
        let ntr = self.x.nrows();
        let mut diff = DMatrix::zeros(ntr, d);
        for i in 0..ntr {
            for a in 0..d {
                diff[(i, a)] = u[a] - self.x[(i, a)];
            }
        }
        let t = self.uncertainty_scale;
        for (c, out) in self.outputs.iter().enumerate() {
            let h = &out.hyper;
            let inv_l2: Vec<f64> = h.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
            let k = DVector::from_fn(ntr, |i, _| {
                let r2: f64 = (0..d).map(|a| diff[(i, a)].powi(2) * inv_l2[a]).sum();
                h.signal_variance * (-0.5 * r2).exp()
            });
            let ka = k.component_mul(&out.alpha);
            let scale = self.norm.output_scale[c];
            let range = &self.norm.input_range;
            mean[c] = self.norm.output_mean[c] + scale * ka.sum();
            let mut g = vec![0.0; d];
            for a in 0..d {
                let s: f64 = (0..ntr).map(|i| ka[i] * diff[(i, a)]).sum();
                g[a] = -s * inv_l2[a];
                jac[(c, a)] = scale * g[a] / range[a];
            }
            if !full {
                continue;
            }
            let mut hc = DMatrix::zeros(d, d);
            for a in 0..d {
                for b in a..d {
                    let s: f64 = (0..ntr).map(|i| ka[i] * diff[(i, a)] * diff[(i, b)]).sum();
                    let mut v = s * inv_l2[a] * inv_l2[b];
                    if a == b {
                        v -= ka.sum() * inv_l2[a];
                    }
                    let v = scale * v / (range[a] * range[b]);
                    hc[(a, b)] = v;
                    hc[(b, a)] = v;
                }
            }
            hess.push(hc);
            let v = out
                .l
                .solve_lower_triangular(&k)
                .expect("Cholesky factor has a positive diagonal");
            let var_n = (h.signal_variance - v.norm_squared()).max(0.0);
            let sd = t * scale * var_n.sqrt();
            std[c] = sd;
            if sd < STD_FLOOR {
                std_floor[c] = true;
                continue;
            }
            let w = out
                .l
                .tr_solve_lower_triangular(&v)
                .expect("Cholesky factor has a positive diagonal");
            let kw = k.component_mul(&w);
            for a in 0..d {
                // d var / du_a = -2 sum_i dk_i/du_a w_i, dk_i/du_a = -k_i diff_ia / l_a^2.
                let s: f64 = (0..ntr).map(|i| kw[i] * diff[(i, a)]).sum();
                let dvar = 2.0 * s * inv_l2[a];
                std_grad[(c, a)] = t * scale * dvar / (2.0 * var_n.sqrt()) / range[a];
            }
        }
        LocalEval {
            mean,
            jac,
            hess,
            std,
            std_grad,
            std_floor,
        }
    }

    pub fn predict_mean(&self, x: &[f64], p: f64) -> Result<DVector<f64>> {
        Ok(self.local(&self.joint_input(x, p)?, Detail::MeanJac).mean)
    }

    pub fn predict(&self, x: &[f64], p: f64) -> Result<PredictiveDist> {
        let e = self.local(&self.joint_input(x, p)?, Detail::Full);
        let cov = DMatrix::from_diagonal(&e.variance());
        let chol = DMatrix::from_diagonal(&e.std);
        Ok(PredictiveDist {
            mean: e.mean,
            cov,
            chol,
        })
    }

    pub fn predict_batch(&self, points: &[(Vec<f64>, f64)]) -> Result<Vec<PredictiveDist>> {
        points.iter().map(|(x, p)| self.predict(x, *p)).collect()
    }

    /// `d mean_c / d z_a`, `n x (n + 1)`.
    pub fn predict_mean_jacobian(&self, x: &[f64], p: f64) -> Result<DMatrix<f64>> {
        Ok(self.local(&self.joint_input(x, p)?, Detail::MeanJac).jac)
    }

    /// Second derivatives of each mean component, `n` matrices of size
    /// `(n + 1) x (n + 1)`.
    pub fn predict_mean_mixed_second(&self, x: &[f64], p: f64) -> Result<Vec<DMatrix<f64>>> {
        Ok(self.local(&self.joint_input(x, p)?, Detail::Full).hess)
    }

    pub fn predict_std_gradient(&self, x: &[f64], p: f64) -> Result<StdGradient> {
        let e = self.local(&self.joint_input(x, p)?, Detail::Full);
        Ok(StdGradient {
            grad: e.std_grad,
            floored: e.std_floor,
        })
    }

    /// Sum of predictive variances over output components.
    pub fn total_variance(&self, z: &[f64]) -> f64 {
        self.local(z, Detail::Full).variance().sum()
    }

    /// Posterior mean (normalized) and covariance (normalized) of output `c`
    /// jointly over `points`, given as normalized inputs.
    pub(crate) fn joint_posterior_normalized(
        &self,
        c: usize,
        u: &[Vec<f64>],
    ) -> (DVector<f64>, DMatrix<f64>) {
        let out = &self.outputs[c];
        let h = &out.hyper;
        let m = u.len();
        let ntr = self.x.nrows();
        let train: Vec<Vec<f64>> = (0..ntr)
            .map(|i| self.x.row(i).iter().copied().collect())
            .collect();
        let ks = DMatrix::from_fn(ntr, m, |i, j| h.eval(&train[i], &u[j]));
        let kss = DMatrix::from_fn(m, m, |i, j| h.eval(&u[i], &u[j]));
        let mean = ks.transpose() * &out.alpha;
        let v = out
            .l
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a positive diagonal");
        let cov = kss - v.transpose() * v;
        (mean, cov)
    }
}

#[cfg(test)]
mod tests;
