//! Monte Carlo acquisition: squared-criticality statistics over posterior
//! realizations, each solved for its own steady state.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{criticality_of_jacobian, AcqMethod, AcquisitionEvaluation, AcquisitionSpec};
use crate::error::{Error, Result};
use crate::gp::sample::RealizationSampler;
use crate::gp::{Detail, TrainedSurrogate};
use crate::seeds::derive_seed;
use crate::steady::{solve_root, MeanModel, NewtonOptions, RootFrame, SteadyStateDist};
use crate::systems::Interval;
use crate::uq::ScalarDist;

/// Nodes per stencil axis.
pub const STENCIL_NODES: usize = 7;
/// Stencil spacing as a fraction of the shortest lengthscale per axis.
pub const STENCIL_STEP: f64 = 0.25;
/// Largest number of stencil axes for joint draws.
pub const MAX_STENCIL_DIM: usize = 3;

/// How posterior realizations are represented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RealizationModel {
    /// Posterior mean plus a joint posterior deviation drawn on a local
    /// tensor stencil around the mean root and interpolated by tensor
    /// polynomials. Falls back to `Coherent` when the
    /// stencil would need more than three axes.
    #[default]
    JointStencil,
    /// `f_r = mean + diag(sigma) theta` with one standard normal `theta` per
    /// realization: the locally coherent model underlying the closed-form
    /// propagation.
    Coherent,
}

/// Lagrange basis on the nodes `-3..=3` and its derivative at `t`.
fn lagrange(t: f64) -> ([f64; STENCIL_NODES], [f64; STENCIL_NODES]) {
    let half = (STENCIL_NODES / 2) as f64;
    let node = |k: usize| k as f64 - half;
    let mut l = [0.0; STENCIL_NODES];
    let mut dl = [0.0; STENCIL_NODES];
    for k in 0..STENCIL_NODES {
        let mut denom = 1.0;
        for m in 0..STENCIL_NODES {
            if m != k {
                denom *= node(k) - node(m);
            }
        }
        let mut prod = 1.0;
        for m in 0..STENCIL_NODES {
            if m != k {
                prod *= t - node(m);
            }
        }
        l[k] = prod / denom;
        let mut d = 0.0;
        for j in 0..STENCIL_NODES {
            if j == k {
                continue;
            }
            let mut p = 1.0;
            for m in 0..STENCIL_NODES {
                if m != k && m != j {
                    p *= t - node(m);
                }
            }
            d += p;
        }
        dl[k] = d / denom;
    }
    (l, dl)
}

/// Tensor stencil over a subset of the joint input coordinates.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub center: Vec<f64>,
    /// Joint-input indices spanned by the stencil.
    pub axes: Vec<usize>,
    pub steps: Vec<f64>,
}

impl Stencil {
    /// Stencil around `center` over `axes` with spacing a fixed fraction of
    /// the shortest fitted lengthscale on each axis.
    pub fn around(gp: &TrainedSurrogate, center: &[f64], axes: Vec<usize>) -> Self {
        let range = &gp.normalization().input_range;
        let hypers = gp.hyperparams();
        let steps = axes
            .iter()
            .map(|&a| {
                let l = hypers
                    .iter()
                    .map(|h| h.lengthscales[a])
                    .fold(f64::INFINITY, f64::min);
                STENCIL_STEP * l * range[a]
            })
            .collect();
        Self {
            center: center.to_vec(),
            axes,
            steps,
        }
    }

    pub fn len(&self) -> usize {
        STENCIL_NODES.pow(self.axes.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        (0..self.axes.len())
            .map(|_| {
                let k = idx % STENCIL_NODES;
                idx /= STENCIL_NODES;
                k
            })
            .collect()
    }

    /// Joint inputs of all nodes, first axis fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let half = (STENCIL_NODES / 2) as f64;
        (0..self.len())
            .map(|idx| {
                let mut z = self.center.clone();
                for (a, k) in self.multi_index(idx).into_iter().enumerate() {
                    z[self.axes[a]] += (k as f64 - half) * self.steps[a];
                }
                z
            })
            .collect()
    }

    /// Admissible box per axis: the stencil extent.
    pub fn extent(&self, axis: usize) -> Interval {
        let half = (STENCIL_NODES / 2) as f64;
        let a = self
            .axes
            .iter()
            .position(|&x| x == axis)
            .expect("axis on stencil");
        Interval::new(
            self.center[axis] - half * self.steps[a],
            self.center[axis] + half * self.steps[a],
        )
    }
}

/// One realization: the posterior mean plus a joint posterior deviation
/// drawn on a stencil and interpolated between its nodes.
pub struct StencilRealization<'a> {
    pub gp: &'a TrainedSurrogate,
    pub stencil: &'a Stencil,
    /// `M x n` deviation from the mean at the stencil nodes.
    pub deviation: DMatrix<f64>,
}

impl MeanModel for StencilRealization<'_> {
    fn state_dim(&self) -> usize {
        self.deviation.ncols()
    }

    fn mean_and_jacobian(&self, z: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let st = self.stencil;
        let n = self.deviation.ncols();
        let d = st.axes.len();
        let basis: Vec<_> = (0..d)
            .map(|a| lagrange((z[st.axes[a]] - st.center[st.axes[a]]) / st.steps[a]))
            .collect();
        let e = self.gp.local(z, Detail::MeanJac);
        let mut f = e.mean;
        let mut jac = e.jac;
        for idx in 0..st.len() {
            let mi = st.multi_index(idx);
            let w: f64 = (0..d).map(|a| basis[a].0[mi[a]]).product();
            let row = self.deviation.row(idx);
            for c in 0..n {
                f[c] += w * row[c];
            }
            for a in 0..d {
                let wa: f64 = (0..d)
                    .map(|b| {
                        if b == a {
                            basis[b].1[mi[b]]
                        } else {
                            basis[b].0[mi[b]]
                        }
                    })
                    .product::<f64>()
                    / st.steps[a];
                for c in 0..n {
                    jac[(c, st.axes[a])] += wa * row[c];
                }
            }
        }
        (f, jac)
    }

    fn residual_scale(&self) -> Vec<f64> {
        self.gp.normalization().output_scale.clone()
    }
}

/// `mean + diag(sigma) theta` with a fixed `theta`.
pub struct CoherentRealization<'a> {
    pub gp: &'a TrainedSurrogate,
    pub theta: DVector<f64>,
}

impl MeanModel for CoherentRealization<'_> {
    fn state_dim(&self) -> usize {
        self.gp.state_dim()
    }

    fn mean_and_jacobian(&self, z: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let e = self.gp.local(z, Detail::Full);
        let f = &e.mean + e.std.component_mul(&self.theta);
        let mut jac = e.jac;
        for c in 0..self.theta.len() {
            for a in 0..jac.ncols() {
                jac[(c, a)] += self.theta[c] * e.std_grad[(c, a)];
            }
        }
        (f, jac)
    }

    fn residual_scale(&self) -> Vec<f64> {
        self.gp.normalization().output_scale.clone()
    }
}

/// Stencil axes needed to solve for a realization root and read off its
/// state Jacobian.
pub fn stencil_axes(frame: RootFrame, n: usize) -> Vec<usize> {
    match frame {
        RootFrame::FixedParam => (0..n).collect(),
        RootFrame::FixedState(_) => (0..=n).collect(),
    }
}

/// Realization model actually used for a system of dimension `n`.
pub fn effective_model(model: RealizationModel, frame: RootFrame, n: usize) -> RealizationModel {
    match model {
        RealizationModel::JointStencil if stencil_axes(frame, n).len() > MAX_STENCIL_DIM => {
            RealizationModel::Coherent
        }
        m => m,
    }
}

/// Per-realization criticality values and failure count.
#[derive(Debug, Clone, PartialEq)]
pub struct McSamples {
    pub values: Vec<f64>,
    pub failures: usize,
}

/// Solves `n_samples` realizations for their steady states near the mean
/// root of `ss` and returns the criticality value of each. Realization `r`
/// draws from its own stream `derive_seed(seed, [r])`.
pub fn realization_criticality(
    gp: &TrainedSurrogate,
    spec: &AcquisitionSpec,
    ss: &SteadyStateDist,
    n_samples: usize,
    model: RealizationModel,
    seed: u64,
) -> Result<McSamples> {
    let n = gp.state_dim();
    let frame = spec.frame;
    let u0: Vec<f64> = ss.mean.iter().copied().collect();
    let mut values = Vec::with_capacity(n_samples);
    let mut failures = 0;
    let mut record = |res: Result<f64>| -> Result<()> {
        match res {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => failures += 1,
            Err(
                Error::NewtonFailure { .. }
                | Error::SingularJacobian { .. }
                | Error::DefectiveEigen { .. },
            ) => failures += 1,
            Err(e) => return Err(e),
        }
        Ok(())
    };
    let criticality_at = |m: &dyn MeanModel, opts: &NewtonOptions| -> Result<f64> {
        let sol = solve_root(m, frame, ss.anchor, &u0, opts)?;
        let (_, jac) = m.mean_and_jacobian(&sol.point);
        criticality_of_jacobian(&jac.columns(0, n).into_owned(), spec.kind)
    };
    match effective_model(model, frame, n) {
        RealizationModel::JointStencil => {
            let stencil = Stencil::around(gp, &ss.point, stencil_axes(frame, n));
            let sampler = RealizationSampler::new(gp, &stencil.points())?;
            let opts = NewtonOptions {
                bounds: Some(
                    frame
                        .unknown_indices(n)
                        .into_iter()
                        .map(|j| stencil.extent(j))
                        .collect(),
                ),
                ..Default::default()
            };
            for r in 0..n_samples {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
                let real = StencilRealization {
                    gp,
                    stencil: &stencil,
                    deviation: sampler.draw(&mut rng) - sampler.mean(),
                };
                record(criticality_at(&real, &opts))?;
            }
        }
        RealizationModel::Coherent => {
            let opts = spec.newton_options(n);
            for r in 0..n_samples {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
                let theta = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let real = CoherentRealization { gp, theta };
                record(criticality_at(&real, &opts))?;
            }
        }
    }
    if 2 * failures > n_samples {
        return Err(Error::McDegenerate {
            failures,
            total: n_samples,
        });
    }
    Ok(McSamples { values, failures })
}

/// Sample statistics of the criticality values and of their squares.
pub(crate) struct McStatistics {
    pub criticality: ScalarDist,
    pub objective: ScalarDist,
}

fn mean_var(v: &[f64]) -> ScalarDist {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    ScalarDist::new(mean, var)
}

pub(crate) fn mc_statistics(
    gp: &TrainedSurrogate,
    spec: &AcquisitionSpec,
    ss: &SteadyStateDist,
    n_samples: usize,
    model: RealizationModel,
    seed: u64,
) -> Result<McStatistics> {
    let s = realization_criticality(gp, spec, ss, n_samples, model, seed)?;
    let sq: Vec<f64> = s.values.iter().map(|v| v * v).collect();
    Ok(McStatistics {
        criticality: mean_var(&s.values),
        objective: mean_var(&sq),
    })
}

/// Monte Carlo acquisition at `s`: `lcb = mean(c_r^2) - beta std(c_r^2)`
/// over `n_samples` realizations. `spec.method` is ignored in favour of the
/// explicit sample size.
pub fn mc_acquisition(
    gp: &TrainedSurrogate,
    spec: &AcquisitionSpec,
    s: f64,
    warm: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<AcquisitionEvaluation> {
    let model = match spec.method {
        AcqMethod::MonteCarlo { model, .. } => model,
        AcqMethod::Analytic => RealizationModel::default(),
    };
    let mc_spec = AcquisitionSpec {
        method: AcqMethod::MonteCarlo { n_samples, model },
        seed,
        ..spec.clone()
    };
    super::eval_acq(gp, &mc_spec, s, warm)
}
