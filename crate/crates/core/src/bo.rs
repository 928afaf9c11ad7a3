//! The active-learning loop: fit the surrogate, minimize the acquisition,
//! sample a steady-state realization, observe there, and repeat until two
//! consecutive samples agree.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    linspace, minimize_acq, uncertainty_sampling, AcqFlags, AcqMethod, AcquisitionSpec, BifKind,
    WarmStart, DEFAULT_BETA, DEFAULT_GRID_SIZE,
};
use crate::design::{latin_hypercube, uniform_random};
use crate::error::{Error, Result};
use crate::gp::{fit, FitOptions, KernelHyperparams, NoiseSpec, TrainedSurrogate};
use crate::linalg::euclidean_distance;
use crate::seeds::derive_seed;
use crate::steady::RootFrame;
use crate::systems::fhn::FhnParams;
use crate::systems::reduced::{build_fhn_pod, FhnPodOptions, FhnPodPipeline};
use crate::systems::reference::{fhn_reference, reference_point, ReferencePoint};
use crate::systems::{
    observe, BranchVariable, Interval, ObservationDataset, SystemConfig, SystemId, SystemSpec,
};
use crate::uq::ScalarDist;

const STREAM_DESIGN: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_DRAW: u64 = 3;
const STREAM_FIT: u64 = 4;
const STREAM_ACQ: u64 = 5;
const STREAM_FALLBACK: u64 = 6;

/// Draws outside the search box are repeated this often before clamping.
pub const MAX_REDRAWS: usize = 10;
/// Latin hypercube candidates for the uncertainty-sampling fallback.
pub const FALLBACK_CANDIDATES: usize = 256;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub enum InitialDesign {
    #[default]
    LatinHypercube,
    UniformRandom,
    /// Explicit joint points `(x, p)`.
    Fixed(Vec<Vec<f64>>),
}

/// How the next state is chosen from the steady-state distribution at the
/// acquisition minimizer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RealizationSampling {
    /// The mean root.
    MeanOnly,
    /// One Gaussian draw, redrawn while outside the search box.
    #[default]
    GaussianDraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub method: AcqMethod,
    pub beta: f64,
    pub grid_size: usize,
    pub refine: bool,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            method: AcqMethod::Analytic,
            beta: DEFAULT_BETA,
            grid_size: DEFAULT_GRID_SIZE,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoConfig {
    pub system: SystemConfig,
    pub bif_kind: BifKind,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    pub n_initial: usize,
    #[serde(default)]
    pub initial_design: InitialDesign,
    pub budget: usize,
    pub conv_tol: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub realization_sampling: RealizationSampling,
    /// Convergence is not declared before this iteration. Zero follows the
    /// plain step-size criterion.
    #[serde(default)]
    pub min_iterations: usize,
    /// Keep the mean roots along the candidate grid of every iteration.
    #[serde(default)]
    pub record_branch: bool,
    /// Reduced-model construction for the FitzHugh-Nagumo system.
    #[serde(default)]
    pub fhn_pod: FhnPodOptions,
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.system.system.state_dim();
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.budget < 1 {
            return bad("budget must be at least 1".into());
        }
        if !(self.conv_tol > 0.0) {
            return bad(format!("conv_tol must be positive, got {}", self.conv_tol));
        }
        if self.n_initial < 2 {
            return bad(format!(
                "n_initial must be at least 2, got {}",
                self.n_initial
            ));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            ));
        }
        if let InitialDesign::Fixed(points) = &self.initial_design {
            if points.len() != self.n_initial {
                return bad(format!(
                    "fixed design has {} points, n_initial is {}",
                    points.len(),
                    self.n_initial
                ));
            }
            if let Some(p) = points
                .iter()
                .find(|p| p.len() != n + 1 || p.iter().any(|v| !v.is_finite()))
            {
                return bad(format!(
                    "fixed design point {p:?} is not a finite joint (x, p) of length {}",
                    n + 1
                ));
            }
        }
        self.bif_kind.validate(n)?;
        let acq = &self.acquisition;
        if !(acq.beta >= 0.0) || !acq.beta.is_finite() {
            return bad(format!("beta must be finite and >= 0, got {}", acq.beta));
        }
        if acq.grid_size < 1 {
            return bad("grid_size must be at least 1".into());
        }
        if let AcqMethod::MonteCarlo { n_samples, .. } = acq.method {
            if n_samples < 2 {
                return bad(format!(
                    "Monte Carlo n_samples must be at least 2, got {n_samples}"
                ));
            }
        }
        match (self.bif_kind, self.system.branch_variable) {
            (BifKind::Fold1D, BranchVariable::State(0)) => {}
            (BifKind::Fold1D, _) => {
                return bad("Fold1D searches along the state: use branch_variable State(0)".into())
            }
            (
                BifKind::HopfEig | BifKind::HopfTrace | BifKind::NeimarkSacker,
                BranchVariable::State(_),
            ) => {
                return bad(format!(
                    "{:?} searches along the parameter: use branch_variable Parameter",
                    self.bif_kind
                ))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn frame(&self) -> RootFrame {
        RootFrame::from_branch(self.system.branch_variable)
    }
}

/// A validated system ready to observe, with the reduced-model pipeline when
/// one was built.
#[derive(Debug, Clone)]
pub struct PreparedSystem {
    pub spec: SystemSpec,
    pub fhn: Option<FhnPodPipeline>,
}

impl PreparedSystem {
    /// Reference bifurcation from the true equations.
    pub fn reference(&self) -> Result<ReferencePoint> {
        match &self.fhn {
            Some(p) => Ok(fhn_reference(p)),
            None => reference_point(&self.spec),
        }
    }
}

/// Validates the system and builds the reduced FitzHugh-Nagumo model when
/// needed.
pub fn prepare_system(cfg: &SystemConfig, fhn: &FhnPodOptions) -> Result<PreparedSystem> {
    let spec = SystemSpec::from_config(cfg)?;
    if spec.id != SystemId::FhnPodReduced {
        return Ok(PreparedSystem { spec, fhn: None });
    }
    if fhn.n_leading != spec.state_dim {
        return Err(Error::DimensionMismatch {
            what: "fhn_pod.n_leading",
            expected: spec.state_dim,
            got: fhn.n_leading,
        });
    }
    let params = FhnParams {
        du: spec.param("D_u"),
        dv: spec.param("D_v"),
        alpha1: spec.param("alpha1"),
        alpha0: spec.param("alpha0"),
    };
    let pipeline = build_fhn_pod(params, spec.bif_param_range, fhn, None)?;
    let spec = spec.with_reduced_model(pipeline.model.clone())?;
    Ok(PreparedSystem {
        spec,
        fhn: Some(pipeline),
    })
}

/// Acquisition outcome of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcqDiagnostics {
    /// Minimizer on the independent variable.
    pub location: f64,
    pub lcb: f64,
    pub objective: ScalarDist,
    pub criticality: ScalarDist,
    /// Mean steady state `(x, p)` at the minimizer.
    pub mean_root: Vec<f64>,
    pub flags: AcqFlags,
    pub n_evaluations: usize,
    /// Every draw left the search box and the last one was clamped.
    pub draw_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoIteration {
    /// One-based.
    pub iter: usize,
    /// Sampled `(x, p)`.
    pub point: Vec<f64>,
    pub observation: Vec<f64>,
    /// Distance to the previous sample; absent on the first iteration.
    pub delta: Option<f64>,
    pub fallback_used: bool,
    pub acquisition: Option<AcqDiagnostics>,
    /// Mean roots `(x, p)` along the candidate grid, when recorded.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branch: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoResult {
    pub state: Vec<f64>,
    pub param: f64,
    pub criticality: Option<ScalarDist>,
    pub converged: bool,
    pub iterations_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub initial_design: Vec<Vec<f64>>,
    pub iterations: Vec<BoIteration>,
    pub result: Option<BoResult>,
    /// Wall time of the acquisition minimization per iteration, in
    /// milliseconds. Not reproducible; excluded from [`BoTrace::same_outcome`].
    pub acq_wall_ms: Vec<f64>,
}

impl BoTrace {
    /// Equality of everything except timings.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.initial_design == other.initial_design
            && self.iterations == other.iterations
            && self.result == other.result
    }
}

/// A run that stopped on an unrecoverable error, with the trace so far.
#[derive(Debug, Clone, thiserror::Error)]
#[error("run failed after {} iterations: {error}", partial.iterations.len())]
pub struct BoFailure {
    pub error: Error,
    pub partial: Box<BoTrace>,
}

fn joint_box(spec: &SystemSpec) -> Vec<Interval> {
    let mut b = spec.state_box.clone();
    b.push(spec.bif_param_range);
    b
}

/// Newton region: the state box widened by half its width and the parameter
/// search range itself, so that branch points beyond the range are never
/// proposed.
fn newton_bounds(spec: &SystemSpec) -> Vec<Interval> {
    let mut b = spec.extended_box();
    b.push(spec.bif_param_range);
    b
}

/// Observation closest to a steady state of the data, measured in units of
/// the output scales.
fn data_warm_start(
    data: &ObservationDataset,
    gp: &TrainedSurrogate,
    frame: RootFrame,
) -> WarmStart {
    let scale = &gp.normalization().output_scale;
    let score = |v: &[f64]| {
        v.iter()
            .zip(scale)
            .map(|(g, s)| (g / s).powi(2))
            .sum::<f64>()
    };
    let best = data
        .observations
        .iter()
        .fold(None::<(f64, Vec<f64>)>, |acc, o| {
            let s = score(&o.value);
            match acc {
                Some((bs, _)) if bs <= s => acc,
                _ => Some((s, o.input())),
            }
        })
        .expect("dataset is nonempty")
        .1;
    let n = gp.state_dim();
    WarmStart {
        location: best[frame.fixed_index(n)],
        unknowns: frame
            .unknown_indices(n)
            .into_iter()
            .map(|j| best[j])
            .collect(),
    }
}

/// Runs the search on a prepared system.
pub fn run_bo(cfg: &BoConfig, system: &SystemSpec) -> std::result::Result<BoTrace, BoFailure> {
    let mut trace = BoTrace {
        initial_design: Vec::new(),
        iterations: Vec::new(),
        result: None,
        acq_wall_ms: Vec::new(),
    };
    match run_inner(cfg, system, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(BoFailure {
            error,
            partial: Box::new(trace),
        }),
    }
}

fn run_inner(cfg: &BoConfig, system: &SystemSpec, trace: &mut BoTrace) -> Result<()> {
    cfg.validate()?;
    if cfg.system.system != system.id {
        return Err(Error::InvalidInput(format!(
            "config is for {} but the prepared system is {}",
            cfg.system.system, system.id
        )));
    }
    let n = system.state_dim;
    let frame = cfg.frame();
    let fixed = frame.fixed_index(n);
    let unknown_idx = frame.unknown_indices(n);
    let domain = joint_box(system);
    let stream = |tags: &[u64]| ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, tags));
    let mut noise_rng = stream(&[STREAM_NOISE]);
    let mut draw_rng = stream(&[STREAM_DRAW]);

    let design = match &cfg.initial_design {
        InitialDesign::LatinHypercube => {
            latin_hypercube(&domain, cfg.n_initial, &mut stream(&[STREAM_DESIGN]))
        }
        InitialDesign::UniformRandom => {
            uniform_random(&domain, cfg.n_initial, &mut stream(&[STREAM_DESIGN]))
        }
        InitialDesign::Fixed(points) => points.clone(),
    };
    let mut data = ObservationDataset::new();
    for z in &design {
        data.push(observe(
            system,
            &z[..n],
            z[n],
            cfg.noise_sigma,
            &mut noise_rng,
        )?)?;
    }
    trace.initial_design = design;

    let grid = linspace(domain[fixed], cfg.acquisition.grid_size);
    let bounds = newton_bounds(system);
    let mut warm: Option<WarmStart> = None;
    let mut hypers: Option<Vec<KernelHyperparams>> = None;
    let mut converged = false;
    for iter in 1..=cfg.budget {
        let gp = fit(
            &data,
            &FitOptions {
                noise: NoiseSpec::Known(cfg.noise_sigma),
                seed: derive_seed(cfg.seed, &[STREAM_FIT, iter as u64]),
                warm_start: hypers.take(),
                ..Default::default()
            },
        )?;
        let warm_now = warm
            .clone()
            .unwrap_or_else(|| data_warm_start(&data, &gp, frame));
        let spec = AcquisitionSpec {
            kind: cfg.bif_kind,
            method: cfg.acquisition.method,
            beta: cfg.acquisition.beta,
            frame,
            candidate_grid: grid.clone(),
            refine: cfg.acquisition.refine,
            bounds: Some(bounds.clone()),
            seed: derive_seed(cfg.seed, &[STREAM_ACQ, iter as u64]),
        };
        let t0 = Instant::now();
        let acq = minimize_acq(&gp, &spec, &warm_now);
        trace.acq_wall_ms.push(t0.elapsed().as_secs_f64() * 1e3);

        let (point, diagnostics, branch) = match acq {
            Ok(min) => {
                let best = min.best;
                let ss = best
                    .steady
                    .as_ref()
                    .expect("the minimizer has a steady state");
                let mean: Vec<f64> = ss.mean.iter().copied().collect();
                let (u, draw_clamped) = match cfg.realization_sampling {
                    RealizationSampling::MeanOnly => (mean.clone(), false),
                    RealizationSampling::GaussianDraw => {
                        let boxes: Vec<Interval> = unknown_idx.iter().map(|&j| domain[j]).collect();
                        draw_in_box(&ss.mean, &ss.sensitivity, &boxes, &mut draw_rng)
                    }
                };
                let branch = if cfg.record_branch {
                    min.grid
                        .iter()
                        .filter_map(|e| e.root().map(<[f64]>::to_vec))
                        .collect()
                } else {
                    Vec::new()
                };
                warm = Some(WarmStart {
                    location: best.location,
                    unknowns: mean,
                });
                let diag = AcqDiagnostics {
                    location: best.location,
                    lcb: best.lcb,
                    objective: best.objective,
                    criticality: best.criticality,
                    mean_root: ss.point.clone(),
                    flags: best.flags,
                    n_evaluations: min.n_evaluations,
                    draw_clamped,
                };
                (ss.joint_from_unknowns(&u), Some(diag), branch)
            }
            Err(Error::AllNewtonFailed) => {
                let mut rng = stream(&[STREAM_FALLBACK, iter as u64]);
                let candidates = latin_hypercube(&domain, FALLBACK_CANDIDATES, &mut rng);
                let k = uncertainty_sampling(&gp, &candidates)?;
                (candidates[k].clone(), None, Vec::new())
            }
            Err(e) => return Err(e),
        };
        let obs = observe(
            system,
            &point[..n],
            point[n],
            cfg.noise_sigma,
            &mut noise_rng,
        )?;
        let observation = obs.value.clone();
        data.push(obs)?;
        let delta = trace
            .iterations
            .last()
            .map(|prev| euclidean_distance(&prev.point, &point));
        trace.iterations.push(BoIteration {
            iter,
            point,
            observation,
            delta,
            fallback_used: diagnostics.is_none(),
            acquisition: diagnostics,
            branch,
        });
        hypers = Some(gp.hyperparams());
        if delta.is_some_and(|d| d <= cfg.conv_tol) && iter >= cfg.min_iterations {
            converged = true;
            break;
        }
    }
    let last = trace.iterations.last().expect("budget is at least one");
    trace.result = Some(BoResult {
        state: last.point[..n].to_vec(),
        param: last.point[n],
        criticality: last.acquisition.as_ref().map(|a| a.criticality),
        converged,
        iterations_used: trace.iterations.len(),
    });
    Ok(())
}

/// `mean + factor xi` with standard normal `xi`, redrawn up to
/// [`MAX_REDRAWS`] times while outside `boxes`; the last draw is then
/// clamped. Returns the point and whether it was clamped.
fn draw_in_box(
    mean: &DVector<f64>,
    factor: &nalgebra::DMatrix<f64>,
    boxes: &[Interval],
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, bool) {
    let mut u = mean.clone();
    for _ in 0..MAX_REDRAWS {
        let xi = DVector::from_fn(factor.ncols(), |_, _| StandardNormal.sample(rng));
        u = mean + factor * xi;
        if u.iter().zip(boxes).all(|(v, b)| b.contains(*v)) {
            return (u.iter().copied().collect(), false);
        }
    }
    (
        u.iter().zip(boxes).map(|(v, b)| b.clamp(*v)).collect(),
        true,
    )
}

/// Quartiles of the parameter error across runs at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iter: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_runs: usize,
    pub n_failed: usize,
    pub n_converged: usize,
    pub median_final_param: f64,
    /// `|p - p_ref|` per iteration; runs that stopped early keep their last
    /// sample.
    pub error_curve: Option<Vec<CurvePoint>>,
    pub median_abs_error: Option<f64>,
    pub median_rel_error: Option<f64>,
}

#[derive(Debug)]
pub struct Ensemble {
    pub seeds: Vec<u64>,
    pub runs: Vec<std::result::Result<BoTrace, BoFailure>>,
    pub summary: EnsembleSummary,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Independent runs of `cfg` with each seed in turn, on at most `jobs`
/// threads. Failed runs are kept; the call fails only when all runs fail.
pub fn run_ensemble(
    cfg: &BoConfig,
    system: &SystemSpec,
    seeds: &[u64],
    reference: Option<f64>,
    jobs: usize,
) -> Result<Ensemble> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput(
            "an ensemble needs at least one seed".into(),
        ));
    }
    let distinct: std::collections::BTreeSet<_> = seeds.iter().collect();
    if distinct.len() != seeds.len() {
        return Err(Error::InvalidInput(
            "ensemble seeds must be distinct".into(),
        ));
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let runs: Vec<_> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                run_bo(
                    &BoConfig {
                        seed,
                        ..cfg.clone()
                    },
                    system,
                )
            })
            .collect()
    });
    let ok: Vec<&BoTrace> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    if ok.is_empty() {
        let first = runs
            .into_iter()
            .next()
            .and_then(|r| r.err())
            .expect("all runs failed");
        return Err(first.error);
    }
    let finals: Vec<f64> = ok
        .iter()
        .map(|t| t.result.as_ref().expect("finished run").param)
        .collect();
    let (error_curve, median_abs_error, median_rel_error) = match reference {
        Some(p_ref) => {
            let len = ok.iter().map(|t| t.iterations.len()).max().unwrap_or(0);
            let curve = (0..len)
                .map(|k| {
                    let errs = sorted(
                        ok.iter()
                            .map(|t| {
                                (t.iterations[k.min(t.iterations.len() - 1)].point
                                    [system.state_dim]
                                    - p_ref)
                                    .abs()
                            })
                            .collect(),
                    );
                    CurvePoint {
                        iter: k + 1,
                        median: quantile(&errs, 0.5),
                        q25: quantile(&errs, 0.25),
                        q75: quantile(&errs, 0.75),
                    }
                })
                .collect();
            let abs = quantile(
                &sorted(finals.iter().map(|p| (p - p_ref).abs()).collect()),
                0.5,
            );
            (Some(curve), Some(abs), Some(abs / p_ref.abs()))
        }
        None => (None, None, None),
    };
    let summary = EnsembleSummary {
        n_runs: runs.len(),
        n_failed: runs.len() - ok.len(),
        n_converged: ok
            .iter()
            .filter(|t| t.result.as_ref().is_some_and(|r| r.converged))
            .count(),
        median_final_param: quantile(&sorted(finals), 0.5),
        error_curve,
        median_abs_error,
        median_rel_error,
    };
    Ok(Ensemble {
        seeds: seeds.to_vec(),
        runs,
        summary,
    })
}
