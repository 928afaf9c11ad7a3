//! Monte Carlo oracles for the closed-form propagation and finite-difference
//! checks of the surrogate derivatives, run as a named property suite.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::mc::{CoherentRealization, Stencil, StencilRealization, STENCIL_NODES};
use crate::design::latin_hypercube;
use crate::error::{Error, Result};
use crate::gp::sample::RealizationSampler;
use crate::gp::{fit, Detail, FitOptions, KernelHyperparams, NoiseSpec, TrainedSurrogate};
use crate::seeds::derive_seed;
use crate::steady::{
    newton_solve, newton_solve_for_param, solve_root, steady_dist, MeanModel, NewtonOptions,
    RootFrame, SteadyStateDist,
};
use crate::systems::{
    eval_vector_field, Interval, Observation, ObservationDataset, SystemId, SystemSpec,
};
use crate::uq::{
    derivative_dist_1d, eigen_dist, eigenvalues, jacobian_dist, square_moments, trace_dist,
    EigMode, JacobianDist, ScalarDist,
};

/// Relative tolerances of the oracle comparisons.
pub const TOL_STEADY: f64 = 0.15;
pub const TOL_DERIVATIVE: f64 = 0.15;
pub const TOL_COV4: f64 = 0.20;
pub const TOL_EIGEN: f64 = 0.10;
pub const TOL_TRACE: f64 = 0.10;
/// Squared moments agree within this many standard errors.
pub const SQUARE_SE: f64 = 3.0;
/// Finite-difference agreement: `max(FD_ABS, FD_REL |value|)`.
pub const FD_ABS: f64 = 1e-5;
pub const FD_REL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Fitted surrogates per propagation property.
    pub instances: usize,
    /// Realizations per instance for root-solving oracles.
    pub realizations: usize,
    /// Jacobian draws per instance for the eigenvalue and trace oracles.
    pub jacobian_draws: usize,
    /// Gaussian draws per pair for the squared-moment check.
    pub square_draws: usize,
    pub square_pairs: usize,
    /// Random surrogates for the finite-difference suite.
    pub fd_instances: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            instances: 10,
            realizations: 10_000,
            jacobian_draws: 100_000,
            square_draws: 1_000_000,
            square_pairs: 20,
            fd_instances: 100,
            seed: 20_240_611,
        }
    }
}

/// Outcome of one property: the worst measured discrepancy against its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &str, measured: f64, bound: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            measured,
            bound,
            passed: measured <= bound,
            detail,
        }
    }

    fn failed(name: &str, bound: f64, e: &Error) -> Self {
        Self {
            name: name.to_string(),
            measured: f64::INFINITY,
            bound,
            passed: false,
            detail: format!("error: {e}"),
        }
    }
}

/// Property names in suite order.
pub const PROPERTIES: [&str; 11] = [
    "steady-fixed-param",
    "steady-fixed-state",
    "derivative",
    "cov4",
    "eigen-hopf",
    "eigen-fold",
    "trace",
    "square-moments",
    "asymptotic-steady",
    "asymptotic-derivative",
    "fd-derivatives",
];

/// Runs every property whose name contains `filter`, instances in parallel
/// on at most `jobs` threads. Results are independent of `jobs`.
pub fn run_suite(
    opts: &VerifyOptions,
    filter: Option<&str>,
    jobs: usize,
) -> Result<Vec<PropertyResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let selected: Vec<&str> = PROPERTIES
        .iter()
        .copied()
        .filter(|n| filter.is_none_or(|f| n.contains(f)))
        .collect();
    if selected.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no property matches filter {:?}",
            filter.unwrap_or_default()
        )));
    }
    Ok(pool.install(|| selected.iter().map(|n| run_property(n, opts)).collect()))
}

/// Runs the property called `name`, which must be one of [`PROPERTIES`].
pub fn run_property(name: &str, opts: &VerifyOptions) -> PropertyResult {
    match name {
        "steady-fixed-param" => steady_fixed_param(opts),
        "steady-fixed-state" => steady_fixed_state(opts),
        "derivative" => derivative_property(opts, &|ss: &SteadyStateDist| derivative_dist_1d(ss)),
        "cov4" => cov4_property(opts),
        "eigen-hopf" => eigen_property(opts, name, Regime::Oscillatory, EigMode::HopfOde),
        "eigen-fold" => eigen_property(opts, name, Regime::Node, EigMode::FoldOde),
        "trace" => trace_property(opts),
        "square-moments" => square_moments_property(opts),
        "asymptotic-steady" => asymptotic_steady(opts),
        "asymptotic-derivative" => asymptotic_derivative(opts),
        "fd-derivatives" => fd_property(opts),
        _ => unreachable!("unknown property {name}"),
    }
}

/// Worst value over instances, or the first error.
fn worst<F>(name: &str, bound: f64, n: usize, f: F) -> PropertyResult
where
    F: Fn(usize) -> Result<f64> + Sync,
{
    let vals: Vec<Result<f64>> = (0..n).into_par_iter().map(&f).collect();
    let mut max = 0.0f64;
    for v in vals {
        match v {
            Ok(v) => max = max.max(if v.is_nan() { f64::INFINITY } else { v }),
            Err(e) => return PropertyResult::failed(name, bound, &e),
        }
    }
    PropertyResult::new(name, max, bound, format!("worst of {n} instances"))
}

fn rel_frobenius(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (a - reference).norm() / reference.norm()
}

fn sample_cov(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let m = rows.len() as f64;
    let d = rows[0].len();
    let mean = rows.iter().fold(DVector::zeros(d), |acc, r| acc + r) / m;
    rows.iter().fold(DMatrix::zeros(d, d), |acc, r| {
        let c = r - &mean;
        acc + &c * c.transpose()
    }) / (m - 1.0)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    (
        mean,
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0),
    )
}

/// Mean discrepancy in units of `max(|mean|, std)`.
fn mean_gap(mc: f64, analytic: &ScalarDist) -> f64 {
    (mc - analytic.mean).abs() / analytic.mean.abs().max(analytic.std())
}

/// Which part of the Brusselator's parameter axis an instance lives on.
#[derive(Debug, Clone, Copy)]
enum Regime {
    /// Complex eigenvalue pair around the Hopf point.
    Oscillatory,
    /// Real eigenvalues, well past the Hopf point.
    Node,
}

const OBS_SIGMA: f64 = 1e-3;

fn fitted(
    spec: &SystemSpec,
    state_box: &[Interval],
    param: Interval,
    n: usize,
    seed: u64,
) -> Result<TrainedSurrogate> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let mut bounds = state_box.to_vec();
    bounds.push(param);
    let mut data = ObservationDataset::new();
    for z in latin_hypercube(&bounds, n, &mut rng) {
        let (x, p) = z.split_at(state_box.len());
        let mut value = eval_vector_field(spec, x, p[0])?;
        for v in &mut value {
            *v += OBS_SIGMA * rng.sample::<f64, _>(StandardNormal);
        }
        data.push(Observation {
            state: x.to_vec(),
            param: p[0],
            value,
            noise_sigma: OBS_SIGMA,
        })?;
    }
    fit(
        &data,
        &FitOptions {
            noise: NoiseSpec::Known(OBS_SIGMA),
            seed: derive_seed(seed, &[2]),
            ..Default::default()
        },
    )
}

/// Fitted Brusselator surrogate with its fixed-parameter steady state at a
/// random parameter value.
fn brusselator_instance(seed: u64, regime: Regime) -> Result<(TrainedSurrogate, SteadyStateDist)> {
    let spec = SystemSpec::default_for(SystemId::Brusselator);
    let a = spec.param("a");
    let (bx, range, inner) = match regime {
        Regime::Oscillatory => (
            vec![Interval::new(0.8, 2.2), Interval::new(0.8, 3.6)],
            Interval::new(2.2, 4.2),
            (2.6, 3.8),
        ),
        Regime::Node => (
            vec![Interval::new(1.0, 2.0), Interval::new(3.8, 5.8)],
            Interval::new(6.4, 8.2),
            (6.8, 7.8),
        ),
    };
    let gp = fitted(&spec, &bx, range, 60, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3]));
    let b = rng.random_range(inner.0..inner.1);
    let x = newton_solve(&gp, &[a, b / a], b)?;
    let ss = steady_dist(&gp, RootFrame::FixedParam, &[x[0], x[1], b])?;
    Ok((gp, ss))
}

/// Fitted budworm surrogate with its fixed-state root at a random state
/// away from the folds.
fn budworm_instance(seed: u64) -> Result<(TrainedSurrogate, SteadyStateDist)> {
    let spec = SystemSpec::default_for(SystemId::Budworm);
    let k = spec.param("k");
    let gp = fitted(
        &spec,
        &[Interval::new(4.5, 10.5)],
        Interval::new(0.18, 0.36),
        30,
        seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3]));
    let x = if rng.random::<bool>() {
        rng.random_range(4.8..6.0)
    } else {
        rng.random_range(9.0..10.2)
    };
    let r0 = x / ((1.0 + x * x) * (1.0 - x / k));
    let p = newton_solve_for_param(&gp, x, r0)?;
    let ss = steady_dist(&gp, RootFrame::FixedState(0), &[x, p])?;
    Ok((gp, ss))
}

fn instance_seed(opts: &VerifyOptions, property: u64, i: usize) -> u64 {
    derive_seed(opts.seed, &[property, i as u64])
}

type Roots = Vec<DVector<f64>>;

/// Roots of joint-stencil realizations around the mean root of `ss`, with
/// their first-order predictions `u_mu - A^-1 eps(center)` as control.
fn stencil_roots(
    gp: &TrainedSurrogate,
    ss: &SteadyStateDist,
    n: usize,
    seed: u64,
) -> Result<(Roots, Roots)> {
    let dim = gp.state_dim();
    let axes: Vec<usize> = ss.frame.unknown_indices(dim);
    let stencil = Stencil::around(gp, &ss.point, axes.clone());
    let sampler = RealizationSampler::new(gp, &stencil.points())?;
    let center = (0..axes.len()).fold(0, |acc, _| acc * STENCIL_NODES + STENCIL_NODES / 2);
    let a_inv = ss
        .root_jacobian
        .clone()
        .try_inverse()
        .ok_or(Error::SingularJacobian {
            condition: f64::INFINITY,
        })?;
    let opts = NewtonOptions {
        bounds: Some(axes.iter().map(|&j| stencil.extent(j)).collect()),
        ..Default::default()
    };
    let u0: Vec<f64> = ss.mean.iter().copied().collect();
    let mut roots = Vec::with_capacity(n);
    let mut linear = Vec::with_capacity(n);
    for r in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
        let deviation = sampler.draw(&mut rng) - sampler.mean();
        let eps = deviation.row(center).transpose();
        let real = StencilRealization {
            gp,
            stencil: &stencil,
            deviation,
        };
        let sol = solve_root(&real, ss.frame, ss.anchor, &u0, &opts)?;
        let u: Vec<f64> = axes.iter().map(|&j| sol.point[j]).collect();
        roots.push(DVector::from_vec(u));
        linear.push(&ss.mean - &a_inv * eps);
    }
    Ok((roots, linear))
}

fn steady_check(
    gp: &TrainedSurrogate,
    ss: &SteadyStateDist,
    opts: &VerifyOptions,
    seed: u64,
) -> Result<f64> {
    let (roots, _) = stencil_roots(gp, ss, opts.realizations, seed)?;
    Ok(rel_frobenius(&sample_cov(&roots), &ss.cov))
}

fn steady_fixed_param(opts: &VerifyOptions) -> PropertyResult {
    worst(PROPERTIES[0], TOL_STEADY, opts.instances, |i| {
        let seed = instance_seed(opts, 0, i);
        let (gp, ss) = brusselator_instance(seed, Regime::Oscillatory)?;
        steady_check(&gp, &ss, opts, seed)
    })
}

fn steady_fixed_state(opts: &VerifyOptions) -> PropertyResult {
    worst(PROPERTIES[1], TOL_STEADY, opts.instances, |i| {
        let seed = instance_seed(opts, 1, i);
        let (gp, ss) = budworm_instance(seed)?;
        steady_check(&gp, &ss, opts, seed)
    })
}

/// Realization of the locally coherent model `mean + diag(sigma) theta`.
fn coherent<'a>(gp: &'a TrainedSurrogate, rng: &mut ChaCha8Rng) -> CoherentRealization<'a> {
    let theta = DVector::from_fn(gp.state_dim(), |_, _| StandardNormal.sample(rng));
    CoherentRealization { gp, theta }
}

/// State Jacobians of coherent realizations at their own roots.
fn coherent_jacobians(
    gp: &TrainedSurrogate,
    ss: &SteadyStateDist,
    n: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let dim = gp.state_dim();
    let u0: Vec<f64> = ss.mean.iter().copied().collect();
    let opts = NewtonOptions::default();
    (0..n)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
            let real = coherent(gp, &mut rng);
            let sol = solve_root(&real, ss.frame, ss.anchor, &u0, &opts)?;
            let (_, jac) = real.mean_and_jacobian(&sol.point);
            Ok(DVector::from_fn(dim * dim, |k, _| jac[(k / dim, k % dim)]))
        })
        .collect()
}

/// Derivative oracle against the closed form `analytic`; exposed so that a
/// deliberately broken formula can be shown to fail.
pub fn derivative_property(
    opts: &VerifyOptions,
    analytic: &(dyn Fn(&SteadyStateDist) -> Result<ScalarDist> + Sync),
) -> PropertyResult {
    worst(PROPERTIES[2], TOL_DERIVATIVE, opts.instances, |i| {
        let seed = instance_seed(opts, 2, i);
        let (gp, ss) = budworm_instance(seed)?;
        let d = analytic(&ss)?;
        let samples: Vec<f64> = coherent_jacobians(&gp, &ss, opts.realizations, seed)?
            .iter()
            .map(|j| j[0])
            .collect();
        let (m, v) = mean_var(&samples);
        Ok(mean_gap(m, &d).max((v - d.variance).abs() / d.variance))
    })
}

fn cov4_property(opts: &VerifyOptions) -> PropertyResult {
    worst(PROPERTIES[3], TOL_COV4, opts.instances, |i| {
        let seed = instance_seed(opts, 3, i);
        let (gp, ss) = brusselator_instance(seed, Regime::Oscillatory)?;
        let jd = jacobian_dist(&ss)?;
        let js = coherent_jacobians(&gp, &ss, opts.realizations, seed)?;
        Ok(rel_frobenius(&sample_cov(&js), &jd.cov4))
    })
}

/// Jacobians drawn from `N(mean, G G^T)` through the loading `G`.
fn jacobian_draws(jd: &JacobianDist, n: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let dim = jd.dim();
    let k = jd.loading.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let xi = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            let flat = &jd.loading * xi;
            DMatrix::from_fn(dim, dim, |i, j| jd.mean[(i, j)] + flat[i * dim + j])
        })
        .collect()
}

/// Criticality value of the eigenvalue of `j` closest to `lambda`.
fn tracked_value(j: &DMatrix<f64>, lambda: Complex64, mode: EigMode) -> f64 {
    let l = eigenvalues(j)
        .into_iter()
        .min_by(|a, b| (a - lambda).norm().total_cmp(&(b - lambda).norm()))
        .expect("nonempty spectrum");
    match mode {
        EigMode::HopfOde => l.re,
        EigMode::FoldOde => l.re,
        EigMode::FoldMap => l.re - 1.0,
        EigMode::NeimarkSacker => l.norm_sqr() - 1.0,
    }
}

fn eigen_property(
    opts: &VerifyOptions,
    name: &str,
    regime: Regime,
    mode: EigMode,
) -> PropertyResult {
    let tag = if matches!(regime, Regime::Oscillatory) {
        4
    } else {
        5
    };
    worst(name, TOL_EIGEN, opts.instances, |i| {
        let seed = instance_seed(opts, tag, i);
        let (_, ss) = brusselator_instance(seed, regime)?;
        let jd = jacobian_dist(&ss)?;
        let ed = eigen_dist(&jd, mode)?;
        let samples: Vec<f64> = jacobian_draws(&jd, opts.jacobian_draws, seed)
            .iter()
            .map(|j| tracked_value(j, ed.lambda, mode))
            .collect();
        let (m, v) = mean_var(&samples);
        Ok(mean_gap(m, &ed.value).max((v - ed.value.variance).abs() / ed.value.variance))
    })
}

fn trace_property(opts: &VerifyOptions) -> PropertyResult {
    worst(PROPERTIES[6], TOL_TRACE, opts.instances, |i| {
        let seed = instance_seed(opts, 6, i);
        let (_, ss) = brusselator_instance(seed, Regime::Oscillatory)?;
        let jd = jacobian_dist(&ss)?;
        let td = trace_dist(&jd);
        let samples: Vec<f64> = jacobian_draws(&jd, opts.jacobian_draws, seed)
            .iter()
            .map(|j| j.trace())
            .collect();
        let (m, v) = mean_var(&samples);
        Ok(mean_gap(m, &td).max((v - td.variance).abs() / td.variance))
    })
}

/// Largest deviation, in standard errors, of the sample mean and variance of
/// `X^2` from the Property-1 moments.
fn square_gap(d: ScalarDist, samples: &[f64]) -> f64 {
    let sq = square_moments(d);
    let y: Vec<f64> = samples.iter().map(|x| x * x).collect();
    let m = y.len() as f64;
    let (mean, var) = mean_var(&y);
    let m4 = y.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m;
    let se_mean = (var / m).sqrt();
    let se_var = ((m4 - var * var) / m).sqrt();
    ((mean - sq.mean).abs() / se_mean).max((var - sq.variance).abs() / se_var)
}

fn square_moments_property(opts: &VerifyOptions) -> PropertyResult {
    let name = PROPERTIES[7];
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(opts, 7, 0));
    let pairs: Vec<ScalarDist> = (0..opts.square_pairs)
        .map(|_| ScalarDist::new(rng.random_range(-3.0..3.0), rng.random_range(0.05..4.0)))
        .collect();
    let gaussian = pairs
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(opts, 7, i + 1));
            let xs: Vec<f64> = (0..opts.square_draws)
                .map(|_| d.mean + d.std() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            square_gap(*d, &xs)
        })
        .reduce(|| 0.0, f64::max);
    let fitted = worst(name, SQUARE_SE, opts.instances, |i| {
        let seed = instance_seed(opts, 8, i);
        let (_, ss) = brusselator_instance(seed, Regime::Oscillatory)?;
        let jd = jacobian_dist(&ss)?;
        let ed = eigen_dist(&jd, EigMode::HopfOde)?;
        let xs: Vec<f64> = jacobian_draws(&jd, opts.jacobian_draws, seed)
            .iter()
            .map(|j| tracked_value(j, ed.lambda, EigMode::HopfOde))
            .collect();
        Ok(square_gap(ed.value, &xs))
    });
    if !fitted.measured.is_finite() {
        return fitted;
    }
    PropertyResult::new(
        name,
        gaussian.max(fitted.measured),
        SQUARE_SE,
        format!(
            "{} Gaussian pairs (worst {gaussian:.2} SE), {} fitted Hopf instances (worst {:.2} SE)",
            opts.square_pairs, opts.instances, fitted.measured
        ),
    )
}

/// Scales at which the small-uncertainty limit is probed.
pub const ASYMPTOTIC_SCALES: [f64; 2] = [1e-1, 1e-2];

/// Gap between realization statistics and their first-order controls on
/// common draws, relative to the analytic variance; must shrink as the
/// predictive uncertainty is scaled down.
fn asymptotic<F>(name: &str, opts: &VerifyOptions, tag: u64, gap: F) -> PropertyResult
where
    F: Fn(f64, u64) -> Result<f64> + Sync,
{
    let n = opts.instances;
    let vals: Vec<Result<[f64; 2]>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = instance_seed(opts, tag, i);
            Ok([
                gap(ASYMPTOTIC_SCALES[0], seed)?,
                gap(ASYMPTOTIC_SCALES[1], seed)?,
            ])
        })
        .collect();
    let mut worst_ratio = 0.0f64;
    let mut worst_gaps = [0.0f64; 2];
    for v in vals {
        match v {
            Ok(g) => {
                let ratio = if g[0] > 0.0 {
                    g[1] / g[0]
                } else if g[1] > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                worst_ratio = worst_ratio.max(ratio);
                worst_gaps = [worst_gaps[0].max(g[0]), worst_gaps[1].max(g[1])];
            }
            Err(e) => return PropertyResult::failed(name, 1.0, &e),
        }
    }
    // Strict shrinkage: the gap at the smaller scale stays below the gap at
    // the larger one on every instance.
    let mut r = PropertyResult::new(
        name,
        worst_ratio,
        1.0,
        format!(
            "worst gap {:.2e} at t={} and {:.2e} at t={}",
            worst_gaps[0], ASYMPTOTIC_SCALES[0], worst_gaps[1], ASYMPTOTIC_SCALES[1]
        ),
    );
    r.passed = worst_ratio < 1.0;
    r
}

fn asymptotic_steady(opts: &VerifyOptions) -> PropertyResult {
    asymptotic(PROPERTIES[8], opts, 9, |t, seed| {
        let (gp, ss) = brusselator_instance(seed, Regime::Oscillatory)?;
        let gp = gp.with_uncertainty_scale(t);
        let ss = steady_dist(&gp, RootFrame::FixedParam, &ss.point)?;
        let (roots, linear) = stencil_roots(&gp, &ss, opts.realizations, seed)?;
        Ok((sample_cov(&roots) - sample_cov(&linear)).norm() / ss.cov.norm())
    })
}

fn asymptotic_derivative(opts: &VerifyOptions) -> PropertyResult {
    asymptotic(PROPERTIES[9], opts, 10, |t, seed| {
        let (gp, ss) = budworm_instance(seed)?;
        let gp = gp.with_uncertainty_scale(t);
        let ss = steady_dist(&gp, RootFrame::FixedState(0), &ss.point)?;
        let d = derivative_dist_1d(&ss)?;
        let e = gp.local(&ss.point, Detail::Full);
        let slope = e.hess[0][(0, 1)] * ss.sensitivity[(0, 0)] + e.std_grad[(0, 0)];
        let u0 = [ss.mean[0]];
        let (mut exact, mut linear) = (Vec::new(), Vec::new());
        for r in 0..opts.realizations {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[r as u64]));
            let real = coherent(&gp, &mut rng);
            let sol = solve_root(&real, ss.frame, ss.anchor, &u0, &NewtonOptions::default())?;
            exact.push(real.mean_and_jacobian(&sol.point).1[(0, 0)]);
            linear.push(e.jac[(0, 0)] + slope * real.theta[0]);
        }
        Ok((mean_var(&exact).1 - mean_var(&linear).1).abs() / d.variance)
    })
}

/// Random surrogate with smooth synthetic targets.
fn random_surrogate(rng: &mut ChaCha8Rng) -> Result<(TrainedSurrogate, Vec<Interval>)> {
    let n = rng.random_range(1..=3usize);
    let d = n + 1;
    let bounds: Vec<Interval> = (0..d)
        .map(|_| {
            let lo = rng.random_range(-2.0..2.0);
            Interval::new(lo, lo + rng.random_range(0.5..3.0))
        })
        .collect();
    let m = rng.random_range(5..=25usize);
    let freq: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut data = ObservationDataset::new();
    for z in latin_hypercube(&bounds, m, rng) {
        let value = (0..n)
            .map(|c| {
                (z.iter().zip(&freq).map(|(v, f)| v * f).sum::<f64>() + c as f64).sin()
                    + 0.3 * z[c] * z[n]
            })
            .collect();
        data.push(Observation {
            state: z[..n].to_vec(),
            param: z[n],
            value,
            noise_sigma: 0.0,
        })?;
    }
    let hypers = (0..n)
        .map(|_| KernelHyperparams {
            signal_variance: rng.random_range(0.5..2.0),
            lengthscales: (0..d).map(|_| rng.random_range(0.3..1.5)).collect(),
            noise_variance: 10f64.powf(rng.random_range(-4.0..-2.0)),
        })
        .collect();
    Ok((TrainedSurrogate::with_hyperparams(&data, hypers)?, bounds))
}

/// Largest `|analytic - fd| / max(FD_ABS, FD_REL |analytic|)` over the mean
/// Jacobian, second mean derivatives and standard-deviation gradient of one
/// random surrogate at a random input.
fn fd_instance(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (gp, bounds) = random_surrogate(&mut rng)?;
    let z: Vec<f64> = bounds
        .iter()
        .map(|b| rng.random_range(b.lo..b.hi))
        .collect();
    let n = gp.state_dim();
    let e = gp.local(&z, Detail::Full);
    let mut worst = 0.0f64;
    let mut check = |analytic: f64, fd: f64| {
        worst = worst.max((analytic - fd).abs() / FD_ABS.max(FD_REL * analytic.abs()));
    };
    for a in 0..=n {
        let h = 1e-5 * bounds[a].width();
        let shifted = |s: f64| {
            let mut w = z.clone();
            w[a] += s;
            gp.local(&w, Detail::Full)
        };
        let (ep, em) = (shifted(h), shifted(-h));
        for c in 0..n {
            check(e.jac[(c, a)], (ep.mean[c] - em.mean[c]) / (2.0 * h));
            for b in 0..=n {
                check(
                    e.hess[c][(b, a)],
                    (ep.jac[(c, b)] - em.jac[(c, b)]) / (2.0 * h),
                );
            }
            if !e.std_floor[c] {
                check(e.std_grad[(c, a)], (ep.std[c] - em.std[c]) / (2.0 * h));
            }
        }
    }
    Ok(worst)
}

fn fd_property(opts: &VerifyOptions) -> PropertyResult {
    let mut r = worst(PROPERTIES[10], 1.0, opts.fd_instances, |i| {
        fd_instance(instance_seed(opts, 11, i))
    });
    if r.measured.is_finite() {
        r.detail = format!(
            "worst error in units of max({FD_ABS:e}, {FD_REL:e} |value|) over {} instances",
            opts.fd_instances
        );
    }
    r
}
