//! Lower-confidence-bound acquisition over the branch variable, its
//! minimization, and the uncertainty-sampling fallback.

pub mod mc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Detail, TrainedSurrogate};
use crate::steady::{solve_root, steady_dist, NewtonOptions, RootFrame, SteadyStateDist};
use crate::systems::Interval;
use crate::uq::{
    criticality_gradient, derivative_dist_1d, eigen_dist, jacobian_dist, select_critical_eig,
    square_moments, trace_dist, EigMode, ScalarDist,
};

pub use mc::{mc_acquisition, RealizationModel};

/// Bifurcation sought, which fixes the criticality condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BifKind {
    /// Fold of a scalar ODE: `d f / d x = 0` on the branch.
    Fold1D,
    /// Fold of an ODE system: zero eigenvalue.
    FoldND,
    /// Hopf: zero real part of the critical eigenvalue.
    HopfEig,
    /// Hopf in the plane: zero Jacobian trace.
    HopfTrace,
    /// Fold of a map learned through its displacement: unit multiplier.
    FoldMap,
    /// Neimark-Sacker of a map learned through its displacement.
    NeimarkSacker,
}

impl BifKind {
    fn eig_mode(self) -> Option<EigMode> {
        match self {
            BifKind::FoldND => Some(EigMode::FoldOde),
            BifKind::HopfEig => Some(EigMode::HopfOde),
            BifKind::FoldMap => Some(EigMode::FoldMap),
            BifKind::NeimarkSacker => Some(EigMode::NeimarkSacker),
            BifKind::Fold1D | BifKind::HopfTrace => None,
        }
    }

    fn is_map(self) -> bool {
        matches!(self, BifKind::FoldMap | BifKind::NeimarkSacker)
    }

    pub fn validate(self, n: usize) -> Result<()> {
        match self {
            BifKind::Fold1D if n != 1 => Err(Error::InvalidInput(format!(
                "Fold1D needs a scalar system, got dimension {n}"
            ))),
            BifKind::HopfEig | BifKind::HopfTrace | BifKind::NeimarkSacker if n < 2 => Err(
                Error::InvalidInput(format!("{self:?} needs at least two state dimensions")),
            ),
            BifKind::HopfTrace if n != 2 => Err(Error::InvalidInput(
                "HopfTrace is only a Hopf condition for planar systems".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// How the squared criticality statistics are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcqMethod {
    /// Closed-form first-order propagation.
    Analytic,
    /// Sample statistics over posterior realizations.
    MonteCarlo {
        n_samples: usize,
        #[serde(default)]
        model: RealizationModel,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionSpec {
    pub kind: BifKind,
    pub method: AcqMethod,
    /// Exploration weight.
    pub beta: f64,
    pub frame: RootFrame,
    /// Sorted values of the fixed coordinate to evaluate.
    pub candidate_grid: Vec<f64>,
    /// Golden-section refinement inside the grid cells around the argmin.
    pub refine: bool,
    /// Admissible interval per joint coordinate `(x, p)` for Newton iterates.
    pub bounds: Option<Vec<Interval>>,
    /// Base seed of the Monte Carlo realizations.
    pub seed: u64,
}

pub const DEFAULT_BETA: f64 = 2.0;
pub const DEFAULT_GRID_SIZE: usize = 101;
pub const GOLDEN_ITERATIONS: usize = 20;

/// `n` evenly spaced values covering `iv`.
pub fn linspace(iv: Interval, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![iv.mid()],
        _ => (0..n)
            .map(|k| iv.lo + iv.width() * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

impl AcquisitionSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        self.kind.validate(n)?;
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if self.candidate_grid.is_empty() {
            return Err(Error::InvalidInput("empty candidate grid".into()));
        }
        if self.candidate_grid.iter().any(|v| !v.is_finite())
            || self.candidate_grid.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::InvalidInput(
                "candidate grid must be finite and sorted".into(),
            ));
        }
        if let AcqMethod::MonteCarlo { n_samples, .. } = self.method {
            if n_samples < 2 {
                return Err(Error::InvalidInput(format!(
                    "n_samples must be >= 2, got {n_samples}"
                )));
            }
        }
        if let RootFrame::FixedState(i) = self.frame {
            if i >= n {
                return Err(Error::InvalidInput(format!(
                    "branch state index {i} out of range"
                )));
            }
        }
        if self.kind == BifKind::Fold1D && self.frame == RootFrame::FixedParam {
            return Err(Error::InvalidInput(
                "a scalar fold cannot be parametrized by the bifurcation parameter".into(),
            ));
        }
        if let Some(b) = &self.bounds {
            if b.len() != n + 1 {
                return Err(Error::DimensionMismatch {
                    what: "Newton bounds",
                    expected: n + 1,
                    got: b.len(),
                });
            }
        }
        Ok(())
    }

    pub(crate) fn newton_options(&self, n: usize) -> NewtonOptions {
        NewtonOptions {
            bounds: self.bounds.as_ref().map(|b| {
                self.frame
                    .unknown_indices(n)
                    .into_iter()
                    .map(|j| b[j])
                    .collect()
            }),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcqFlags {
    pub newton_failed: bool,
    /// Some predictive standard deviation at the root fell below the floor.
    pub std_floor: bool,
    /// A negative variance was clamped to zero.
    pub clamped: bool,
    /// The root is singular or the critical eigenvalue is defective.
    pub degenerate: bool,
}

impl AcqFlags {
    pub fn excluded(&self) -> bool {
        self.newton_failed || self.degenerate
    }
}

#[derive(Debug, Clone)]
pub struct AcquisitionEvaluation {
    pub location: f64,
    /// Statistics of the squared criticality value.
    pub objective: ScalarDist,
    /// Statistics of the criticality value itself.
    pub criticality: ScalarDist,
    /// `objective.mean - beta sqrt(objective.variance)`; `+inf` when excluded.
    pub lcb: f64,
    pub flags: AcqFlags,
    pub steady: Option<SteadyStateDist>,
}

impl AcquisitionEvaluation {
    fn excluded(location: f64, flags: AcqFlags) -> Self {
        Self {
            location,
            objective: ScalarDist::new(f64::NAN, f64::NAN),
            criticality: ScalarDist::new(f64::NAN, f64::NAN),
            lcb: f64::INFINITY,
            flags,
            steady: None,
        }
    }

    /// Joint input `(x, p)` of the mean root, when one was found.
    pub fn root(&self) -> Option<&[f64]> {
        self.steady.as_ref().map(|s| s.point.as_slice())
    }
}

/// Initial guess for the unknowns near `location`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub location: f64,
    pub unknowns: Vec<f64>,
}

/// First-order distribution of the criticality value at a steady state.
pub fn criticality_dist(ss: &SteadyStateDist, kind: BifKind) -> Result<ScalarDist> {
    if kind == BifKind::Fold1D {
        return derivative_dist_1d(ss);
    }
    let jd = jacobian_dist(ss)?;
    let jd = if kind.is_map() {
        jd.shifted_by_identity()
    } else {
        jd
    };
    match kind.eig_mode() {
        Some(mode) => Ok(eigen_dist(&jd, mode)?.value),
        None => Ok(trace_dist(&jd)),
    }
}

/// Criticality value of one concrete state Jacobian `d f / d x`.
pub fn criticality_of_jacobian(jx: &DMatrix<f64>, kind: BifKind) -> Result<f64> {
    match kind {
        BifKind::Fold1D => Ok(jx[(0, 0)]),
        BifKind::HopfTrace => Ok(jx.trace()),
        _ => {
            let mode = kind.eig_mode().expect("eigenvalue criterion");
            let j = if kind.is_map() {
                jx + DMatrix::identity(jx.nrows(), jx.ncols())
            } else {
                jx.clone()
            };
            let ce = select_critical_eig(&j, mode)?;
            Ok(criticality_gradient(&ce, mode).0)
        }
    }
}

fn lcb_of(objective: &ScalarDist, beta: f64) -> f64 {
    objective.mean - beta * objective.variance.max(0.0).sqrt()
}

fn is_soft_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NewtonFailure { .. } | Error::SingularJacobian { .. }
    )
}

/// Acquisition at fixed coordinate `s`: Newton on the mean, steady-state
/// distribution, criticality distribution, squared moments, LCB.
pub fn eval_acq(
    gp: &TrainedSurrogate,
    spec: &AcquisitionSpec,
    s: f64,
    warm: &[f64],
) -> Result<AcquisitionEvaluation> {
    let n = gp.state_dim();
    let sol = match solve_root(gp, spec.frame, s, warm, &spec.newton_options(n)) {
        Ok(sol) => sol,
        Err(e) if is_soft_failure(&e) => {
            return Ok(AcquisitionEvaluation::excluded(
                s,
                AcqFlags {
                    newton_failed: true,
                    ..Default::default()
                },
            ))
        }
        Err(e) => return Err(e),
    };
    let degenerate = || {
        AcquisitionEvaluation::excluded(
            s,
            AcqFlags {
                degenerate: true,
                ..Default::default()
            },
        )
    };
    let ss = match steady_dist(gp, spec.frame, &sol.point) {
        Ok(ss) => ss,
        Err(Error::SingularJacobian { .. }) => return Ok(degenerate()),
        Err(e) => return Err(e),
    };
    let (criticality, objective) = match spec.method {
        AcqMethod::Analytic => match criticality_dist(&ss, spec.kind) {
            Ok(c) => (c, square_moments(c)),
            Err(Error::DefectiveEigen { .. }) => return Ok(degenerate()),
            Err(e) => return Err(e),
        },
        AcqMethod::MonteCarlo { n_samples, model } => {
            let seed = crate::seeds::derive_seed(spec.seed, &[s.to_bits()]);
            let out = mc::mc_statistics(gp, spec, &ss, n_samples, model, seed)?;
            (out.criticality, out.objective)
        }
    };
    let flags = AcqFlags {
        std_floor: ss.local.std_floor.iter().any(|f| *f),
        clamped: criticality.clamped,
        ..Default::default()
    };
    Ok(AcquisitionEvaluation {
        location: s,
        lcb: lcb_of(&objective, spec.beta),
        objective,
        criticality,
        flags,
        steady: Some(ss),
    })
}

/// Result of [`minimize_acq`].
#[derive(Debug, Clone)]
pub struct AcqMinimum {
    pub best: AcquisitionEvaluation,
    /// Evaluations on the candidate grid, in grid order.
    pub grid: Vec<AcquisitionEvaluation>,
    pub n_evaluations: usize,
}

fn better(a: &AcquisitionEvaluation, b: &AcquisitionEvaluation) -> bool {
    a.lcb < b.lcb || (a.lcb == b.lcb && a.location < b.location)
}

fn unknowns_of(ev: &AcquisitionEvaluation) -> Option<Vec<f64>> {
    ev.steady.as_ref().map(|s| s.mean.iter().copied().collect())
}

/// Minimizes the acquisition over the candidate grid, sweeping outward from
/// the grid point nearest the warm start so each Newton solve starts from its
/// neighbour's root; then refines by golden section inside the adjacent
/// cells. Ties go to the smaller location.
pub fn minimize_acq(
    gp: &TrainedSurrogate,
    spec: &AcquisitionSpec,
    warm: &WarmStart,
) -> Result<AcqMinimum> {
    let n = gp.state_dim();
    spec.validate(n)?;
    let grid = &spec.candidate_grid;
    let m = grid.len();
    let start = (0..m).fold(0, |b, k| {
        if (grid[k] - warm.location).abs() < (grid[b] - warm.location).abs() {
            k
        } else {
            b
        }
    });
    let mut evals: Vec<Option<AcquisitionEvaluation>> = vec![None; m];
    let mut guess = warm.unknowns.clone();
    for k in start..m {
        let ev = eval_acq(gp, spec, grid[k], &guess)?;
        if let Some(u) = unknowns_of(&ev) {
            guess = u;
        }
        evals[k] = Some(ev);
    }
    let mut guess = evals[start]
        .as_ref()
        .and_then(unknowns_of)
        .unwrap_or_else(|| warm.unknowns.clone());
    for k in (0..start).rev() {
        let ev = eval_acq(gp, spec, grid[k], &guess)?;
        if let Some(u) = unknowns_of(&ev) {
            guess = u;
        }
        evals[k] = Some(ev);
    }
    let grid_evals: Vec<AcquisitionEvaluation> = evals
        .into_iter()
        .map(|e| e.expect("every grid point visited"))
        .collect();
    let mut n_evaluations = m;
    let k_best = (0..m)
        .filter(|&k| !grid_evals[k].flags.excluded())
        .fold(None, |b: Option<usize>, k| match b {
            Some(j) if !better(&grid_evals[k], &grid_evals[j]) => Some(j),
            _ => Some(k),
        })
        .ok_or(Error::AllNewtonFailed)?;
    let mut best = grid_evals[k_best].clone();
    if spec.refine && m > 1 {
        let lo = grid[k_best.saturating_sub(1)];
        let hi = grid[(k_best + 1).min(m - 1)];
        let seed_u = unknowns_of(&best).expect("best evaluation has a root");
        let mut eval_at = |s: f64| -> Result<AcquisitionEvaluation> {
            n_evaluations += 1;
            let ev = eval_acq(gp, spec, s, &seed_u)?;
            Ok(ev)
        };
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let mut fc = eval_at(c)?;
        let mut fd = eval_at(d)?;
        for _ in 0..GOLDEN_ITERATIONS {
            for ev in [&fc, &fd] {
                if !ev.flags.excluded() && better(ev, &best) {
                    best = ev.clone();
                }
            }
            if fc.lcb <= fd.lcb {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = eval_at(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = eval_at(d)?;
            }
        }
        for ev in [&fc, &fd] {
            if !ev.flags.excluded() && better(ev, &best) {
                best = ev.clone();
            }
        }
    }
    Ok(AcqMinimum {
        best,
        grid: grid_evals,
        n_evaluations,
    })
}

/// Index of the candidate `(x, p)` with the largest summed predictive
/// variance; ties go to the smallest index.
pub fn uncertainty_sampling(gp: &TrainedSurrogate, grid: &[Vec<f64>]) -> Result<usize> {
    if grid.is_empty() {
        return Err(Error::InvalidInput(
            "empty uncertainty-sampling grid".into(),
        ));
    }
    let d = gp.input_dim();
    if let Some(z) = grid.iter().find(|z| z.len() != d) {
        return Err(Error::DimensionMismatch {
            what: "uncertainty-sampling candidate",
            expected: d,
            got: z.len(),
        });
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (k, z) in grid.iter().enumerate() {
        let v = gp.local(z, Detail::Full).variance().sum();
        if v > best.1 {
            best = (k, v);
        }
    }
    Ok(best.0)
}
