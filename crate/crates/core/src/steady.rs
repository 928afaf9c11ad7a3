//! Newton solving on the surrogate mean and first-order steady-state
//! distributions.
//!
//! A steady state is a root of the predictive mean with one coordinate of the
//! joint input `(x, p)` held fixed: either the parameter (the unknowns are the
//! full state) or one state component (the unknowns are the remaining state
//! components and the parameter). Both cases share one code path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Detail, LocalEval, TrainedSurrogate};
use crate::linalg::condition_number;
use crate::systems::{BranchVariable, Interval};

/// Which coordinate of the joint input is held fixed while solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootFrame {
    FixedParam,
    FixedState(usize),
}

impl RootFrame {
    pub fn from_branch(bv: BranchVariable) -> Self {
        match bv {
            BranchVariable::Parameter => RootFrame::FixedParam,
            BranchVariable::State(i) => RootFrame::FixedState(i),
        }
    }

    /// Index of the fixed coordinate in the joint input of an `n`-dimensional
    /// system.
    pub fn fixed_index(self, n: usize) -> usize {
        match self {
            RootFrame::FixedParam => n,
            RootFrame::FixedState(i) => i,
        }
    }

    /// Joint-input indices of the unknowns, in increasing order.
    pub fn unknown_indices(self, n: usize) -> Vec<usize> {
        let f = self.fixed_index(n);
        (0..=n).filter(|&k| k != f).collect()
    }

    fn validate(self, n: usize) -> Result<()> {
        match self {
            RootFrame::FixedState(i) if i >= n => Err(Error::InvalidInput(format!(
                "fixed state index {i} out of range for dimension {n}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Iteration policy for the damped Newton solver.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    /// Bound on the infinity norm of the mean residual in normalized output
    /// units.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub max_condition: f64,
    /// Admissible interval per unknown; leaving it counts as non-convergence.
    pub bounds: Option<Vec<Interval>>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50,
            max_halvings: 30,
            max_condition: 1e12,
            bounds: None,
        }
    }
}

/// Smallest admissible `|A|` for a scalar root Jacobian.
pub const MIN_SCALAR_SLOPE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RootSolution {
    /// Joint input `(x, p)` at the root.
    pub point: Vec<f64>,
    pub iterations: usize,
    /// Infinity norm of the normalized residual.
    pub residual: f64,
}

/// A smooth vector field over the joint input `(x, p)` that Newton can
/// solve: the surrogate mean, or an interpolated realization.
pub trait MeanModel {
    fn state_dim(&self) -> usize;
    /// Value and `n x (n + 1)` Jacobian at the joint input `z`.
    fn mean_and_jacobian(&self, z: &[f64]) -> (DVector<f64>, DMatrix<f64>);
    /// Per-component scale that normalizes the residual.
    fn residual_scale(&self) -> Vec<f64>;
}

impl MeanModel for TrainedSurrogate {
    fn state_dim(&self) -> usize {
        TrainedSurrogate::state_dim(self)
    }

    fn mean_and_jacobian(&self, z: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let e = self.local(z, Detail::MeanJac);
        (e.mean, e.jac)
    }

    fn residual_scale(&self) -> Vec<f64> {
        self.normalization().output_scale.clone()
    }
}

fn normalized_residual(scale: &[f64], mean: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(mean.len(), |c, _| mean[c] / scale[c])
}

/// Columns of the mean Jacobian belonging to the unknowns.
fn root_jacobian(jac: &DMatrix<f64>, unknowns: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(jac.nrows(), unknowns.len(), |i, k| jac[(i, unknowns[k])])
}

fn check_regular(a: &DMatrix<f64>, max_condition: f64) -> Result<()> {
    if a.nrows() == 1 {
        let v = a[(0, 0)];
        if !(v.abs() >= MIN_SCALAR_SLOPE) {
            return Err(Error::SingularJacobian {
                condition: if v == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / v.abs()
                },
            });
        }
        return Ok(());
    }
    let condition = condition_number(a);
    if !(condition <= max_condition) {
        return Err(Error::SingularJacobian { condition });
    }
    Ok(())
}

/// Damped Newton on the surrogate mean with coordinate `frame.fixed_index`
/// held at `s`; `u0` holds the initial unknowns.
pub fn solve_root<M: MeanModel + ?Sized>(
    gp: &M,
    frame: RootFrame,
    s: f64,
    u0: &[f64],
    opts: &NewtonOptions,
) -> Result<RootSolution> {
    let n = gp.state_dim();
    frame.validate(n)?;
    if u0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "Newton initial guess",
            expected: n,
            got: u0.len(),
        });
    }
    let unknowns = frame.unknown_indices(n);
    let fixed = frame.fixed_index(n);
    let assemble = |u: &[f64]| {
        let mut z = vec![0.0; n + 1];
        z[fixed] = s;
        for (k, &j) in unknowns.iter().enumerate() {
            z[j] = u[k];
        }
        z
    };
    if let Some(i) = u0
        .iter()
        .chain(std::iter::once(&s))
        .position(|v| !v.is_finite())
    {
        return Err(Error::NonFinite {
            component: i,
            context: "Newton initial guess".into(),
        });
    }
    let inside = |u: &[f64]| match &opts.bounds {
        Some(b) => u.iter().zip(b).all(|(v, iv)| iv.contains(*v)),
        None => true,
    };
    let mut u = u0.to_vec();
    let mut z = assemble(&u);
    let scale = gp.residual_scale();
    let (mut f, mut jac) = gp.mean_and_jacobian(&z);
    let mut r = normalized_residual(&scale, &f);
    let fail = |z: Vec<f64>, r: &DVector<f64>, it: usize| Error::NewtonFailure {
        last_iterate: z,
        residual: r.amax(),
        iterations: it,
    };
    for it in 0..opts.max_iter {
        if r.amax() < opts.tol {
            return Ok(RootSolution {
                point: z,
                iterations: it,
                residual: r.amax(),
            });
        }
        let a = root_jacobian(&jac, &unknowns);
        check_regular(&a, opts.max_condition)?;
        let step = a.lu().solve(&(-&f)).ok_or(Error::SingularJacobian {
            condition: f64::INFINITY,
        })?;
        let norm0 = r.norm();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let un: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            if un.iter().all(|v| v.is_finite()) && inside(&un) {
                let zn = assemble(&un);
                let (fn_, jn) = gp.mean_and_jacobian(&zn);
                let rn = normalized_residual(&scale, &fn_);
                if rn.iter().all(|v| v.is_finite()) && (rn.norm() < norm0 || rn.amax() < opts.tol) {
                    u = un;
                    z = zn;
                    f = fn_;
                    jac = jn;
                    r = rn;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(fail(z, &r, it + 1));
        }
    }
    if r.amax() < opts.tol {
        return Ok(RootSolution {
            point: z,
            iterations: opts.max_iter,
            residual: r.amax(),
        });
    }
    Err(fail(z, &r, opts.max_iter))
}

/// Root of the mean in `x` at fixed `p`.
pub fn newton_solve(gp: &TrainedSurrogate, x0: &[f64], p: f64) -> Result<Vec<f64>> {
    let sol = solve_root(gp, RootFrame::FixedParam, p, x0, &NewtonOptions::default())?;
    Ok(sol.point[..gp.state_dim()].to_vec())
}

/// Root of a one-dimensional mean in `p` at fixed `x`.
pub fn newton_solve_for_param(gp: &TrainedSurrogate, x: f64, p0: f64) -> Result<f64> {
    if gp.state_dim() != 1 {
        return Err(Error::DimensionMismatch {
            what: "state for a scalar parameter solve",
            expected: 1,
            got: gp.state_dim(),
        });
    }
    let sol = solve_root(
        gp,
        RootFrame::FixedState(0),
        x,
        &[p0],
        &NewtonOptions::default(),
    )?;
    Ok(sol.point[1])
}

/// Gaussian law of the roots of the realizations `f_r = mean + B theta` to
/// first order: `u* ~ N(u_mu, A^-1 Sigma A^-T)` with `A = d mean / d u`.
#[derive(Debug, Clone)]
pub struct SteadyStateDist {
    pub frame: RootFrame,
    /// Value of the fixed coordinate.
    pub anchor: f64,
    /// Joint input `(x, p)` at the mean root.
    pub point: Vec<f64>,
    /// Unknowns at the mean root, ordered as `frame.unknown_indices`.
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// State Jacobian `d mean / d x` at the root, `n x n`.
    pub mean_jacobian_at_root: DMatrix<f64>,
    /// Mean Jacobian with respect to the unknowns.
    pub root_jacobian: DMatrix<f64>,
    /// `-A^-1 B`: first-order response of the unknowns to the standard
    /// normal realization coordinates.
    pub sensitivity: DMatrix<f64>,
    pub local: LocalEval,
}

impl SteadyStateDist {
    /// Joint input obtained by placing the unknowns `u` next to the anchor.
    pub fn joint_from_unknowns(&self, u: &[f64]) -> Vec<f64> {
        let n = self.mean_jacobian_at_root.nrows();
        let mut z = vec![0.0; n + 1];
        z[self.frame.fixed_index(n)] = self.anchor;
        for (k, j) in self.frame.unknown_indices(n).into_iter().enumerate() {
            z[j] = u[k];
        }
        z
    }
}

/// Steady-state distribution at a mean root `point = (x, p)`.
pub fn steady_dist(
    gp: &TrainedSurrogate,
    frame: RootFrame,
    point: &[f64],
) -> Result<SteadyStateDist> {
    let n = gp.state_dim();
    frame.validate(n)?;
    if point.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            what: "steady-state point",
            expected: n + 1,
            got: point.len(),
        });
    }
    let unknowns = frame.unknown_indices(n);
    let local = gp.local(point, Detail::Full);
    let a = root_jacobian(&local.jac, &unknowns);
    check_regular(&a, NewtonOptions::default().max_condition)?;
    let lu = a.clone().lu();
    let b = DMatrix::from_diagonal(&local.std);
    let sensitivity = -lu.solve(&b).ok_or(Error::SingularJacobian {
        condition: f64::INFINITY,
    })?;
    let cov = &sensitivity * sensitivity.transpose();
    let mean = DVector::from_iterator(n, unknowns.iter().map(|&j| point[j]));
    let jx = local.jac.columns(0, n).into_owned();
    Ok(SteadyStateDist {
        frame,
        anchor: point[frame.fixed_index(n)],
        point: point.to_vec(),
        mean,
        cov,
        mean_jacobian_at_root: jx,
        root_jacobian: a,
        sensitivity,
        local,
    })
}

/// `Sigma* = J^-1 Sigma J^-T` at a root `x_root` of the mean at `p`.
pub fn steady_dist_fixed_param(
    gp: &TrainedSurrogate,
    x_root: &[f64],
    p: f64,
) -> Result<SteadyStateDist> {
    let mut z = x_root.to_vec();
    z.push(p);
    steady_dist(gp, RootFrame::FixedParam, &z)
}

/// `(sigma*)^2 = sigma^2 / (d mean / dp)^2` at a root `p_root` of a
/// one-dimensional mean at fixed `x`.
pub fn steady_dist_fixed_state(
    gp: &TrainedSurrogate,
    x: f64,
    p_root: f64,
) -> Result<SteadyStateDist> {
    if gp.state_dim() != 1 {
        return Err(Error::DimensionMismatch {
            what: "state for a fixed-state distribution",
            expected: 1,
            got: gp.state_dim(),
        });
    }
    steady_dist(gp, RootFrame::FixedState(0), &[x, p_root])
}
