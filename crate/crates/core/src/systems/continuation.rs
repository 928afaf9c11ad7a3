//! Pseudo-arclength continuation on the true equations. These routines produce
//! reference bifurcation values; they never see the surrogate.

use nalgebra::{DMatrix, DVector};

use super::{Interval, VectorField};
use crate::error::{Error, Result};

/// A parametrized system `F(x; p)` with its partial derivatives.
pub trait ParamSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, x: &[f64], p: f64) -> Result<Vec<f64>>;
    fn jac_x(&self, x: &[f64], p: f64) -> Result<DMatrix<f64>>;
    fn d_dp(&self, x: &[f64], p: f64) -> Result<Vec<f64>>;
}

/// Central-difference derivatives of a black-box vector field.
pub struct FiniteDifference<'a, V: ?Sized> {
    pub field: &'a V,
    pub step: f64,
}

impl<'a, V: VectorField + ?Sized> FiniteDifference<'a, V> {
    pub fn new(field: &'a V) -> Self {
        Self { field, step: 1e-6 }
    }
}

impl<V: VectorField + ?Sized> ParamSystem for FiniteDifference<'_, V> {
    fn dim(&self) -> usize {
        self.field.state_dim()
    }

    fn rhs(&self, x: &[f64], p: f64) -> Result<Vec<f64>> {
        self.field.eval(x, p)
    }

    fn jac_x(&self, x: &[f64], p: f64) -> Result<DMatrix<f64>> {
        let n = x.len();
        let mut j = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        for k in 0..n {
            let h = self.step * x[k].abs().max(1.0);
            xp[k] = x[k] + h;
            let fp = self.field.eval(&xp, p)?;
            xp[k] = x[k] - h;
            let fm = self.field.eval(&xp, p)?;
            xp[k] = x[k];
            for i in 0..n {
                j[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(j)
    }

    fn d_dp(&self, x: &[f64], p: f64) -> Result<Vec<f64>> {
        let h = self.step * p.abs().max(1.0);
        let fp = self.field.eval(x, p + h)?;
        let fm = self.field.eval(x, p - h)?;
        Ok(fp
            .iter()
            .zip(&fm)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub state: Vec<f64>,
    pub param: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_steps: usize,
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            ds: 1e-2,
            ds_min: 1e-8,
            ds_max: 0.1,
            max_steps: 20_000,
            tol: 1e-10,
            max_newton: 12,
        }
    }
}

/// Points along a branch together with the folds detected between them.
#[derive(Debug, Clone, Default)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub arclength: Vec<f64>,
    pub folds: Vec<BranchPoint>,
    /// The corrector failed before the branch left the parameter bounds.
    pub truncated: bool,
}

/// Damped Newton on `F(x; p) = 0` for fixed `p`.
pub fn solve_fixed_param<S: ParamSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    p: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let mut x = DVector::from_column_slice(x0);
    let mut f = DVector::from_vec(sys.rhs(x.as_slice(), p)?);
    for it in 0..max_iter {
        let res = f.amax();
        if res < tol {
            return Ok(x.as_slice().to_vec());
        }
        let j = sys.jac_x(x.as_slice(), p)?;
        let dx = j.lu().solve(&(-&f)).ok_or(Error::SingularJacobian {
            condition: f64::INFINITY,
        })?;
        let mut t = 1.0;
        loop {
            let trial = &x + &dx * t;
            if let Ok(ft) = sys.rhs(trial.as_slice(), p) {
                let ft = DVector::from_vec(ft);
                if ft.amax() < res || t < 1e-6 {
                    x = trial;
                    f = ft;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-9 {
                return Err(Error::NewtonFailure {
                    last_iterate: x.as_slice().to_vec(),
                    residual: res,
                    iterations: it,
                });
            }
        }
    }
    let residual = f.amax();
    if residual < tol {
        Ok(x.as_slice().to_vec())
    } else {
        Err(Error::NewtonFailure {
            last_iterate: x.as_slice().to_vec(),
            residual,
            iterations: max_iter,
        })
    }
}

fn stack(x: &[f64], p: f64) -> DVector<f64> {
    let mut y = DVector::zeros(x.len() + 1);
    y.rows_mut(0, x.len()).copy_from_slice(x);
    y[x.len()] = p;
    y
}

fn bordered<S: ParamSystem + ?Sized>(
    sys: &S,
    y: &DVector<f64>,
    t: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = sys.dim();
    let x = &y.as_slice()[..n];
    let p = y[n];
    let jx = sys.jac_x(x, p)?;
    let fp = sys.d_dp(x, p)?;
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&jx);
    for i in 0..n {
        m[(i, n)] = fp[i];
    }
    for k in 0..=n {
        m[(n, k)] = t[k];
    }
    Ok(m)
}

/// Unit tangent at `y`, oriented along `prev`.
fn tangent<S: ParamSystem + ?Sized>(
    sys: &S,
    y: &DVector<f64>,
    prev: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = sys.dim();
    let m = bordered(sys, y, prev)?;
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let t = m.lu().solve(&rhs).ok_or(Error::SingularJacobian {
        condition: f64::INFINITY,
    })?;
    let t = t.normalize();
    Ok(if t.dot(prev) < 0.0 { -t } else { t })
}

/// Corrector: Newton on `[F(y); t·(y - y_pred)] = 0`.
fn correct<S: ParamSystem + ?Sized>(
    sys: &S,
    pred: &DVector<f64>,
    t: &DVector<f64>,
    opts: &ContinuationOptions,
) -> Option<(DVector<f64>, usize)> {
    let n = sys.dim();
    let mut y = pred.clone();
    for it in 0..opts.max_newton {
        let f = sys.rhs(&y.as_slice()[..n], y[n]).ok()?;
        let mut r = DVector::zeros(n + 1);
        r.rows_mut(0, n).copy_from_slice(&f);
        r[n] = t.dot(&(&y - pred));
        if !r.iter().all(|v| v.is_finite()) {
            return None;
        }
        if r.amax() < opts.tol {
            return Some((y, it));
        }
        let m = bordered(sys, &y, t).ok()?;
        let dy = m.lu().solve(&(-r))?;
        y += dy;
    }
    let f = sys.rhs(&y.as_slice()[..n], y[n]).ok()?;
    (f.iter().fold(0.0_f64, |m, v| m.max(v.abs())) < opts.tol).then_some((y, opts.max_newton))
}

/// Pseudo-arclength continuation from a converged point, initially moving in
/// the direction of increasing `p` when `increasing` is set. Stops when `p`
/// leaves `bounds` or after `max_steps`. Folds (sign changes of the parameter
/// component of the tangent) are refined by bisection in arclength. When the
/// corrector fails after at least one accepted step, the branch so far is
/// returned with `truncated` set.
pub fn continue_branch<S: ParamSystem + ?Sized>(
    sys: &S,
    start: &BranchPoint,
    increasing: bool,
    bounds: Interval,
    opts: &ContinuationOptions,
) -> Result<Branch> {
    let n = sys.dim();
    let mut y = stack(&start.state, start.param);
    let mut dir = DVector::zeros(n + 1);
    dir[n] = if increasing { 1.0 } else { -1.0 };
    let mut t = tangent(sys, &y, &dir)?;
    if (t[n] > 0.0) != increasing && t[n] != 0.0 {
        t = -t;
    }
    let mut branch = Branch {
        points: vec![start.clone()],
        arclength: vec![0.0],
        folds: Vec::new(),
        truncated: false,
    };
    let mut ds = opts.ds;
    let mut s = 0.0;
    for _ in 0..opts.max_steps {
        let pred = &y + &t * ds;
        match correct(sys, &pred, &t, opts) {
            Some((y_new, its)) => {
                let t_new = tangent(sys, &y_new, &t)?;
                if t[n] * t_new[n] < 0.0 {
                    let fold = refine_fold(sys, &y, &t, ds, opts)?;
                    branch.folds.push(fold);
                }
                s += ds;
                y = y_new;
                t = t_new;
                branch.points.push(BranchPoint {
                    state: y.as_slice()[..n].to_vec(),
                    param: y[n],
                });
                branch.arclength.push(s);
                if !bounds.contains(y[n]) {
                    break;
                }
                if its <= 3 {
                    ds = (ds * 1.3).min(opts.ds_max);
                }
            }
            None => {
                ds *= 0.5;
                if ds < opts.ds_min && branch.points.len() > 1 {
                    branch.truncated = true;
                    break;
                }
                if ds < opts.ds_min {
                    return Err(Error::NewtonFailure {
                        last_iterate: y.as_slice().to_vec(),
                        residual: f64::NAN,
                        iterations: opts.max_newton,
                    });
                }
            }
        }
    }
    Ok(branch)
}

fn refine_fold<S: ParamSystem + ?Sized>(
    sys: &S,
    y0: &DVector<f64>,
    t0: &DVector<f64>,
    ds: f64,
    opts: &ContinuationOptions,
) -> Result<BranchPoint> {
    let n = sys.dim();
    let sign0 = t0[n].signum();
    let (mut lo, mut hi) = (0.0, ds);
    let mut best = y0.clone();
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let pred = y0 + t0 * mid;
        let Some((y, _)) = correct(sys, &pred, t0, opts) else {
            break;
        };
        let tm = tangent(sys, &y, t0)?;
        if tm[n].signum() == sign0 {
            lo = mid;
        } else {
            hi = mid;
        }
        best = y;
        if hi - lo < 1e-14 * ds.max(1.0) {
            break;
        }
    }
    Ok(BranchPoint {
        state: best.as_slice()[..n].to_vec(),
        param: best[n],
    })
}

/// Locates folds of a black-box field: solves for a first branch point at
/// `p0` from `x0`, then continues in both parameter directions inside
/// `bounds`. Returns the folds ordered by parameter value.
pub fn find_folds<S: ParamSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    p0: f64,
    bounds: Interval,
    opts: &ContinuationOptions,
) -> Result<Vec<BranchPoint>> {
    let state = solve_fixed_param(sys, x0, p0, opts.tol, 100)?;
    let start = BranchPoint { state, param: p0 };
    let mut folds = Vec::new();
    for increasing in [true, false] {
        match continue_branch(sys, &start, increasing, bounds, opts) {
            Ok(b) => folds.extend(b.folds),
            // A direction that cannot leave the start point has no folds.
            Err(
                Error::NewtonFailure { .. } | Error::OutOfDomain { .. } | Error::NonFinite { .. },
            ) => {}
            Err(e) => return Err(e),
        }
    }
    folds.sort_by(|a, b| a.param.total_cmp(&b.param));
    folds.dedup_by(|a, b| (a.param - b.param).abs() < 1e-9);
    Ok(folds)
}
