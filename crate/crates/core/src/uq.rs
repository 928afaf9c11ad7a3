//! First-order propagation of surrogate uncertainty to state derivatives,
//! Jacobians, eigenvalues and traces at steady states.
//!
//! Jacobian entries are flattened row-major: entry `(i, j)` of an `n x n`
//! Jacobian has flat index `i * n + j`, in `cov4` and in every gradient.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::steady::{RootFrame, SteadyStateDist};

/// Overlap `|w^T v|` of unit left and right eigenvectors below which the
/// selected eigenvalue is treated as defective.
pub const MIN_EIGEN_OVERLAP: f64 = 1e-10;

/// Mean and variance of a scalar Gaussian summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarDist {
    pub mean: f64,
    pub variance: f64,
    /// Set when a negative variance was clamped to zero.
    pub clamped: bool,
}

impl ScalarDist {
    /// Builds the summary, clamping a negative `variance` to zero.
    pub fn new(mean: f64, variance: f64) -> Self {
        if variance < 0.0 {
            Self {
                mean,
                variance: 0.0,
                clamped: true,
            }
        } else {
            Self {
                mean,
                variance,
                clamped: false,
            }
        }
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// `E[X^2] = m^2 + v`, `Var(X^2) = 2 v (v + 2 m^2)` for Gaussian `X`.
pub fn square_moments(d: ScalarDist) -> ScalarDist {
    let v = d.variance.max(0.0);
    ScalarDist {
        mean: d.mean * d.mean + v,
        variance: 2.0 * v * (v + 2.0 * d.mean * d.mean),
        clamped: d.clamped,
    }
}

/// Distribution of `d f / d x` at the fixed-state root of a one-dimensional
/// surrogate: mean `f_x`, variance `[f_xp sigma* - sgn(f_p) sigma_x]^2`.
pub fn derivative_dist_1d(ss: &SteadyStateDist) -> Result<ScalarDist> {
    if ss.frame != RootFrame::FixedState(0) || ss.point.len() != 2 {
        return Err(Error::InvalidInput(
            "derivative distribution needs a one-dimensional fixed-state root".into(),
        ));
    }
    let e = &ss.local;
    let fp = e.jac[(0, 1)];
    let sigma_star = ss.cov[(0, 0)].max(0.0).sqrt();
    let bracket = e.hess[0][(0, 1)] * sigma_star - fp.signum() * e.std_grad[(0, 0)];
    Ok(ScalarDist::new(e.jac[(0, 0)], bracket * bracket))
}

/// Distribution of the state Jacobian at a steady state.
#[derive(Debug, Clone)]
pub struct JacobianDist {
    pub mean: DMatrix<f64>,
    /// `n^2 x n` loading matrix `G` of the entries on the standard normal
    /// realization coordinates; `cov4 = G G^T`.
    pub loading: DMatrix<f64>,
    /// `n^2 x n^2` covariance of the row-major flattened entries.
    pub cov4: DMatrix<f64>,
}

impl JacobianDist {
    pub fn dim(&self) -> usize {
        self.mean.nrows()
    }

    /// `Cov(J_{i1 j1}, J_{i2 j2})`.
    pub fn cov(&self, i1: usize, j1: usize, i2: usize, j2: usize) -> f64 {
        let n = self.dim();
        self.cov4[(i1 * n + j1, i2 * n + j2)]
    }

    /// The same distribution shifted by the identity, for the Jacobian of a
    /// map `x -> x + d(x)` learned through its displacement `d`.
    pub fn shifted_by_identity(&self) -> Self {
        let n = self.dim();
        Self {
            mean: &self.mean + DMatrix::identity(n, n),
            loading: self.loading.clone(),
            cov4: self.cov4.clone(),
        }
    }

    /// Distribution of the linear functional `sum_ij g_ij J_ij`.
    pub fn linear_functional(&self, mean: f64, g: &DVector<f64>) -> ScalarDist {
        let proj = self.loading.transpose() * g;
        ScalarDist::new(mean, proj.norm_squared())
    }
}

/// Jacobian distribution at a steady state. With realizations
/// `f_r = mean + B theta` and roots `u_r = u_mu + S theta` (`S = -A^-1 B`),
/// `J_r,ij = J_ij + sum_k d^2 mean_i / dx_j du_k S_k. theta + d sigma_i / dx_j theta_i`.
pub fn jacobian_dist(ss: &SteadyStateDist) -> Result<JacobianDist> {
    let e = &ss.local;
    let n = ss.mean_jacobian_at_root.nrows();
    let unknowns = ss.frame.unknown_indices(n);
    let mut loading = DMatrix::zeros(n * n, n);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for m in 0..n {
                let mut v: f64 = unknowns
                    .iter()
                    .enumerate()
                    .map(|(k, &uk)| e.hess[i][(j, uk)] * ss.sensitivity[(k, m)])
                    .sum();
                if m == i {
                    v += e.std_grad[(i, j)];
                }
                loading[(row, m)] = v;
            }
        }
    }
    let cov4 = &loading * loading.transpose();
    Ok(JacobianDist {
        mean: ss.mean_jacobian_at_root.clone(),
        loading,
        cov4,
    })
}

/// Mean `tr J`, variance `sum_ij Cov(J_ii, J_jj)`.
pub fn trace_dist(jd: &JacobianDist) -> ScalarDist {
    let n = jd.dim();
    let g = DVector::from_fn(n * n, |k, _| if k / n == k % n { 1.0 } else { 0.0 });
    jd.linear_functional(jd.mean.trace(), &g)
}

/// Which eigenvalue condition defines criticality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigMode {
    /// Zero eigenvalue of a flow Jacobian.
    FoldOde,
    /// Zero real part of a flow Jacobian eigenvalue.
    HopfOde,
    /// Unit multiplier of a map Jacobian.
    FoldMap,
    /// Multiplier of unit modulus of a map Jacobian.
    NeimarkSacker,
}

impl EigMode {
    fn distance(self, l: Complex64) -> f64 {
        match self {
            EigMode::FoldOde => l.norm(),
            EigMode::HopfOde => l.re.abs(),
            EigMode::FoldMap => (l - 1.0).norm(),
            EigMode::NeimarkSacker => (l.norm_sqr() - 1.0).abs(),
        }
    }
}

/// Selected eigenvalue with its eigenvectors: `J v = lambda v`,
/// `w^T J = lambda w^T`, `|v| = 1` and `w^T v` real positive.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalEig {
    pub index: usize,
    pub lambda: Complex64,
    pub left: Vec<Complex64>,
    pub right: Vec<Complex64>,
}

fn is_real(l: Complex64) -> bool {
    l.im.abs() <= 1e-12 * (1.0 + l.norm())
}

/// Unit null vector of `M` from its smallest right singular vector.
fn null_vector(m: DMatrix<Complex64>) -> DVector<Complex64> {
    let n = m.ncols();
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let (k, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |(bk, bv), (k, v)| if *v < bv { (k, *v) } else { (bk, bv) },
            );
    DVector::from_fn(n, |i, _| vt[(k, i)].conj())
}

/// All eigenvalues of a real matrix.
pub fn eigenvalues(j: &DMatrix<f64>) -> Vec<Complex64> {
    j.complex_eigenvalues().iter().copied().collect()
}

/// Eigenvalue closest to the criticality condition of `mode`; for complex
/// pairs the member with positive imaginary part. Ties go to the lower index.
pub fn select_critical_eig(j: &DMatrix<f64>, mode: EigMode) -> Result<CriticalEig> {
    let n = j.nrows();
    if n == 0 || j.ncols() != n {
        return Err(Error::InvalidInput(
            "Jacobian must be square and nonempty".into(),
        ));
    }
    if let Some(k) = j.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            component: k,
            context: "Jacobian".into(),
        });
    }
    let eigs = eigenvalues(j);
    let mut best: Option<(usize, f64)> = None;
    for (k, l) in eigs.iter().enumerate() {
        if l.im < 0.0 && !is_real(*l) {
            continue;
        }
        let d = mode.distance(*l);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    let (index, _) = best.expect("a real matrix has an eigenvalue with nonnegative imaginary part");
    let mut lambda = eigs[index];
    if is_real(lambda) {
        lambda.im = 0.0;
    }
    let jc = j.map(|v| Complex64::new(v, 0.0));
    let shift = DMatrix::from_diagonal_element(n, n, lambda);
    let mut v = null_vector(&jc - &shift);
    let mut w = null_vector(jc.transpose() - &shift);
    if is_real(lambda) {
        // Real eigenvectors for real eigenvalues.
        let align = |x: &mut DVector<Complex64>| {
            let k = (0..x.len()).fold(0, |b, i| if x[i].norm() > x[b].norm() { i } else { b });
            let ph = x[k] / x[k].norm();
            *x /= ph;
        };
        align(&mut v);
        align(&mut w);
    }
    v /= Complex64::new(v.norm(), 0.0);
    w /= Complex64::new(w.norm(), 0.0);
    let overlap = w.transpose() * &v;
    let overlap = overlap[(0, 0)];
    if overlap.norm() < MIN_EIGEN_OVERLAP {
        return Err(Error::DefectiveEigen {
            overlap: overlap.norm(),
        });
    }
    w /= overlap;
    Ok(CriticalEig {
        index,
        lambda,
        left: w.iter().copied().collect(),
        right: v.iter().copied().collect(),
    })
}

/// Distribution of the criticality value of the selected eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDist {
    /// `Re lambda` (Hopf), `lambda` (fold), `lambda - 1` (map fold) or
    /// `|lambda|^2 - 1` (Neimark-Sacker).
    pub value: ScalarDist,
    pub eig_index: usize,
    pub lambda: Complex64,
    pub left_vec: Vec<Complex64>,
    pub right_vec: Vec<Complex64>,
    pub squared: ScalarDist,
}

/// Criticality value and its gradient with respect to the row-major
/// flattened Jacobian, from `d lambda / d J_ij = w_i v_j / (w^T v)`.
pub fn criticality_gradient(ce: &CriticalEig, mode: EigMode) -> (f64, DVector<f64>) {
    let n = ce.right.len();
    let wv: Complex64 = ce.left.iter().zip(&ce.right).map(|(a, b)| a * b).sum();
    let s = |k: usize| ce.left[k / n] * ce.right[k % n] / wv;
    let l = ce.lambda;
    // Criticality as a function of lambda, with its complex derivative
    // acting on d lambda through Re(conj(c) . ).
    let (value, weight) = match mode {
        EigMode::HopfOde => (l.re, Complex64::new(1.0, 0.0)),
        EigMode::FoldOde if is_real(l) => (l.re, Complex64::new(1.0, 0.0)),
        EigMode::FoldOde => (l.norm(), l / l.norm()),
        EigMode::FoldMap if is_real(l) => (l.re - 1.0, Complex64::new(1.0, 0.0)),
        EigMode::FoldMap => ((l - 1.0).norm(), (l - 1.0) / (l - 1.0).norm()),
        EigMode::NeimarkSacker => (l.norm_sqr() - 1.0, l * 2.0),
    };
    let g = DVector::from_fn(n * n, |k, _| (weight.conj() * s(k)).re);
    (value, g)
}

/// First-order distribution of the criticality eigenvalue of `jd.mean`.
pub fn eigen_dist(jd: &JacobianDist, mode: EigMode) -> Result<EigenDist> {
    let ce = select_critical_eig(&jd.mean, mode)?;
    let (value, g) = criticality_gradient(&ce, mode);
    let value = jd.linear_functional(value, &g);
    Ok(EigenDist {
        value,
        eig_index: ce.index,
        lambda: ce.lambda,
        left_vec: ce.left,
        right_vec: ce.right,
        squared: square_moments(value),
    })
}
