//! Reduced FitzHugh-Nagumo model: the finite-difference system restricted to
//! a POD subspace whose trailing coefficients are slaved to the leading ones.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::continuation::{
    continue_branch, solve_fixed_param, Branch, BranchPoint, ContinuationOptions,
};
use super::fhn::{FhnDiscretization, FhnParams};
use super::pod::{build_pod_split, relative_error, PodModel};
use super::{Interval, VectorField};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ReducedFhn {
    pub grid: FhnDiscretization,
    pub pod: PodModel,
    /// Leading-coefficient box covering the computed branch inside the
    /// parameter range, used when a config leaves the state box empty.
    pub suggested_box: Vec<Interval>,
}

impl ReducedFhn {
    pub fn n_leading(&self) -> usize {
        self.pod.n_leading
    }

    /// Galerkin vector field in the leading coefficients.
    pub fn eval(&self, a: &[f64], eps: f64) -> Result<Vec<f64>> {
        if a.len() != self.n_leading() {
            return Err(Error::DimensionMismatch {
                what: "reduced state",
                expected: self.n_leading(),
                got: a.len(),
            });
        }
        let full = self.pod.lift_leading(a);
        let f = self.grid.rhs(&full, eps)?;
        Ok(self.pod.project_leading_direction(&f))
    }
}

impl VectorField for ReducedFhn {
    fn state_dim(&self) -> usize {
        self.n_leading()
    }

    fn eval(&self, x: &[f64], p: f64) -> Result<Vec<f64>> {
        ReducedFhn::eval(self, x, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FhnPodOptions {
    pub dx: f64,
    pub length: f64,
    pub n_snapshots: usize,
    pub n_modes: usize,
    pub n_leading: usize,
    /// Relative widening of the derived state box on each side.
    pub box_margin: f64,
}

impl Default for FhnPodOptions {
    fn default() -> Self {
        Self {
            dx: 0.1,
            length: 20.0,
            n_snapshots: 10,
            n_modes: 8,
            n_leading: 4,
            box_margin: 0.1,
        }
    }
}

/// Everything produced while building the reduced model.
#[derive(Debug, Clone)]
pub struct FhnPodPipeline {
    pub model: Arc<ReducedFhn>,
    /// Front branch of the full system inside the parameter range.
    pub branch: Branch,
    pub snapshots: Vec<Vec<f64>>,
    /// Fold of the full discretized system.
    pub full_fold: BranchPoint,
    /// Largest relative error of slaved lift-after-projection over the branch.
    pub branch_projection_error: f64,
}

/// Computes the front branch of the full system by continuation in `eps`
/// over `eps_range`, picks snapshots evenly spaced in arclength (unless
/// supplied), builds the POD basis, fits the slaving map on the dense branch
/// coefficients and derives the reduced search box.
pub fn build_fhn_pod(
    params: FhnParams,
    eps_range: Interval,
    opts: &FhnPodOptions,
    supplied_snapshots: Option<Vec<Vec<f64>>>,
) -> Result<FhnPodPipeline> {
    let grid = FhnDiscretization::new(params, opts.dx, opts.length)?;
    let branch = full_front_branch(&grid, eps_range)?;
    let full_fold = branch.folds.first().cloned().ok_or_else(|| {
        Error::InvalidInput("no fold of the front branch inside the parameter range".into())
    })?;

    let inside: Vec<usize> = (0..branch.points.len())
        .filter(|&k| eps_range.contains(branch.points[k].param))
        .collect();
    let snapshots = match supplied_snapshots {
        Some(s) => s,
        None => {
            let s0 = branch.arclength[inside[0]];
            let s1 = branch.arclength[*inside.last().unwrap()];
            (0..opts.n_snapshots)
                .map(|j| {
                    let target = s0 + (s1 - s0) * j as f64 / (opts.n_snapshots - 1) as f64;
                    let k = *inside
                        .iter()
                        .min_by(|&&a, &&b| {
                            (branch.arclength[a] - target)
                                .abs()
                                .total_cmp(&(branch.arclength[b] - target).abs())
                        })
                        .unwrap();
                    branch.points[k].state.clone()
                })
                .collect()
        }
    };
    let mut pod = build_pod_split(&snapshots, opts.n_modes, opts.n_leading)?;
    let coeffs: Vec<Vec<f64>> = inside
        .iter()
        .map(|&k| pod.project(&branch.points[k].state))
        .collect();
    pod.fit_slaving(&coeffs)?;

    let nl = opts.n_leading;
    let mut lo = vec![f64::INFINITY; nl];
    let mut hi = vec![f64::NEG_INFINITY; nl];
    for c in &coeffs {
        for i in 0..nl {
            lo[i] = lo[i].min(c[i]);
            hi[i] = hi[i].max(c[i]);
        }
    }
    let suggested_box = (0..nl)
        .map(|i| Interval::new(lo[i], hi[i]).extended(opts.box_margin))
        .collect();
    let branch_projection_error = inside
        .iter()
        .map(|&k| {
            let s = &branch.points[k].state;
            let c = pod.project(s);
            relative_error(&pod.lift_leading(&c[..nl]), s)
        })
        .fold(0.0, f64::max);
    Ok(FhnPodPipeline {
        model: Arc::new(ReducedFhn {
            grid,
            pod,
            suggested_box,
        }),
        branch,
        snapshots,
        full_fold,
        branch_projection_error,
    })
}

/// Front solution branch of the full system, from `eps_range.lo` through the
/// fold and back until the parameter leaves the range.
pub fn full_front_branch(grid: &FhnDiscretization, eps_range: Interval) -> Result<Branch> {
    let eps0 = eps_range.lo;
    let state = solve_fixed_param(grid, &grid.front_guess(), eps0, 1e-10, 100)?;
    let start = BranchPoint { state, param: eps0 };
    let opts = ContinuationOptions {
        ds: 0.02,
        ds_max: 0.05,
        max_steps: 2_000,
        ..Default::default()
    };
    continue_branch(grid, &start, true, eps_range, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::continuation::{find_folds, FiniteDifference};

    #[test]
    fn coarse_pipeline_reproduces_full_fold() {
        // A coarse grid keeps this fast; the shipped grid is exercised by the
        // integration suite.
        let opts = FhnPodOptions {
            dx: 0.4,
            ..Default::default()
        };
        let pipe =
            build_fhn_pod(FhnParams::default(), Interval::new(0.6, 1.2), &opts, None).unwrap();
        let model = &pipe.model;
        assert_eq!(pipe.snapshots.len(), 10);
        assert!(pipe.model.pod.reconstruction_residual < 1e-2);
        let g = model.pod.basis.transpose() * &model.pod.basis;
        assert!((g - nalgebra::DMatrix::identity(8, 8)).amax() < 1e-10);

        // The reduced model, continued from the projection of a branch point,
        // folds close to the full system.
        let k = pipe.branch.points.len() / 3;
        let bp = &pipe.branch.points[k];
        let a0 = model.pod.project(&bp.state)[..4].to_vec();
        let fd = FiniteDifference::new(model.as_ref());
        let folds = find_folds(
            &fd,
            &a0,
            bp.param,
            Interval::new(0.6, 1.2),
            &ContinuationOptions::default(),
        )
        .unwrap();
        let best = folds
            .iter()
            .map(|f| (f.param - pipe.full_fold.param).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(
            best / pipe.full_fold.param < 0.02,
            "reduced fold off by {best}"
        );
    }
}
