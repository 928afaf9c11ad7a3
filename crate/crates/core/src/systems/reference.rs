//! Reference bifurcation points computed from the true equations, used to
//! score runs. They never see the surrogate.

use serde::{Deserialize, Serialize};

use super::benchmarks::{budworm_branch, budworm_branch_slope};
use super::continuation::{find_folds, ContinuationOptions, FiniteDifference};
use super::reduced::FhnPodPipeline;
use super::{Interval, SystemId, SystemSpec};
use crate::error::{Error, Result};

/// Grid resolution of the budworm fold oracle.
pub const BUDWORM_GRID: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub param: f64,
    pub state: Vec<f64>,
    pub provenance: String,
}

/// Reference bifurcation inside the search domain of `spec`. The reduced
/// FitzHugh-Nagumo system needs its POD pipeline; see [`fhn_reference`].
pub fn reference_point(spec: &SystemSpec) -> Result<ReferencePoint> {
    match spec.id {
        SystemId::Budworm => Ok(budworm_reference(spec.param("k"), spec.state_box[0])),
        SystemId::Brusselator => {
            let a = spec.param("a");
            let b = 1.0 + a * a;
            Ok(ReferencePoint {
                param: b,
                state: vec![a, b / a],
                provenance: "analytic trace condition b = 1 + a^2 at the steady state (a, b/a)".into(),
            })
        }
        SystemId::Cstr | SystemId::Epileptor => continuation_reference(spec),
        SystemId::FhnPodReduced => Err(Error::InvalidInput(
            "the reduced FitzHugh-Nagumo reference comes from the full-system fold of its POD pipeline".into(),
        )),
    }
}

/// Fold of the budworm branch `r(x)` inside `x_range`: minimizer of `|r'(x)|`
/// on a uniform grid.
pub fn budworm_reference(k: f64, x_range: Interval) -> ReferencePoint {
    let step = x_range.width() / (BUDWORM_GRID - 1) as f64;
    let (_, x) = (0..BUDWORM_GRID)
        .map(|i| x_range.lo + step * i as f64)
        .map(|x| (budworm_branch_slope(x, k).abs(), x))
        .fold((f64::INFINITY, x_range.lo), |best, c| {
            if c.0 < best.0 {
                c
            } else {
                best
            }
        });
    ReferencePoint {
        param: budworm_branch(x, k),
        state: vec![x],
        provenance: format!(
            "minimum of |dr/dx| on a {BUDWORM_GRID}-point grid over x in [{}, {}]",
            x_range.lo, x_range.hi
        ),
    }
}

/// First fold of the true equations whose state lies in the search box,
/// found by arclength continuation from steady states at a few parameter
/// values.
fn continuation_reference(spec: &SystemSpec) -> Result<ReferencePoint> {
    let sys = FiniteDifference::new(spec);
    let opts = ContinuationOptions::default();
    let range = spec.bif_param_range;
    let x0: Vec<f64> = spec.state_box.iter().map(|b| b.mid()).collect();
    let inside = |state: &[f64], p: f64| {
        range.contains(p)
            && state
                .iter()
                .zip(&spec.state_box)
                .all(|(v, b)| b.contains(*v))
    };
    for k in 0..=4 {
        let p0 = range.lo + range.width() * k as f64 / 4.0;
        let Ok(folds) = find_folds(&sys, &x0, p0, range.extended(0.5), &opts) else {
            continue;
        };
        if let Some(f) = folds.into_iter().find(|f| inside(&f.state, f.param)) {
            return Ok(ReferencePoint {
                param: f.param,
                state: f.state,
                provenance: "pseudo-arclength continuation of the true equations, fold at the tangent's parameter sign change".into(),
            });
        }
    }
    Err(Error::InvalidInput(format!(
        "no fold of {} found inside the search domain",
        spec.id
    )))
}

/// Full-system fold of the FitzHugh-Nagumo front, with its state given by the
/// leading POD coefficients.
pub fn fhn_reference(pipeline: &FhnPodPipeline) -> ReferencePoint {
    let fold = &pipeline.full_fold;
    let n = pipeline.model.n_leading();
    ReferencePoint {
        param: fold.param,
        state: pipeline.model.pod.project(&fold.state)[..n].to_vec(),
        provenance: "pseudo-arclength continuation of the full finite-difference system".into(),
    }
}
