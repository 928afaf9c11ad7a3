//! Benchmark dynamical systems, the noisy observation model and the adapters
//! that turn timesteppers into vector-field observations.

pub mod benchmarks;
pub mod continuation;
pub mod fhn;
pub mod pod;
pub mod reduced;
pub mod reference;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use benchmarks::{CstrParams, EpileptorParams};
use reduced::ReducedFhn;

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    /// Interval widened by `fraction` of its width on each side.
    pub fn extended(&self, fraction: f64) -> Self {
        let w = fraction * self.width();
        Self::new(self.lo - w, self.hi + w)
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(v: Interval) -> Self {
        [v.lo, v.hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemId {
    Budworm,
    Brusselator,
    #[serde(rename = "CSTR")]
    Cstr,
    Epileptor,
    FhnPodReduced,
}

impl SystemId {
    pub fn state_dim(self) -> usize {
        match self {
            SystemId::Budworm => 1,
            SystemId::Brusselator | SystemId::Cstr => 2,
            SystemId::Epileptor | SystemId::FhnPodReduced => 4,
        }
    }

    pub fn bif_param_name(self) -> &'static str {
        match self {
            SystemId::Budworm => "r",
            SystemId::Brusselator => "b",
            SystemId::Cstr => "Da",
            SystemId::Epileptor => "z",
            SystemId::FhnPodReduced => "eps",
        }
    }

    fn required_params(self) -> &'static [&'static str] {
        match self {
            SystemId::Budworm => &["k"],
            SystemId::Brusselator => &["a"],
            SystemId::Cstr => &["B", "beta", "T_c"],
            SystemId::Epileptor => &["I_ext1", "c1", "d1", "I_ext2", "tau2", "a", "b", "m", "a2"],
            SystemId::FhnPodReduced => &["D_u", "D_v", "alpha1", "alpha0"],
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SystemId::Budworm => "Budworm",
            SystemId::Brusselator => "Brusselator",
            SystemId::Cstr => "CSTR",
            SystemId::Epileptor => "Epileptor",
            SystemId::FhnPodReduced => "FhnPodReduced",
        };
        f.write_str(s)
    }
}

/// Independent variable along which the solution branch is parametrized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchVariable {
    State(usize),
    Parameter,
}

/// Serializable description of a benchmark system and its search domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub system: SystemId,
    pub fixed_params: BTreeMap<String, f64>,
    pub bif_param_range: Interval,
    /// May be left empty for the reduced FitzHugh-Nagumo model, whose box is
    /// derived from the POD coefficients of the computed branch.
    #[serde(default)]
    pub state_box: Vec<Interval>,
    pub branch_variable: BranchVariable,
}

/// A validated system: equations, fixed parameters and search domain.
#[derive(Clone)]
pub struct SystemSpec {
    pub id: SystemId,
    pub state_dim: usize,
    pub fixed_params: BTreeMap<String, f64>,
    pub bif_param_name: String,
    pub bif_param_range: Interval,
    pub state_box: Vec<Interval>,
    pub branch_variable: BranchVariable,
    reduced: Option<Arc<ReducedFhn>>,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("id", &self.id)
            .field("state_dim", &self.state_dim)
            .field("fixed_params", &self.fixed_params)
            .field("bif_param_range", &self.bif_param_range)
            .field("state_box", &self.state_box)
            .field("branch_variable", &self.branch_variable)
            .field("reduced_model", &self.reduced.is_some())
            .finish()
    }
}

impl SystemSpec {
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        let id = cfg.system;
        let state_dim = id.state_dim();
        for name in id.required_params() {
            match cfg.fixed_params.get(*name) {
                Some(v) if v.is_finite() => {}
                Some(_) => {
                    return Err(Error::InvalidInput(format!(
                        "fixed parameter {name} of {id} is not finite"
                    )))
                }
                None => {
                    return Err(Error::InvalidInput(format!(
                        "fixed parameter {name} missing for {id}"
                    )))
                }
            }
        }
        if let Some(extra) = cfg
            .fixed_params
            .keys()
            .find(|k| !id.required_params().contains(&k.as_str()))
        {
            return Err(Error::InvalidInput(format!(
                "unknown fixed parameter {extra} for {id}"
            )));
        }
        if !cfg.bif_param_range.is_valid() {
            return Err(Error::InvalidInput(format!(
                "bif_param_range [{}, {}] is empty or not finite",
                cfg.bif_param_range.lo, cfg.bif_param_range.hi
            )));
        }
        let box_required = id != SystemId::FhnPodReduced || !cfg.state_box.is_empty();
        if box_required {
            if cfg.state_box.len() != state_dim {
                return Err(Error::DimensionMismatch {
                    what: "state_box",
                    expected: state_dim,
                    got: cfg.state_box.len(),
                });
            }
            if let Some(i) = cfg.state_box.iter().position(|b| !b.is_valid()) {
                return Err(Error::InvalidInput(format!(
                    "state_box interval {i} is empty or not finite"
                )));
            }
        }
        match cfg.branch_variable {
            BranchVariable::State(i) if i >= state_dim => {
                return Err(Error::InvalidInput(format!(
                    "branch variable State({i}) out of range for state dimension {state_dim}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            id,
            state_dim,
            fixed_params: cfg.fixed_params.clone(),
            bif_param_name: id.bif_param_name().to_string(),
            bif_param_range: cfg.bif_param_range,
            state_box: cfg.state_box.clone(),
            branch_variable: cfg.branch_variable,
            reduced: None,
        })
    }

    pub fn to_config(&self) -> SystemConfig {
        SystemConfig {
            system: self.id,
            fixed_params: self.fixed_params.clone(),
            bif_param_range: self.bif_param_range,
            state_box: self.state_box.clone(),
            branch_variable: self.branch_variable,
        }
    }

    /// Default configuration of a benchmark: the published fixed parameters
    /// and a search domain bracketing the bifurcation of interest.
    pub fn default_config(id: SystemId) -> SystemConfig {
        let params = |kv: &[(&str, f64)]| {
            kv.iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect::<BTreeMap<_, _>>()
        };
        let iv = Interval::new;
        match id {
            SystemId::Budworm => SystemConfig {
                system: id,
                fixed_params: params(&[("k", 15.0)]),
                bif_param_range: iv(0.18, 0.36),
                state_box: vec![iv(4.5, 10.5)],
                branch_variable: BranchVariable::State(0),
            },
            SystemId::Brusselator => SystemConfig {
                system: id,
                fixed_params: params(&[("a", 1.5)]),
                bif_param_range: iv(2.2, 4.2),
                state_box: vec![iv(1.0, 2.0), iv(1.2, 3.0)],
                branch_variable: BranchVariable::Parameter,
            },
            SystemId::Cstr => SystemConfig {
                system: id,
                fixed_params: params(&[("B", 10.0), ("beta", 0.1), ("T_c", -0.04)]),
                bif_param_range: iv(0.025, 0.065),
                state_box: vec![iv(0.04, 0.22), iv(0.2, 2.2)],
                branch_variable: BranchVariable::State(0),
            },
            SystemId::Epileptor => SystemConfig {
                system: id,
                fixed_params: params(&[
                    ("I_ext1", 3.1),
                    ("c1", 1.0),
                    ("d1", 5.0),
                    ("I_ext2", 0.45),
                    ("tau2", 10.0),
                    ("a", 1.0),
                    ("b", 3.0),
                    ("m", 0.5),
                    ("a2", 6.0),
                ]),
                bif_param_range: iv(2.5, 4.2),
                state_box: vec![iv(-2.0, -0.6), iv(-20.0, 0.0), iv(-0.6, 0.3), iv(-0.2, 1.5)],
                branch_variable: BranchVariable::State(0),
            },
            SystemId::FhnPodReduced => SystemConfig {
                system: id,
                fixed_params: params(&[
                    ("D_u", 1.0),
                    ("D_v", 4.0),
                    ("alpha1", 2.0),
                    ("alpha0", -0.03),
                ]),
                bif_param_range: iv(0.6, 1.2),
                state_box: Vec::new(),
                branch_variable: BranchVariable::State(0),
            },
        }
    }

    pub fn default_for(id: SystemId) -> Self {
        Self::from_config(&Self::default_config(id)).expect("default configs are valid")
    }

    pub fn param(&self, name: &str) -> f64 {
        self.fixed_params[name]
    }

    pub fn cstr_params(&self) -> CstrParams {
        CstrParams {
            heat: self.param("B"),
            beta: self.param("beta"),
            coolant: self.param("T_c"),
        }
    }

    pub fn epileptor_params(&self) -> EpileptorParams {
        EpileptorParams {
            i_ext1: self.param("I_ext1"),
            c1: self.param("c1"),
            d1: self.param("d1"),
            i_ext2: self.param("I_ext2"),
            tau2: self.param("tau2"),
            a: self.param("a"),
            b: self.param("b"),
            m: self.param("m"),
            a2: self.param("a2"),
        }
    }

    /// Attaches the reduced FitzHugh-Nagumo model. When the spec has no state
    /// box yet, the model's derived box is adopted.
    pub fn with_reduced_model(mut self, model: Arc<ReducedFhn>) -> Result<Self> {
        if self.id != SystemId::FhnPodReduced {
            return Err(Error::InvalidInput(format!(
                "{} does not take a reduced model",
                self.id
            )));
        }
        if model.n_leading() != self.state_dim {
            return Err(Error::DimensionMismatch {
                what: "reduced model leading modes",
                expected: self.state_dim,
                got: model.n_leading(),
            });
        }
        if self.state_box.is_empty() {
            self.state_box = model.suggested_box.clone();
        }
        self.reduced = Some(model);
        Ok(self)
    }

    pub fn reduced_model(&self) -> Option<&Arc<ReducedFhn>> {
        self.reduced.as_ref()
    }

    /// Search box widened by half its width on every side; the admissible
    /// region for Newton iterates and CSTR evaluations.
    pub fn extended_box(&self) -> Vec<Interval> {
        self.state_box.iter().map(|b| b.extended(0.5)).collect()
    }
}

/// A system whose vector field can be evaluated (or measured) pointwise.
pub trait VectorField: Sync {
    fn state_dim(&self) -> usize;
    fn eval(&self, x: &[f64], p: f64) -> Result<Vec<f64>>;
}

impl VectorField for SystemSpec {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn eval(&self, x: &[f64], p: f64) -> Result<Vec<f64>> {
        eval_vector_field(self, x, p)
    }
}

/// Evaluates `f(x; p)` for a benchmark system.
pub fn eval_vector_field(spec: &SystemSpec, x: &[f64], p: f64) -> Result<Vec<f64>> {
    if x.len() != spec.state_dim {
        return Err(Error::DimensionMismatch {
            what: "state",
            expected: spec.state_dim,
            got: x.len(),
        });
    }
    if !p.is_finite() {
        return Err(Error::NonFinite {
            component: spec.state_dim,
            context: format!("parameter {}", spec.bif_param_name),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            component: i,
            context: "state".into(),
        });
    }
    let value = match spec.id {
        SystemId::Budworm => vec![benchmarks::budworm(x[0], p, spec.param("k"))],
        SystemId::Brusselator => benchmarks::brusselator(x, p, spec.param("a")).to_vec(),
        SystemId::Cstr => {
            if let Some(b) = spec.state_box.get(1) {
                let dom = b.extended(0.5);
                if !dom.contains(x[1]) {
                    return Err(Error::OutOfDomain {
                        component: 1,
                        value: x[1],
                        lo: dom.lo,
                        hi: dom.hi,
                    });
                }
            }
            benchmarks::cstr(x, p, &spec.cstr_params()).to_vec()
        }
        SystemId::Epileptor => benchmarks::epileptor(x, p, &spec.epileptor_params()).to_vec(),
        SystemId::FhnPodReduced => match &spec.reduced {
            Some(model) => model.eval(x, p)?,
            None => {
                return Err(Error::InvalidInput(
                    "the reduced FitzHugh-Nagumo system needs a POD model attached".into(),
                ))
            }
        },
    };
    check_finite(&value, &format!("vector field of {}", spec.id))?;
    Ok(value)
}

pub(crate) fn check_finite(v: &[f64], context: &str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(component) => Err(Error::NonFinite {
            component,
            context: context.to_string(),
        }),
        None => Ok(()),
    }
}

/// One measurement `g(x; p) = f(x; p) + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub state: Vec<f64>,
    pub param: f64,
    pub value: Vec<f64>,
    pub noise_sigma: f64,
}

impl Observation {
    /// Joint input `(x, p)`.
    pub fn input(&self) -> Vec<f64> {
        let mut z = self.state.clone();
        z.push(self.param);
        z
    }
}

/// Measures the vector field with i.i.d. Gaussian noise of standard deviation
/// `sigma` on every component.
pub fn observe<V, R>(field: &V, x: &[f64], p: f64, sigma: f64, rng: &mut R) -> Result<Observation>
where
    V: VectorField + ?Sized,
    R: Rng + ?Sized,
{
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noise sigma must be finite and nonnegative, got {sigma}"
        )));
    }
    let mut value = field.eval(x, p)?;
    if sigma > 0.0 {
        for v in value.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
    Ok(Observation {
        state: x.to_vec(),
        param: p,
        value,
        noise_sigma: sigma,
    })
}

/// Growing set of observations of one system.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationDataset {
    pub observations: Vec<Observation>,
}

impl ObservationDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if let Some(first) = self.observations.first() {
            if obs.state.len() != first.state.len() || obs.value.len() != first.value.len() {
                return Err(Error::DimensionMismatch {
                    what: "observation",
                    expected: first.state.len(),
                    got: obs.state.len(),
                });
            }
        }
        check_finite(&obs.value, "observed value")?;
        self.observations.push(obs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.observations.first().map_or(0, |o| o.state.len())
    }

    /// Joint inputs as an `N x (n + 1)` matrix.
    pub fn inputs(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        DMatrix::from_fn(self.len(), n + 1, |i, j| {
            let o = &self.observations[i];
            if j < n {
                o.state[j]
            } else {
                o.param
            }
        })
    }

    /// Observed values as an `N x n` matrix.
    pub fn targets(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.state_dim(), |i, c| {
            self.observations[i].value[c]
        })
    }
}

/// Forward-difference estimate of the vector field from one timestepper call.
pub fn euler_rhs_from_stepper<F>(stepper: F, x: &[f64], p: f64, dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!(
            "timestep must be positive, got {dt}"
        )));
    }
    let next = stepper(x, p)?;
    if next.len() != x.len() {
        return Err(Error::DimensionMismatch {
            what: "stepper output",
            expected: x.len(),
            got: next.len(),
        });
    }
    Ok(next.iter().zip(x).map(|(a, b)| (a - b) / dt).collect())
}

/// Vector field estimated from a short-time stepper by a forward difference.
pub struct EulerStepperField<F> {
    pub stepper: F,
    pub dim: usize,
    pub dt: f64,
}

impl<F> VectorField for EulerStepperField<F>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], p: f64) -> Result<Vec<f64>> {
        euler_rhs_from_stepper(&self.stepper, x, p, self.dt)
    }
}

/// Displacement `h(x; p) - x` of a map. Surrogates of this field have the
/// fixed points of `h` as roots and Jacobian `Dh - I`.
pub struct MapDisplacement<F> {
    pub map: F,
    pub dim: usize,
}

impl<F> VectorField for MapDisplacement<F>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], p: f64) -> Result<Vec<f64>> {
        let next = (self.map)(x, p)?;
        if next.len() != x.len() {
            return Err(Error::DimensionMismatch {
                what: "map output",
                expected: x.len(),
                got: next.len(),
            });
        }
        Ok(next.iter().zip(x).map(|(a, b)| a - b).collect())
    }
}

/// Any closure `(x, p) -> f(x; p)` with a declared state dimension.
pub struct FnField<F> {
    pub f: F,
    pub dim: usize,
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], p: f64) -> Result<Vec<f64>> {
        (self.f)(x, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapCriticality {
    FoldMap,
    NeimarkSacker,
}

/// Distance of the closest multiplier to the map bifurcation condition.
pub fn map_criticality(eigs: &[Complex64], kind: MapCriticality) -> Result<f64> {
    if eigs.is_empty() {
        return Err(Error::InvalidInput("empty eigenvalue list".into()));
    }
    let dist = |l: &Complex64| match kind {
        MapCriticality::FoldMap => (l - Complex64::new(1.0, 0.0)).norm(),
        MapCriticality::NeimarkSacker => (l.norm_sqr() - 1.0).abs(),
    };
    Ok(eigs.iter().map(dist).fold(f64::INFINITY, f64::min))
}
