//! Experiment configuration files.

use std::path::{Path, PathBuf};

use bifhunter_core::bo::BoConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable replacing the configured base seed.
pub const SEED_OVERRIDE_VAR: &str = "BIFHUNTER_SEED_OVERRIDE";

/// Known bifurcation point of the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub p_ref: f64,
    #[serde(default)]
    pub x_ref: Option<Vec<f64>>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub bo: BoConfig,
    /// Relative paths resolve against the working directory.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub reference: Option<Reference>,
    /// Monte Carlo sample sizes compared against the analytic acquisition.
    #[serde(default)]
    pub comparison: Option<Vec<usize>>,
    /// Write the mean roots along the candidate grid of every iteration.
    #[serde(default)]
    pub report_bifurcation_diagram: bool,
    /// Ensemble size; runs use seeds `seed, seed + 1, ...`.
    #[serde(default = "one")]
    pub n_runs: usize,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.bo
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if self.n_runs < 1 {
            return Err(CliError::Validation("n_runs must be at least 1".into()));
        }
        if let Some(sizes) = &self.comparison {
            if sizes.is_empty() {
                return Err(CliError::Validation(
                    "comparison needs at least one sample size".into(),
                ));
            }
            if let Some(n) = sizes.iter().find(|&&n| n < 2) {
                return Err(CliError::Validation(format!(
                    "comparison sample sizes must be at least 2, got {n}"
                )));
            }
        }
        if let Some(r) = &self.reference {
            if !r.p_ref.is_finite() {
                return Err(CliError::Validation(
                    "reference p_ref must be finite".into(),
                ));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(CliError::Validation("output_dir must not be empty".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_runs as u64)
            .map(|i| self.bo.seed.wrapping_add(i))
            .collect()
    }
}

/// A parsed and validated configuration with its resolved output directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub output_dir: PathBuf,
    /// Seed taken from [`SEED_OVERRIDE_VAR`], if set.
    pub seed_override: Option<u64>,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let invalid =
        |e: String| CliError::Validation(format!("invalid config {}: {e}", path.display()));
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
    let mut config: ExperimentConfig =
        serde_json::from_value(raw.clone()).map_err(|e| invalid(e.to_string()))?;
    // `deny_unknown_fields` does not apply through `flatten`.
    let known = serde_json::to_value(&config).map_err(|e| invalid(e.to_string()))?;
    if let (Some(raw), Some(known)) = (raw.as_object(), known.as_object()) {
        if let Some(k) = raw.keys().find(|k| !known.contains_key(*k)) {
            return Err(invalid(format!("unknown field `{k}`")));
        }
    }
    let seed_override = match std::env::var(SEED_OVERRIDE_VAR) {
        Ok(v) => Some(v.trim().parse::<u64>().map_err(|_| {
            CliError::Validation(format!("{SEED_OVERRIDE_VAR} must be an integer, got {v:?}"))
        })?),
        Err(_) => None,
    };
    if let Some(s) = seed_override {
        config.bo.seed = s;
    }
    config.validate()?;
    let output_dir = config.output_dir.clone();
    Ok(LoadedConfig {
        config,
        output_dir,
        seed_override,
    })
}
