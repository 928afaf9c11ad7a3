//! Configuration-driven experiment runner: single runs, ensembles,
//! analytic-versus-Monte-Carlo comparisons and the oracle property suite.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use bifhunter_core::acquisition::{AcqMethod, RealizationModel};
use bifhunter_core::bo::{prepare_system, run_ensemble, BoConfig, Ensemble, PreparedSystem};
use bifhunter_core::verify::{run_suite, PropertyResult, VerifyOptions, PROPERTIES};
use serde::Serialize;

use config::{load, ExperimentConfig, LoadedConfig};
use output::{MethodRuns, Summary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Run(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Run(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Upper bound on concurrently executing runs.
    pub jobs: usize,
    /// Validate and print the resolved configuration only.
    pub dry_run: bool,
    /// Fill the `wall_ms` CSV column and write per-iteration timing CSVs.
    /// Timings are not reproducible, so this breaks byte-identical outputs.
    pub wall_time: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            dry_run: false,
            wall_time: false,
        }
    }
}

/// What a command produced.
#[derive(Debug)]
pub enum Outcome {
    /// The resolved configuration, printed instead of running.
    DryRun(String),
    Done(Box<Summary>),
}

fn resolved_json(cfg: &ExperimentConfig) -> Result<String, CliError> {
    serde_json::to_string_pretty(cfg).map_err(|e| CliError::Io(e.to_string()))
}

fn prepare(cfg: &ExperimentConfig) -> Result<PreparedSystem, CliError> {
    prepare_system(&cfg.bo.system, &cfg.bo.fhn_pod)
        .map_err(|e| CliError::Run(format!("system setup failed: {e}")))
}

fn ensemble(
    bo: &BoConfig,
    prep: &PreparedSystem,
    loaded: &LoadedConfig,
    jobs: usize,
) -> Result<Ensemble, CliError> {
    let reference = loaded.config.reference.as_ref().map(|r| r.p_ref);
    run_ensemble(bo, &prep.spec, &loaded.config.seeds(), reference, jobs)
        .map_err(|e| CliError::Run(e.to_string()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

/// Runs the configured search (one run, or an ensemble when `n_runs > 1`)
/// and writes its traces and summary under the output directory.
pub fn cmd_run(config_path: &Path, opts: &RunOptions) -> Result<Outcome, CliError> {
    let loaded = load(config_path)?;
    if opts.dry_run {
        return Ok(Outcome::DryRun(resolved_json(&loaded.config)?));
    }
    let started = Instant::now();
    let cfg = &loaded.config;
    let prep = prepare(cfg)?;
    let mut bo = cfg.bo.clone();
    bo.record_branch |= cfg.report_bifurcation_diagram;
    let ens = ensemble(&bo, &prep, &loaded, opts.jobs)?;
    create_dir(&loaded.output_dir)?;
    let runs = MethodRuns {
        method: "analytic".into(),
        ensemble: ens,
    };
    output::write_run(&loaded, &prep.spec, &runs, opts.wall_time)?;
    let summary = Summary::build(
        "run",
        &loaded,
        &prep.spec,
        std::slice::from_ref(&runs),
        started,
    );
    output::write_summary(&loaded.output_dir, &summary)?;
    Ok(Outcome::Done(Box::new(summary)))
}

/// Method label of a Monte Carlo acquisition with `n` samples.
pub fn mc_label(n: usize) -> String {
    format!("mc{n}")
}

/// Runs the analytic ensemble and one Monte Carlo ensemble per configured
/// sample size on the same seeds.
pub fn cmd_compare(config_path: &Path, opts: &RunOptions) -> Result<Outcome, CliError> {
    let loaded = load(config_path)?;
    let sizes = loaded.config.comparison.clone().ok_or_else(|| {
        CliError::Validation("compare needs a comparison list in the config".into())
    })?;
    if opts.dry_run {
        return Ok(Outcome::DryRun(resolved_json(&loaded.config)?));
    }
    let started = Instant::now();
    let cfg = &loaded.config;
    let prep = prepare(cfg)?;
    let model = match cfg.bo.acquisition.method {
        AcqMethod::MonteCarlo { model, .. } => model,
        AcqMethod::Analytic => RealizationModel::default(),
    };
    let mut methods = Vec::with_capacity(sizes.len() + 1);
    let mut analytic = cfg.bo.clone();
    analytic.acquisition.method = AcqMethod::Analytic;
    methods.push(MethodRuns {
        method: "analytic".into(),
        ensemble: ensemble(&analytic, &prep, &loaded, opts.jobs)?,
    });
    for &n in &sizes {
        let mut mc = cfg.bo.clone();
        mc.acquisition.method = AcqMethod::MonteCarlo {
            n_samples: n,
            model,
        };
        methods.push(MethodRuns {
            method: mc_label(n),
            ensemble: ensemble(&mc, &prep, &loaded, opts.jobs)?,
        });
    }
    create_dir(&loaded.output_dir)?;
    output::write_compare(&loaded, &prep.spec, &methods, opts.wall_time)?;
    let summary = Summary::build("compare", &loaded, &prep.spec, &methods, started);
    output::write_summary(&loaded.output_dir, &summary)?;
    Ok(Outcome::Done(Box::new(summary)))
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub results: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<24} {:>12} {:>10}  {:<6} {}\n",
            "property", "measured", "bound", "status", "detail"
        );
        for r in &self.results {
            s += &format!(
                "{:<24} {:>12.4e} {:>10.3e}  {:<6} {}\n",
                r.name,
                r.measured,
                r.bound,
                if r.passed { "pass" } else { "FAIL" },
                r.detail
            );
        }
        s
    }
}

/// Property names selected by `filter`.
pub fn verify_selection(filter: Option<&str>) -> Vec<&'static str> {
    PROPERTIES
        .iter()
        .copied()
        .filter(|n| filter.is_none_or(|f| n.contains(f)))
        .collect()
}

/// Runs the oracle suite with its fixed seeds.
pub fn cmd_verify(
    filter: Option<&str>,
    jobs: usize,
    opts: &VerifyOptions,
) -> Result<VerifyReport, CliError> {
    let results = run_suite(opts, filter, jobs).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(VerifyReport { results })
}

/// Directory containing the shipped experiment configurations.
pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}
