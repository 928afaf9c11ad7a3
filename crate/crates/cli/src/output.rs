//! Trace CSVs and summary JSON.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use bifhunter_core::bo::{quantile, BoResult, BoTrace, CurvePoint, Ensemble, EnsembleSummary};
use bifhunter_core::systems::SystemSpec;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LoadedConfig, Reference};
use crate::CliError;

/// One acquisition method's ensemble.
#[derive(Debug)]
pub struct MethodRuns {
    pub method: String,
    pub ensemble: Ensemble,
}

impl MethodRuns {
    fn traces(&self) -> impl Iterator<Item = (u64, &BoTrace)> {
        self.ensemble
            .seeds
            .iter()
            .zip(&self.ensemble.runs)
            .map(|(s, r)| {
                (
                    *s,
                    match r {
                        Ok(t) => t,
                        Err(f) => f.partial.as_ref(),
                    },
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    /// Error message of a failed run.
    pub error: Option<String>,
    pub result: Option<BoResult>,
    pub iterations: usize,
    pub abs_param_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: Vec<RunSummary>,
    pub ensemble: EnsembleSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub n: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
}

/// Everything that varies between otherwise identical executions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub timestamp_unix_s: u64,
    pub total_wall_s: f64,
    pub version: String,
    /// Per-iteration acquisition wall time by method.
    pub acquisition_wall_ms: BTreeMap<String, TimingStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub system: String,
    pub bif_param: String,
    pub seed_override: Option<u64>,
    pub reference: Option<Reference>,
    /// Outcome of the first seed's run with the first method.
    pub result: Option<BoResult>,
    pub converged: bool,
    pub iterations: usize,
    pub abs_param_error: Option<f64>,
    pub methods: Vec<MethodSummary>,
    pub config: ExperimentConfig,
    pub metadata: Metadata,
}

fn timing(m: &MethodRuns) -> TimingStats {
    let mut all: Vec<f64> = m
        .traces()
        .flat_map(|(_, t)| t.acq_wall_ms.iter().copied())
        .collect();
    all.sort_by(f64::total_cmp);
    let n = all.len();
    TimingStats {
        n,
        mean_ms: if n == 0 {
            0.0
        } else {
            all.iter().sum::<f64>() / n as f64
        },
        median_ms: if n == 0 { 0.0 } else { quantile(&all, 0.5) },
    }
}

impl Summary {
    pub fn build(
        command: &str,
        loaded: &LoadedConfig,
        spec: &SystemSpec,
        methods: &[MethodRuns],
        started: Instant,
    ) -> Self {
        let cfg = &loaded.config;
        let p_ref = cfg.reference.as_ref().map(|r| r.p_ref);
        let method_summaries: Vec<MethodSummary> = methods
            .iter()
            .map(|m| MethodSummary {
                method: m.method.clone(),
                runs: m
                    .ensemble
                    .seeds
                    .iter()
                    .zip(&m.ensemble.runs)
                    .map(|(&seed, r)| match r {
                        Ok(t) => {
                            let result = t.result.clone();
                            RunSummary {
                                seed,
                                error: None,
                                abs_param_error: p_ref
                                    .zip(result.as_ref())
                                    .map(|(p, r)| (r.param - p).abs()),
                                iterations: t.iterations.len(),
                                result,
                            }
                        }
                        Err(f) => RunSummary {
                            seed,
                            error: Some(f.error.to_string()),
                            result: None,
                            iterations: f.partial.iterations.len(),
                            abs_param_error: None,
                        },
                    })
                    .collect(),
                ensemble: m.ensemble.summary.clone(),
            })
            .collect();
        let first = &method_summaries[0].runs[0];
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            command: command.into(),
            system: spec.id.to_string(),
            bif_param: spec.bif_param_name.clone(),
            seed_override: loaded.seed_override,
            reference: cfg.reference.clone(),
            result: first.result.clone(),
            converged: first.result.as_ref().is_some_and(|r| r.converged),
            iterations: first.iterations,
            abs_param_error: first.abs_param_error,
            config: cfg.clone(),
            metadata: Metadata {
                timestamp_unix_s: timestamp,
                total_wall_s: started.elapsed().as_secs_f64(),
                version: env!("CARGO_PKG_VERSION").into(),
                acquisition_wall_ms: methods
                    .iter()
                    .map(|m| (m.method.clone(), timing(m)))
                    .collect(),
            },
            methods: method_summaries,
        }
    }
}

fn io<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Io(format!("cannot write {}: {e}", path.display()))
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), CliError> {
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(summary).map_err(io(&path))?;
    std::fs::write(&path, text + "\n").map_err(io(&path))
}

/// Shortest round-trip formatting; empty for missing values.
fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn trace_header(n: usize, with_method: bool) -> Vec<String> {
    let mut h = Vec::new();
    if with_method {
        h.push("method".to_string());
    }
    h.push("iter".into());
    h.extend((0..n).map(|i| format!("x{i}")));
    h.push("p".into());
    h.extend((0..n).map(|i| format!("g{i}")));
    for c in ["delta", "lcb", "fallback", "wall_ms"] {
        h.push(c.into());
    }
    h
}

fn trace_rows(trace: &BoTrace, method: Option<&str>, wall_time: bool) -> Vec<Vec<String>> {
    trace
        .iterations
        .iter()
        .enumerate()
        .map(|(k, it)| {
            let mut row = Vec::new();
            if let Some(m) = method {
                row.push(m.to_string());
            }
            row.push(it.iter.to_string());
            row.extend(it.point.iter().map(|v| num(*v)));
            row.extend(it.observation.iter().map(|v| num(*v)));
            row.push(opt(it.delta));
            row.push(opt(it.acquisition.as_ref().map(|a| a.lcb)));
            row.push(it.fallback_used.to_string());
            row.push(if wall_time {
                opt(trace.acq_wall_ms.get(k).copied())
            } else {
                String::new()
            });
            row
        })
        .collect()
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(io(path))?;
    w.write_record(header).map_err(io(path))?;
    for r in rows {
        w.write_record(r).map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

fn write_branch(dir: &Path, seed: u64, n: usize, trace: &BoTrace) -> Result<(), CliError> {
    let mut header = vec!["iter".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.push("p".into());
    let rows: Vec<Vec<String>> = trace
        .iterations
        .iter()
        .flat_map(|it| {
            it.branch.iter().map(move |z| {
                let mut row = vec![it.iter.to_string()];
                row.extend(z.iter().map(|v| num(*v)));
                row
            })
        })
        .collect();
    write_csv(&dir.join(format!("branch_seed{seed}.csv")), &header, &rows)
}

fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<(), CliError> {
    let header: Vec<String> = ["iter", "median", "q25", "q75"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|c| vec![c.iter.to_string(), num(c.median), num(c.q25), num(c.q75)])
        .collect();
    write_csv(path, &header, &rows)
}

/// `trace_seed<seed>.csv` per run, plus the branch samples and the error
/// curve when requested.
pub fn write_run(
    loaded: &LoadedConfig,
    spec: &SystemSpec,
    runs: &MethodRuns,
    wall_time: bool,
) -> Result<(), CliError> {
    let dir = &loaded.output_dir;
    let n = spec.state_dim;
    for (seed, trace) in runs.traces() {
        write_csv(
            &dir.join(format!("trace_seed{seed}.csv")),
            &trace_header(n, false),
            &trace_rows(trace, None, wall_time),
        )?;
        if loaded.config.report_bifurcation_diagram {
            write_branch(dir, seed, n, trace)?;
        }
    }
    if let Some(curve) = &runs.ensemble.summary.error_curve {
        write_curve(&dir.join("error_curve.csv"), curve)?;
    }
    Ok(())
}

/// Per-seed traces of all methods, the per-method convergence curves side
/// by side, and per-iteration timings when `wall_time` is set.
pub fn write_compare(
    loaded: &LoadedConfig,
    spec: &SystemSpec,
    methods: &[MethodRuns],
    wall_time: bool,
) -> Result<(), CliError> {
    let dir = &loaded.output_dir;
    let n = spec.state_dim;
    for (k, &seed) in methods[0].ensemble.seeds.iter().enumerate() {
        let rows: Vec<Vec<String>> = methods
            .iter()
            .flat_map(|m| {
                let t = match &m.ensemble.runs[k] {
                    Ok(t) => t,
                    Err(f) => f.partial.as_ref(),
                };
                trace_rows(t, Some(&m.method), wall_time)
            })
            .collect();
        write_csv(
            &dir.join(format!("compare_seed{seed}.csv")),
            &trace_header(n, true),
            &rows,
        )?;
    }
    // Median |p - p_ref| per iteration, or the median parameter without a
    // reference.
    let p_ref = loaded.config.reference.as_ref().map(|r| r.p_ref);
    let curves: Vec<Vec<f64>> = methods
        .iter()
        .map(|m| {
            let traces: Vec<&BoTrace> = m
                .traces()
                .map(|(_, t)| t)
                .filter(|t| !t.iterations.is_empty())
                .collect();
            let len = traces.iter().map(|t| t.iterations.len()).max().unwrap_or(0);
            (0..len)
                .map(|i| {
                    let mut v: Vec<f64> = traces
                        .iter()
                        .map(|t| {
                            let p = t.iterations[i.min(t.iterations.len() - 1)].point[n];
                            p_ref.map_or(p, |r| (p - r).abs())
                        })
                        .collect();
                    v.sort_by(f64::total_cmp);
                    quantile(&v, 0.5)
                })
                .collect()
        })
        .collect();
    let mut header = vec!["iter".to_string()];
    header.extend(methods.iter().map(|m| m.method.clone()));
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let rows: Vec<Vec<String>> = (0..len)
        .map(|i| {
            let mut row = vec![(i + 1).to_string()];
            row.extend(
                curves
                    .iter()
                    .map(|c| c.get(i).map(|v| num(*v)).unwrap_or_default()),
            );
            row
        })
        .collect();
    write_csv(&dir.join("compare_curves.csv"), &header, &rows)?;
    if wall_time {
        let header: Vec<String> = ["method", "iter", "n", "median_ms", "q25_ms", "q75_ms"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for m in methods {
            let traces: Vec<&BoTrace> = m.traces().map(|(_, t)| t).collect();
            let len = traces
                .iter()
                .map(|t| t.acq_wall_ms.len())
                .max()
                .unwrap_or(0);
            for i in 0..len {
                let mut v: Vec<f64> = traces
                    .iter()
                    .filter_map(|t| t.acq_wall_ms.get(i).copied())
                    .collect();
                v.sort_by(f64::total_cmp);
                rows.push(vec![
                    m.method.clone(),
                    (i + 1).to_string(),
                    v.len().to_string(),
                    num(quantile(&v, 0.5)),
                    num(quantile(&v, 0.25)),
                    num(quantile(&v, 0.75)),
                ]);
            }
        }
        write_csv(&dir.join("compare_timing.csv"), &header, &rows)?;
    }
    Ok(())
}
