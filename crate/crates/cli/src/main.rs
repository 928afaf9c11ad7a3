use std::path::PathBuf;
use std::process::ExitCode;

use bifhunter_cli::{
    cmd_compare, cmd_run, cmd_verify, verify_selection, CliError, Outcome, RunOptions,
};
use bifhunter_core::verify::VerifyOptions;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bifhunter",
    version,
    about = "Active-learning search for fold and Hopf bifurcations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    config: PathBuf,
    /// Maximum number of runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Validate and print the resolved configuration without running.
    #[arg(long)]
    dry_run: bool,
    /// Record acquisition wall times in the CSV outputs (not reproducible).
    #[arg(long)]
    wall_time: bool,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            jobs: self.jobs,
            dry_run: self.dry_run,
            wall_time: self.wall_time,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Single run, or an ensemble when the config sets n_runs.
    Run(Common),
    /// Analytic acquisition against Monte Carlo acquisitions on matched seeds.
    Compare(Common),
    /// Monte Carlo oracle and finite-difference property suite.
    Verify {
        /// Run only properties whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// List the selected properties without running them.
        #[arg(long)]
        dry_run: bool,
    },
}

fn finish(res: Result<Outcome, CliError>) -> ExitCode {
    match res {
        Ok(Outcome::DryRun(cfg)) => {
            println!("{cfg}");
            ExitCode::SUCCESS
        }
        Ok(Outcome::Done(s)) => {
            match (s.result.as_ref(), s.abs_param_error) {
                (Some(r), Some(e)) => println!(
                    "{} = {} (|error| {e:.3e}), converged: {}",
                    s.bif_param, r.param, s.converged
                ),
                (Some(r), None) => {
                    println!("{} = {}, converged: {}", s.bif_param, r.param, s.converged)
                }
                _ => println!("first run failed"),
            }
            for m in &s.methods {
                if let Some(e) = m.ensemble.median_abs_error {
                    println!(
                        "{}: {} runs, {} failed, median |error| {e:.3e}",
                        m.method, m.ensemble.n_runs, m.ensemble.n_failed
                    );
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(c) => finish(cmd_run(&c.config, &c.options())),
        Command::Compare(c) => finish(cmd_compare(&c.config, &c.options())),
        Command::Verify {
            filter,
            jobs,
            dry_run,
        } => {
            let selected = verify_selection(filter.as_deref());
            if selected.is_empty() {
                eprintln!(
                    "error: no property matches {:?}",
                    filter.unwrap_or_default()
                );
                return ExitCode::from(2);
            }
            if dry_run {
                for n in selected {
                    println!("{n}");
                }
                return ExitCode::SUCCESS;
            }
            match cmd_verify(filter.as_deref(), jobs, &VerifyOptions::default()) {
                Ok(report) => {
                    print!("{}", report.table());
                    if report.all_passed() {
                        ExitCode::SUCCESS
                    } else {
                        for r in report.results.iter().filter(|r| !r.passed) {
                            eprintln!(
                                "failed: {} measured {:.4e} > bound {:.3e}",
                                r.name, r.measured, r.bound
                            );
                        }
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
