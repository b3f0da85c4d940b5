use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use bamsim::batch::{self, BatchResult, ScenarioError};
use bamsim::gbam::oracle;
use bamsim::model::ScenarioConfig;
use bamsim::report;
use bamsim::sim::RunConfig;
use clap::{Args, Parser, Subcommand};

/// G-BAM DS-TE simulator with autonomic BAM switching.
#[derive(Parser)]
#[command(name = "bamsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate named configurations (presets or `P/U` tuples).
    Run {
        #[command(flatten)]
        common: Common,
        /// Preset name or controller tuple such as `25/65`. Repeatable.
        #[arg(long = "config", required = true)]
        configs: Vec<String>,
    },
    /// Simulate every configuration of the scenario: isolated preset, each
    /// tuple, sharing preset.
    Batch {
        #[command(flatten)]
        common: Common,
        /// Run all configurations (currently the only batch mode).
        #[arg(long, required = true)]
        all: bool,
    },
    /// Compare the engine against the constraint-form RDM and MAM oracles.
    OracleCheck {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Print the bundled scenario.
    ShowScenario,
}

#[derive(Args)]
struct Common {
    /// Scenario file; the bundled NTT scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Comma-separated seeds; the scenario's seeds when omitted.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write one NDJSON event log per run.
    #[arg(long)]
    events: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn load(path: &Option<PathBuf>) -> Result<ScenarioConfig, ScenarioError> {
    match path {
        Some(p) => batch::load_scenario(p),
        None => Ok(batch::bundled_scenario()),
    }
}

fn execute(common: &Common, scenario: &ScenarioConfig, configs: Vec<RunConfig>) -> Result<()> {
    let seeds = if common.seeds.is_empty() { scenario.seeds.clone() } else { common.seeds.clone() };
    let result = if common.threads == 0 {
        batch::run_batch(scenario, &configs, &seeds)
    } else {
        batch::run_batch_with_threads(scenario, &configs, &seeds, common.threads)
    }?;
    let files = report::emit_reports(&result, &common.out, common.events)
        .with_context(|| format!("writing reports to {}", common.out.display()))?;
    print_table(&result);
    println!("wrote {} files to {}", files.len(), common.out.display());
    Ok(())
}

fn print_table(result: &BatchResult) {
    println!(
        "{:<8} {:>5} {:>9} {:>9} {:>8} {:>9} {:>8} {:>8} {:>7}",
        "config", "runs", "generated", "blocked", "blk TC2", "preempt", "devolv", "loans", "util"
    );
    for a in &result.aggregates {
        println!(
            "{:<8} {:>5} {:>9.1} {:>9.1} {:>8.1} {:>9.1} {:>8.1} {:>8.1} {:>7.3}",
            a.config,
            a.runs,
            a.generated.mean,
            a.blocked.mean,
            a.blocked_by_class.last().map_or(0.0, |s| s.mean),
            a.preemptions.mean,
            a.devolutions.mean,
            a.loans.mean,
            a.utilization_mean.mean,
        );
    }
}

enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        if e.is::<ScenarioError>() {
            Failure::Validation(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, configs } => {
            let scenario = load(&common.scenario)?;
            let configs = configs
                .iter()
                .map(|c| RunConfig::resolve(&scenario, c))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Validation(e.into()))?;
            execute(&common, &scenario, configs)?;
        }
        Command::Batch { common, all } => {
            let scenario = load(&common.scenario)?;
            if !all {
                return Err(Failure::Validation(anyhow::anyhow!("batch needs --all")));
            }
            let configs = batch::all_configs(&scenario).map_err(|e| Failure::Validation(e.into()))?;
            execute(&common, &scenario, configs)?;
        }
        Command::OracleCheck { trials, seed } => {
            let report = oracle::equivalence_check(trials, seed);
            println!(
                "trials {}  requests {}  blocks {}  preemptions {}  mismatches {}",
                report.trials,
                report.requests,
                report.blocks,
                report.preemptions,
                report.mismatches.len()
            );
            if let Some(m) = report.mismatches.first() {
                return Err(Failure::Runtime(anyhow::anyhow!("first mismatch: {m:?}")));
            }
        }
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!("{}: valid ({} routes, {} presets, {} tuples)", s.name, s.routes.len(), s.presets.len(), s.controller.tuples.len());
        }
        Command::ShowScenario => print!("{}", batch::bundled_scenario_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
