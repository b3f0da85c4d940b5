//! Scenario loading and multi-run batches.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{validate_scenario, ScenarioConfig, Violation};
use crate::sim::{self, RunConfig, RunResult, SimError};
use crate::telemetry::RunSummary;

const BUNDLED: &str = include_str!("../scenarios/paper_ntt.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  - {x}")).collect::<Vec<_>>().join("\n")
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let scenario: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let violations = validate_scenario(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid(violations))
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

/// The NTT evaluation scenario shipped with the crate.
pub fn bundled_scenario() -> ScenarioConfig {
    parse_scenario(BUNDLED).expect("bundled scenario is valid")
}

pub fn bundled_scenario_text() -> &'static str {
    BUNDLED
}

/// Every configuration of a results table: the isolated preset, each policy
/// tuple, then the sharing preset.
pub fn all_configs(scenario: &ScenarioConfig) -> Result<Vec<RunConfig>, SimError> {
    let ctl = &scenario.controller;
    let mut names = vec![ctl.isolated_preset.clone()];
    names.extend(ctl.tuples.iter().cloned());
    names.push(ctl.sharing_preset.clone());
    names.iter().map(|n| RunConfig::resolve(scenario, n)).collect()
}

#[derive(Debug, Error)]
#[error("run {config} with seed {seed} failed: {source}")]
pub struct BatchError {
    pub config: String,
    pub seed: u64,
    #[source]
    pub source: SimError,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub result: RunResult,
    pub summary: RunSummary,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Stat::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

/// Seed statistics of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigAggregate {
    pub config: String,
    pub runs: usize,
    pub generated: Stat,
    pub established: Stat,
    pub blocked: Stat,
    pub blocked_by_class: Vec<Stat>,
    pub preemptions: Stat,
    pub preemptions_by_class: Vec<Stat>,
    pub devolutions: Stat,
    pub loans: Stat,
    pub utilization_mean: Stat,
    pub utilization_peak: Stat,
}

impl ConfigAggregate {
    pub fn of(config: &str, summaries: &[&RunSummary]) -> Self {
        let stat = |f: &dyn Fn(&RunSummary) -> f64| Stat::of(summaries.iter().map(|s| f(s)));
        let classes = summaries.first().map_or(0, |s| s.blocked_by_class.len());
        ConfigAggregate {
            config: config.to_string(),
            runs: summaries.len(),
            generated: stat(&|s| s.generated as f64),
            established: stat(&|s| s.established as f64),
            blocked: stat(&|s| s.blocked as f64),
            blocked_by_class: (0..classes).map(|c| stat(&|s| s.blocked_by_class[c] as f64)).collect(),
            preemptions: stat(&|s| s.preemptions as f64),
            preemptions_by_class: (0..classes).map(|c| stat(&|s| s.preemptions_by_class[c] as f64)).collect(),
            devolutions: stat(&|s| s.devolutions as f64),
            loans: stat(&|s| s.loans as f64),
            utilization_mean: stat(&|s| s.utilization_mean),
            utilization_peak: stat(&|s| s.utilization_peak),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    /// Config-major, seed-minor, in the order given.
    pub runs: Vec<RunOutcome>,
    /// One row per configuration, in the order given.
    pub aggregates: Vec<ConfigAggregate>,
}

impl BatchResult {
    pub fn aggregate(&self, config: &str) -> Option<&ConfigAggregate> {
        self.aggregates.iter().find(|a| a.config == config)
    }

    pub fn runs_of<'a>(&'a self, config: &'a str) -> impl Iterator<Item = &'a RunOutcome> + 'a {
        self.runs.iter().filter(move |r| r.result.config == config)
    }
}

/// Runs every (config, seed) pair. Pairs run in parallel on the current
/// rayon pool; results are ordered as the inputs regardless of scheduling.
pub fn run_batch(scenario: &ScenarioConfig, configs: &[RunConfig], seeds: &[u64]) -> Result<BatchResult, BatchError> {
    let pairs: Vec<(&RunConfig, u64)> = configs.iter().flat_map(|c| seeds.iter().map(move |s| (c, *s))).collect();
    let runs: Vec<RunOutcome> = pairs
        .par_iter()
        .map(|(config, seed)| {
            let result = sim::run(scenario, config, *seed).map_err(|source| BatchError {
                config: config.name.clone(),
                seed: *seed,
                source,
            })?;
            let summary = result.summary();
            Ok(RunOutcome { result, summary })
        })
        .collect::<Result<_, BatchError>>()?;
    let aggregates = configs
        .iter()
        .map(|c| {
            let summaries: Vec<&RunSummary> =
                runs.iter().filter(|r| r.result.config == c.name).map(|r| &r.summary).collect();
            ConfigAggregate::of(&c.name, &summaries)
        })
        .collect();
    Ok(BatchResult { runs, aggregates })
}

/// [`run_batch`] on a dedicated pool of `threads` workers.
pub fn run_batch_with_threads(
    scenario: &ScenarioConfig,
    configs: &[RunConfig],
    seeds: &[u64],
    threads: usize,
) -> Result<BatchResult, BatchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| run_batch(scenario, configs, seeds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_shape() {
        let s = bundled_scenario();
        assert_eq!(crate::sim::make_generators(&s, 1).len(), 12);
        assert_eq!(s.presets.len(), 2);
        assert_eq!(s.controller.tuples.len(), 8);
        let names: Vec<String> = all_configs(&s).unwrap().into_iter().map(|c| c.name).collect();
        assert_eq!(names.first().map(String::as_str), Some("MAM"));
        assert_eq!(names.last().map(String::as_str), Some("RDM"));
        assert_eq!(names.len(), 10);
        assert!((s.expected_requests() - 3336.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_documents() {
        let mut v: serde_json::Value = serde_json::from_str(BUNDLED).unwrap();
        v["presets"]["MAM"].as_object_mut().unwrap().remove("bc");
        assert!(matches!(parse_scenario(&v.to_string()), Err(ScenarioError::Parse { .. })));

        let mut v: serde_json::Value = serde_json::from_str(BUNDLED).unwrap();
        v["horizon_s"] = serde_json::json!(3000);
        match parse_scenario(&v.to_string()) {
            Err(ScenarioError::Invalid(violations)) => {
                assert!(violations.iter().any(|x| x.subject == "phases"))
            }
            other => panic!("{other:?}"),
        }

        let err = parse_scenario("{\n  \"name\": 3\n}").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn stats() {
        let s = Stat::of([1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Stat::of([5.0]).std, 0.0);
    }
}
