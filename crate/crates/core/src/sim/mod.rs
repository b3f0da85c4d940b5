//! Discrete-event simulation of one (scenario, configuration, seed) run.

mod arrivals;
mod log;
mod queue;

use std::collections::BTreeMap;

use thiserror::Error;

pub use arrivals::{make_generators, Generator};
pub use log::{LogEntry, LogEvent, PreemptionCause};
pub use queue::{EventKind, EventQueue};

use crate::autonomic::{self, Action, AutonomicError, ControllerPolicy, PlannedStep, PolicyTuple, WindowObservation};
use crate::gbam::{GbamError, ReclaimKind};
use crate::model::{GBamLinkConfig, LinkId, LspId, LspRequest, LspState, ScenarioConfig};
use crate::network::{Network, NetworkError, SetupOutcome, VictimRecord};
use crate::telemetry::{summarize, MetricsWindow, RunSummary, Telemetry};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("`{0}` is neither a preset of the scenario nor a `P/U` policy tuple")]
    UnknownConfig(String),
    #[error(transparent)]
    Gbam(#[from] GbamError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Autonomic(#[from] AutonomicError),
}

/// A BAM configuration to simulate: a static preset, or the controller
/// starting from its sharing preset.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub initial_preset: String,
    pub controller: Option<ControllerPolicy>,
}

impl RunConfig {
    pub fn preset(name: &str) -> Self {
        RunConfig { name: name.to_string(), initial_preset: name.to_string(), controller: None }
    }

    pub fn controlled(name: &str, policy: ControllerPolicy) -> Self {
        RunConfig {
            name: name.to_string(),
            initial_preset: policy.sharing_preset.clone(),
            controller: Some(policy),
        }
    }

    /// A preset name of the scenario, or a `P/U` tuple using the scenario's
    /// controller section.
    pub fn resolve(scenario: &ScenarioConfig, name: &str) -> Result<Self, SimError> {
        if scenario.presets.contains_key(name) {
            return Ok(RunConfig::preset(name));
        }
        let tuple: PolicyTuple = name.parse().map_err(|_| SimError::UnknownConfig(name.to_string()))?;
        let policy = ControllerPolicy::from_tuple(tuple, &scenario.controller, scenario.window_s);
        Ok(RunConfig::controlled(&tuple.to_string(), policy))
    }
}

/// One behavior change decided by the controller.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeChange {
    pub time: f64,
    pub from: String,
    pub to: String,
    pub approach: String,
    pub window_preemptions: u64,
    pub window_utilization: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: String,
    pub seed: u64,
    pub monitored_link: LinkId,
    pub classes: usize,
    pub log: Vec<LogEntry>,
    pub windows: Vec<MetricsWindow>,
    pub modes: Vec<ModeChange>,
    /// Instants at which telemetry saw a link above capacity.
    pub capacity_violations: u64,
}

impl RunResult {
    pub fn summary(&self) -> RunSummary {
        summarize(&self.windows, self.monitored_link, self.classes)
    }
}

struct Run<'a> {
    scenario: &'a ScenarioConfig,
    paths: Vec<std::sync::Arc<crate::model::Path>>,
    behaviors: BTreeMap<String, GBamLinkConfig>,
    network: Network,
    queue: EventQueue,
    telemetry: Telemetry,
    log: Vec<LogEntry>,
    generators: Vec<Generator>,
    next_lsp: u64,
    mode: String,
    policy: Option<ControllerPolicy>,
    transition: u64,
    steps: Vec<PlannedStep>,
    modes: Vec<ModeChange>,
    /// Set while soft steps left unfunded bandwidth behind.
    overhang: bool,
}

impl Run<'_> {
    fn check_overhang(&mut self, t: f64) {
        if self.overhang && self.network.overhang().is_zero() {
            self.overhang = false;
            self.emit(t, LogEvent::OverhangCleared);
        }
    }

    fn emit(&mut self, t: f64, event: LogEvent) {
        let entry = LogEntry { t, event };
        self.telemetry.record(&entry);
        self.log.push(entry);
    }

    fn schedule_arrival(&mut self, gen: usize, now: f64) {
        if let Some(t) = self.generators[gen].next_arrival(&self.scenario.phases, now) {
            self.queue.push(t, EventKind::Arrival(gen));
        }
    }

    fn victim_events(&mut self, t: f64, victims: &[VictimRecord], cause: PreemptionCause) {
        for v in victims {
            let event = match v.kind {
                ReclaimKind::Preemption => LogEvent::Preempted { lsp: v.lsp, class: v.class, link: v.link, cause },
                ReclaimKind::Devolution => LogEvent::Devolved { lsp: v.lsp, class: v.class, link: v.link },
            };
            self.emit(t, event);
        }
    }

    fn arrival(&mut self, t: f64, gen: usize) -> Result<(), SimError> {
        let horizon = self.scenario.horizon_s;
        let g = &mut self.generators[gen];
        let (class, route) = (g.class, g.route);
        let bandwidth = g.draw_bandwidth(self.scenario.lsp.bandwidth_mbps);
        let holding = g.draw_holding(self.scenario.lsp.holding_mean_s);
        self.next_lsp += 1;
        let id = LspId(self.next_lsp);
        self.emit(t, LogEvent::Arrival { lsp: id, class, bandwidth, route, holding });
        let request = LspRequest {
            id,
            class,
            bandwidth,
            route,
            path: self.paths[route].clone(),
            arrival_time: t,
            holding_time: holding,
        };
        match self.network.setup_lsp(request, t)? {
            SetupOutcome::Established { victims, loan_link } => {
                self.victim_events(t, &victims, PreemptionCause::Sharing);
                self.emit(t, LogEvent::Established { lsp: id, loan_link });
                if t + holding <= horizon {
                    self.queue.push(t + holding, EventKind::Departure(id));
                }
            }
            SetupOutcome::Blocked { link } => self.emit(t, LogEvent::Blocked { lsp: id, class, link }),
        }
        self.check_overhang(t);
        self.schedule_arrival(gen, t);
        Ok(())
    }

    fn departure(&mut self, t: f64, id: LspId) -> Result<(), SimError> {
        // Departures of preempted or devolved LSPs are dropped here.
        if self.network.lsp(id).map(|l| l.state) == Some(LspState::Active) {
            self.network.teardown_lsp(id, LspState::Departed)?;
            self.emit(t, LogEvent::Departed { lsp: id });
            self.check_overhang(t);
        }
        Ok(())
    }

    fn window_tick(&mut self, t: f64, index: usize) {
        let start = index as f64 * self.scenario.window_s;
        self.emit(t, LogEvent::WindowClosed { index, start });
        if t < self.scenario.horizon_s {
            let next = (t + self.scenario.window_s).min(self.scenario.horizon_s);
            self.queue.push(next, EventKind::WindowTick(index + 1));
            if self.policy.is_some() {
                self.queue.push(next, EventKind::ControllerEval(index + 1));
            }
        }
    }

    fn controller_eval(&mut self, t: f64, index: usize) -> Result<(), SimError> {
        let policy = self.policy.clone().expect("controller events only with a policy");
        let window = self.telemetry.windows().last().expect("window closed before evaluation");
        let obs = WindowObservation {
            preemptions: window.totals().preemptions,
            utilization: window.link_utilization(policy.monitored_link).unwrap_or(0.0),
        };
        let action = autonomic::analyze(&policy.default_rules(), &obs, &self.mode);
        self.emit(
            t,
            LogEvent::ControllerEval {
                window: index,
                mode: self.mode.clone(),
                preemptions: obs.preemptions,
                utilization: obs.utilization,
                action: action.to_string(),
            },
        );
        // Nothing is left to react to at the horizon.
        if action == Action::None || t >= self.scenario.horizon_s {
            return Ok(());
        }
        let current = self.network.config().expect("network has links").clone();
        let plan = autonomic::plan(&action, policy.approach, &current, &self.behaviors, t)?;
        self.emit(
            t,
            LogEvent::ModeSwitch {
                from: self.mode.clone(),
                to: plan.target_mode.clone(),
                approach: policy.approach.to_string(),
                steps: plan.steps.len() as u32,
            },
        );
        self.modes.push(ModeChange {
            time: t,
            from: self.mode.clone(),
            to: plan.target_mode.clone(),
            approach: policy.approach.to_string(),
            window_preemptions: obs.preemptions,
            window_utilization: obs.utilization,
        });
        self.mode = plan.target_mode;
        // A new plan supersedes whatever is left of the previous one.
        self.transition += 1;
        self.steps = plan.steps;
        for (i, step) in self.steps.iter().enumerate() {
            if step.at <= self.scenario.horizon_s {
                self.queue.push(step.at, EventKind::ApplyStep { transition: self.transition, step: i });
            }
        }
        Ok(())
    }

    fn apply_step(&mut self, t: f64, transition: u64, step: usize) {
        if transition != self.transition {
            return;
        }
        let step = self.steps[step].clone();
        let report = autonomic::execute(&step, &mut self.network);
        self.victim_events(t, &report.forced_preemptions, PreemptionCause::Forced);
        self.emit(
            t,
            LogEvent::ConfigApplied {
                mode: self.mode.clone(),
                step: step.index,
                of: step.of,
                forced_preemptions: report.forced_preemptions.len(),
                overhang: report.overhang,
            },
        );
        self.overhang |= !report.overhang.is_zero();
        self.check_overhang(t);
    }
}

/// Simulates `config` on `scenario` with master seed `seed`. The scenario
/// must have passed validation.
pub fn run(scenario: &ScenarioConfig, config: &RunConfig, seed: u64) -> Result<RunResult, SimError> {
    let mut behaviors = BTreeMap::new();
    for name in scenario.presets.keys() {
        behaviors.insert(name.clone(), scenario.preset_config(name)?);
    }
    let initial = behaviors
        .get(&config.initial_preset)
        .ok_or_else(|| SimError::UnknownConfig(config.initial_preset.clone()))?;
    let network = Network::new(scenario.topology(), initial);
    let mut run = Run {
        scenario,
        paths: scenario.paths(),
        network,
        behaviors,
        queue: EventQueue::new(),
        telemetry: Telemetry::new(scenario),
        log: Vec::new(),
        generators: make_generators(scenario, seed),
        next_lsp: 0,
        mode: config.initial_preset.clone(),
        policy: config.controller.clone(),
        transition: 0,
        steps: Vec::new(),
        modes: Vec::new(),
        overhang: false,
    };
    for g in 0..run.generators.len() {
        run.schedule_arrival(g, 0.0);
    }
    let first_tick = scenario.window_s.min(scenario.horizon_s);
    run.queue.push(first_tick, EventKind::WindowTick(0));
    if run.policy.is_some() {
        run.queue.push(first_tick, EventKind::ControllerEval(0));
    }

    while let Some((t, kind)) = run.queue.pop() {
        match kind {
            EventKind::Departure(id) => run.departure(t, id)?,
            EventKind::Arrival(g) => run.arrival(t, g)?,
            EventKind::WindowTick(i) => run.window_tick(t, i),
            EventKind::ControllerEval(i) => run.controller_eval(t, i)?,
            EventKind::ApplyStep { transition, step } => run.apply_step(t, transition, step),
        }
    }

    let horizon = scenario.horizon_s;
    for id in run.network.active_ids() {
        run.network.teardown_lsp(id, LspState::HorizonEnd)?;
        run.emit(horizon, LogEvent::HorizonEnd { lsp: id });
    }

    Ok(RunResult {
        config: config.name.clone(),
        seed,
        monitored_link: scenario.controller.monitored_link,
        classes: scenario.classes as usize,
        capacity_violations: run.telemetry.capacity_violations(),
        windows: run.telemetry.into_windows(),
        log: run.log,
        modes: run.modes,
    })
}
