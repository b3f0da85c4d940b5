use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Bandwidth, BehaviorPreset, GBamLinkConfig, LinkId, NodeId, Path, Violation};
use crate::autonomic::{Approach, PolicyTuple};
use crate::gbam;

/// Largest class count the allocation engine is meant for.
pub const MAX_CLASSES: u8 = 8;

/// A complete, self-contained simulation scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub classes: u8,
    pub link_capacity_mbps: Bandwidth,
    /// Optional explicit topology. When empty, the links are the union of
    /// the route links.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkId>,
    pub routes: Vec<Route>,
    pub presets: BTreeMap<String, BehaviorPreset>,
    pub phases: PhaseSchedule,
    pub lsp: LspSection,
    pub horizon_s: f64,
    #[serde(default = "default_window")]
    pub window_s: f64,
    pub controller: ControllerSection,
    pub seeds: Vec<u64>,
}

fn default_window() -> f64 {
    300.0
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub nodes: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LspSection {
    /// Inclusive `[min, max]` range of the uniform bandwidth draw.
    pub bandwidth_mbps: [Bandwidth; 2],
    pub holding_mean_s: f64,
}

/// Piecewise-constant arrival schedule.
///
/// `mean_interarrival[c][p]` is the mean time in seconds between two
/// requests of class `c` from one source during phase `p`; `0` marks the
/// class as inactive in that phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSchedule {
    pub end_times: Vec<f64>,
    pub mean_interarrival: Vec<Vec<f64>>,
}

impl PhaseSchedule {
    pub fn phases(&self) -> usize {
        self.end_times.len()
    }

    pub fn start(&self, phase: usize) -> f64 {
        if phase == 0 {
            0.0
        } else {
            self.end_times[phase - 1]
        }
    }

    pub fn end(&self, phase: usize) -> f64 {
        self.end_times[phase]
    }

    /// Phase containing time `t` (phases are half-open `[start, end)`).
    pub fn phase_at(&self, t: f64) -> Option<usize> {
        self.end_times.iter().position(|end| t < *end)
    }

    /// Mean inter-arrival time of `class` in `phase`, `None` when inactive.
    pub fn mean(&self, class: usize, phase: usize) -> Option<f64> {
        let m = self.mean_interarrival[class][phase];
        (m > 0.0).then_some(m)
    }

    /// Expected number of arrivals of one source of `class` over the whole
    /// schedule.
    pub fn expected_arrivals(&self, class: usize) -> f64 {
        (0..self.phases())
            .filter_map(|p| self.mean(class, p).map(|m| (self.end(p) - self.start(p)) / m))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub monitored_link: LinkId,
    pub approach: Approach,
    /// Preset used while sharing (the RDM-like behavior).
    pub sharing_preset: String,
    /// Preset used while isolating (the MAM-like behavior).
    pub isolated_preset: String,
    /// Preemptions/utilization tuples such as `25/65`.
    #[serde(default)]
    pub tuples: Vec<String>,
}

impl ScenarioConfig {
    pub fn capacity(&self) -> Bandwidth {
        self.link_capacity_mbps
    }

    /// Links of the topology, explicit or derived from the routes.
    pub fn topology(&self) -> BTreeSet<LinkId> {
        if !self.links.is_empty() {
            return self.links.iter().copied().collect();
        }
        self.routes
            .iter()
            .flat_map(|r| r.nodes.windows(2).map(|w| LinkId::new(w[0], w[1])))
            .collect()
    }

    /// Route paths. Only valid on a scenario that passed validation.
    pub fn paths(&self) -> Vec<Arc<Path>> {
        self.routes
            .iter()
            .map(|r| Arc::new(Path::from_nodes(&r.nodes).expect("validated route")))
            .collect()
    }

    /// The link configuration a named preset produces on this scenario's
    /// links.
    pub fn preset_config(&self, name: &str) -> Result<GBamLinkConfig, gbam::GbamError> {
        let preset = self
            .presets
            .get(name)
            .ok_or_else(|| gbam::GbamError::UnknownPreset(name.to_string()))?;
        gbam::build_preset(preset, self.capacity())
    }

    /// Closed-form expected request count over all sources.
    pub fn expected_requests(&self) -> f64 {
        (0..self.classes as usize)
            .map(|c| self.phases.expected_arrivals(c) * self.routes.len() as f64)
            .sum()
    }
}

/// Checks every type invariant of a scenario. An empty list means valid.
pub fn validate_scenario(scenario: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let classes = scenario.classes as usize;
    if scenario.classes == 0 || scenario.classes > MAX_CLASSES {
        out.push(Violation::new(
            "classes",
            format!("class count must be in 1..={MAX_CLASSES}"),
        ));
    }
    if scenario.capacity() <= Bandwidth::ZERO {
        out.push(Violation::new("link_capacity_mbps", "capacity must be positive"));
    }

    if scenario.presets.is_empty() {
        out.push(Violation::new("presets", "no preset defined"));
    }
    for (name, preset) in &scenario.presets {
        if preset.bc.len() != classes {
            out.push(Violation::new(
                format!("preset {name}"),
                format!("has {} classes, scenario has {classes}", preset.bc.len()),
            ));
            continue;
        }
        let violations = preset.validate(scenario.capacity());
        if !violations.is_empty() {
            out.extend(
                violations
                    .into_iter()
                    .map(|v| Violation::new(format!("preset {name}"), v.to_string())),
            );
            continue;
        }
        match gbam::build_preset(preset, scenario.capacity()) {
            Ok(cfg) => out.extend(
                cfg.validate()
                    .into_iter()
                    .map(|v| Violation::new(format!("preset {name}"), v.to_string())),
            ),
            Err(e) => out.push(Violation::new(format!("preset {name}"), e.to_string())),
        }
    }

    let topology = scenario.topology();
    if scenario.routes.is_empty() {
        out.push(Violation::new("routes", "no route defined"));
    }
    for (i, route) in scenario.routes.iter().enumerate() {
        match Path::from_nodes(&route.nodes) {
            Ok(path) => {
                for link in path.links() {
                    if !topology.contains(link) {
                        out.push(Violation::new(
                            format!("route {i}"),
                            format!("uses undeclared link {link}"),
                        ));
                    }
                }
            }
            Err(e) => out.push(Violation::new(format!("route {i}"), e.to_string())),
        }
    }

    let phases = &scenario.phases;
    if phases.end_times.is_empty() {
        out.push(Violation::new("phases", "no phase defined"));
    } else {
        if phases.end_times[0] <= 0.0 {
            out.push(Violation::new("phases", "first phase must end after t = 0"));
        }
        if phases.end_times.windows(2).any(|w| w[0] >= w[1]) {
            out.push(Violation::new("phases", "end times are not strictly increasing"));
        }
        let last = phases.end_times[phases.end_times.len() - 1];
        if last != scenario.horizon_s {
            out.push(Violation::new(
                "phases",
                format!("last phase ends at {last} but the horizon is {}", scenario.horizon_s),
            ));
        }
    }
    if phases.mean_interarrival.len() != classes {
        out.push(Violation::new(
            "phases",
            format!(
                "{} inter-arrival rows for {classes} classes",
                phases.mean_interarrival.len()
            ),
        ));
    }
    for (c, row) in phases.mean_interarrival.iter().enumerate() {
        if row.len() != phases.end_times.len() {
            out.push(Violation::new(
                format!("phases TC{c}"),
                format!("{} values for {} phases", row.len(), phases.end_times.len()),
            ));
        }
        if row.iter().any(|m| !m.is_finite() || *m < 0.0) {
            out.push(Violation::new(format!("phases TC{c}"), "negative or non-finite mean"));
        }
    }

    let [lo, hi] = scenario.lsp.bandwidth_mbps;
    if lo <= Bandwidth::ZERO || lo > hi {
        out.push(Violation::new("lsp", format!("invalid bandwidth range [{lo}, {hi}]")));
    }
    if scenario.lsp.holding_mean_s.is_nan() || scenario.lsp.holding_mean_s <= 0.0 {
        out.push(Violation::new("lsp", "holding time mean must be positive"));
    }
    if scenario.window_s.is_nan() || scenario.window_s <= 0.0 {
        out.push(Violation::new("window_s", "observation window must be positive"));
    }
    if scenario.horizon_s.is_nan() || scenario.horizon_s <= 0.0 {
        out.push(Violation::new("horizon_s", "horizon must be positive"));
    }

    let ctl = &scenario.controller;
    if !topology.contains(&ctl.monitored_link) {
        out.push(Violation::new(
            "controller",
            format!("monitored link {} is not in the topology", ctl.monitored_link),
        ));
    }
    for name in [&ctl.sharing_preset, &ctl.isolated_preset] {
        if !scenario.presets.contains_key(name) {
            out.push(Violation::new("controller", format!("unknown preset {name}")));
        }
    }
    if let Err(e) = ctl.approach.check() {
        out.push(Violation::new("controller", e));
    }
    for t in &ctl.tuples {
        if let Err(e) = t.parse::<PolicyTuple>() {
            out.push(Violation::new("controller", e.to_string()));
        }
    }
    if scenario.seeds.is_empty() {
        out.push(Violation::new("seeds", "at least one seed is required"));
    }
    out
}
