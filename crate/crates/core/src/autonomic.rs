//! Knowledge and execution planes of the BAM controller.
//!
//! After every closed observation window the controller looks at the
//! window's preemption count and the utilization of a monitored link,
//! picks an [`Action`] from an ordered rule table, turns it into a
//! [`TransitionPlan`] (one immediate step for HARD, K interpolated steps for
//! SOFT) and applies each step to every link of the network.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gbam::interpolate;
use crate::model::{Bandwidth, ControllerSection, GBamLinkConfig, LinkId, Violation};
use crate::network::{Network, VictimRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AutonomicError {
    #[error("invalid policy tuple `{0}`, expected `<preemptions>/<utilization %>` such as `25/65`")]
    BadTuple(String),
    #[error("BAM optimization is not supported")]
    Unsupported,
    #[error("no action to plan")]
    NothingToPlan,
    #[error("unknown behavior `{0}`")]
    UnknownBehavior(String),
}

/// How a configuration change is rolled out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "UPPERCASE")]
pub enum Approach {
    /// Apply the target at once, preempting what no longer fits.
    Hard,
    /// Move linearly to the target in `steps` steps over `transition_s`
    /// seconds, never preempting.
    Soft { transition_s: f64, steps: u32 },
}

impl Approach {
    pub fn check(&self) -> Result<(), String> {
        match *self {
            Approach::Hard => Ok(()),
            Approach::Soft { transition_s, steps } => {
                if steps == 0 {
                    Err("SOFT approach needs at least one step".into())
                } else if !transition_s.is_finite() || transition_s < 0.0 {
                    Err("SOFT transition time must be finite and non-negative".into())
                } else {
                    Ok(())
                }
            }
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Approach::Hard => f.write_str("HARD"),
            Approach::Soft { transition_s, steps } => write!(f, "SOFT({transition_s}s/{steps})"),
        }
    }
}

/// The `P/U` shorthand: switch to isolation at `P` window preemptions, back
/// to sharing when the monitored utilization falls below `U` percent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PolicyTuple {
    pub max_preemptions: u64,
    pub min_utilization_percent: u32,
}

impl FromStr for PolicyTuple {
    type Err = AutonomicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AutonomicError::BadTuple(s.to_string());
        let (p, u) = s.split_once('/').ok_or_else(bad)?;
        let max_preemptions = p.trim().parse().map_err(|_| bad())?;
        let min_utilization_percent: u32 = u.trim().parse().map_err(|_| bad())?;
        if min_utilization_percent == 0 || min_utilization_percent >= 100 {
            return Err(bad());
        }
        Ok(PolicyTuple { max_preemptions, min_utilization_percent })
    }
}

impl fmt::Display for PolicyTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.max_preemptions, self.min_utilization_percent)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerPolicy {
    /// Observation window in seconds.
    pub window: f64,
    pub max_preemptions: u64,
    /// Utilization fraction in (0, 1).
    pub min_utilization: f64,
    pub monitored_link: LinkId,
    pub approach: Approach,
    /// Behavior used while sharing (RDM-like); the starting mode.
    pub sharing_preset: String,
    /// Behavior used while isolating (MAM-like).
    pub isolated_preset: String,
}

impl ControllerPolicy {
    pub fn from_tuple(tuple: PolicyTuple, section: &ControllerSection, window: f64) -> Self {
        ControllerPolicy {
            window,
            max_preemptions: tuple.max_preemptions,
            min_utilization: tuple.min_utilization_percent as f64 / 100.0,
            monitored_link: section.monitored_link,
            approach: section.approach,
            sharing_preset: section.sharing_preset.clone(),
            isolated_preset: section.isolated_preset.clone(),
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.window.is_nan() || self.window <= 0.0 {
            out.push(Violation::new("policy", "window must be positive"));
        }
        if !(self.min_utilization > 0.0 && self.min_utilization < 1.0) {
            out.push(Violation::new("policy", "utilization threshold must be in (0, 1)"));
        }
        if let Err(e) = self.approach.check() {
            out.push(Violation::new("policy", e));
        }
        out
    }

    /// The two default rules: sharing -> isolated on too many preemptions,
    /// isolated -> sharing on low utilization.
    pub fn default_rules(&self) -> Vec<SwitchRule> {
        vec![
            SwitchRule {
                mode: self.sharing_preset.clone(),
                condition: Condition::PreemptionsAtLeast(self.max_preemptions),
                target: self.isolated_preset.clone(),
            },
            SwitchRule {
                mode: self.isolated_preset.clone(),
                condition: Condition::UtilizationBelow(self.min_utilization),
                target: self.sharing_preset.clone(),
            },
        ]
    }
}

/// What the controller sees of a closed window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowObservation {
    /// Network-wide preemptions in the window.
    pub preemptions: u64,
    /// Time-weighted utilization of the monitored link.
    pub utilization: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Condition {
    PreemptionsAtLeast(u64),
    UtilizationBelow(f64),
}

impl Condition {
    pub fn holds(&self, obs: &WindowObservation) -> bool {
        match *self {
            Condition::PreemptionsAtLeast(p) => obs.preemptions >= p,
            Condition::UtilizationBelow(u) => obs.utilization < u,
        }
    }
}

/// "While in `mode`, if `condition` holds, switch to `target`."
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchRule {
    pub mode: String,
    pub condition: Condition,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    SwitchBehavior { target: String },
    /// Move to a new set of bandwidth constraints (a custom behavior).
    ReconfigureBCs { name: String, config: GBamLinkConfig },
    /// Searching for better constraints. Extension point only: planning it
    /// fails with [`AutonomicError::Unsupported`].
    Optimize,
    None,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::SwitchBehavior { target } => write!(f, "switch:{target}"),
            Action::ReconfigureBCs { name, .. } => write!(f, "reconfigure:{name}"),
            Action::Optimize => f.write_str("optimize"),
            Action::None => f.write_str("none"),
        }
    }
}

/// First rule of the table that applies to `mode` and holds.
pub fn analyze(rules: &[SwitchRule], obs: &WindowObservation, mode: &str) -> Action {
    rules
        .iter()
        .find(|r| r.mode == mode && r.condition.holds(obs))
        .map(|r| Action::SwitchBehavior { target: r.target.clone() })
        .unwrap_or(Action::None)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedStep {
    /// Absolute simulation time of the step.
    pub at: f64,
    /// 1-based step index.
    pub index: u32,
    pub of: u32,
    pub config: GBamLinkConfig,
    pub hard: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionPlan {
    pub target_mode: String,
    pub steps: Vec<PlannedStep>,
}

/// Turns an action into scheduled configuration steps.
///
/// Reconfiguration always goes through a single hard step. Switching uses
/// the policy approach; SOFT steps `i = 1..=K` land at `now + i * T / K`
/// with the config interpolated `i / K` of the way to the target.
pub fn plan(
    action: &Action,
    approach: Approach,
    current: &GBamLinkConfig,
    behaviors: &BTreeMap<String, GBamLinkConfig>,
    now: f64,
) -> Result<TransitionPlan, AutonomicError> {
    let hard = |target_mode: String, config: GBamLinkConfig| TransitionPlan {
        target_mode,
        steps: vec![PlannedStep { at: now, index: 1, of: 1, config, hard: true }],
    };
    match action {
        Action::None => Err(AutonomicError::NothingToPlan),
        Action::Optimize => Err(AutonomicError::Unsupported),
        Action::ReconfigureBCs { name, config } => Ok(hard(name.clone(), config.clone())),
        Action::SwitchBehavior { target } => {
            let config = behaviors
                .get(target)
                .ok_or_else(|| AutonomicError::UnknownBehavior(target.clone()))?;
            match approach {
                Approach::Hard => Ok(hard(target.clone(), config.clone())),
                Approach::Soft { transition_s, steps } => Ok(TransitionPlan {
                    target_mode: target.clone(),
                    steps: (1..=steps)
                        .map(|i| PlannedStep {
                            at: now + transition_s * i as f64 / steps as f64,
                            index: i,
                            of: steps,
                            config: interpolate(current, config, i, steps),
                            hard: false,
                        })
                        .collect(),
                }),
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExecutionReport {
    /// LSPs preempted by a hard step. Always empty for soft steps.
    pub forced_preemptions: Vec<VictimRecord>,
    /// Network-wide overhang left after the step.
    pub overhang: Bandwidth,
}

/// Applies one planned step to every link of the network.
pub fn execute(step: &PlannedStep, network: &mut Network) -> ExecutionReport {
    if step.hard {
        let forced = network.apply_config_hard(&step.config);
        ExecutionReport { forced_preemptions: forced, overhang: network.overhang() }
    } else {
        let reports = network.apply_config_soft_step(&step.config);
        ExecutionReport {
            forced_preemptions: Vec::new(),
            overhang: reports.values().map(|r| r.overhang).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbam::build_preset;
    use crate::model::{BcTable, BehaviorPreset, PresetKind};

    fn policy(p: u64, u: f64) -> ControllerPolicy {
        ControllerPolicy {
            window: 300.0,
            max_preemptions: p,
            min_utilization: u,
            monitored_link: LinkId::new(0, 2),
            approach: Approach::Hard,
            sharing_preset: "RDM".into(),
            isolated_preset: "MAM".into(),
        }
    }

    fn behaviors() -> BTreeMap<String, GBamLinkConfig> {
        let cap = Bandwidth::from_mbps(622.0);
        let mut m = BTreeMap::new();
        m.insert(
            "RDM".to_string(),
            build_preset(&BehaviorPreset::new(PresetKind::Rdm, BcTable::Percent(vec![100.0, 60.0, 30.0])), cap).unwrap(),
        );
        m.insert(
            "MAM".to_string(),
            build_preset(&BehaviorPreset::new(PresetKind::Mam, BcTable::Percent(vec![40.0, 30.0, 30.0])), cap).unwrap(),
        );
        m
    }

    #[test]
    fn tuple_syntax() {
        let t: PolicyTuple = "25/65".parse().unwrap();
        assert_eq!(t, PolicyTuple { max_preemptions: 25, min_utilization_percent: 65 });
        assert_eq!(t.to_string(), "25/65");
        for bad in ["25", "a/65", "25/0", "25/100", "25/x"] {
            assert!(bad.parse::<PolicyTuple>().is_err(), "{bad}");
        }
    }

    #[test]
    fn analyze_defaults() {
        let rules = policy(25, 0.65).default_rules();
        let obs = |p, u| WindowObservation { preemptions: p, utilization: u };
        assert_eq!(
            analyze(&rules, &obs(27, 0.99), "RDM"),
            Action::SwitchBehavior { target: "MAM".into() }
        );
        assert_eq!(
            analyze(&rules, &obs(0, 0.60), "MAM"),
            Action::SwitchBehavior { target: "RDM".into() }
        );
        assert_eq!(analyze(&rules, &obs(10, 0.60), "RDM"), Action::None);
        assert_eq!(analyze(&rules, &obs(25, 0.70), "MAM"), Action::None);
        // The threshold itself triggers.
        assert_eq!(
            analyze(&rules, &obs(25, 0.99), "RDM"),
            Action::SwitchBehavior { target: "MAM".into() }
        );
    }

    #[test]
    fn hard_plan_is_one_immediate_step() {
        let b = behaviors();
        let p = plan(&Action::SwitchBehavior { target: "MAM".into() }, Approach::Hard, &b["RDM"], &b, 600.0).unwrap();
        assert_eq!(p.steps.len(), 1);
        assert_eq!(p.steps[0].at, 600.0);
        assert!(p.steps[0].hard);
        assert_eq!(p.steps[0].config, b["MAM"]);
    }

    #[test]
    fn soft_plan_interpolates() {
        let b = behaviors();
        let approach = Approach::Soft { transition_s: 300.0, steps: 5 };
        let p = plan(&Action::SwitchBehavior { target: "RDM".into() }, approach, &b["MAM"], &b, 900.0).unwrap();
        let times: Vec<f64> = p.steps.iter().map(|s| s.at).collect();
        assert_eq!(times, vec![960.0, 1020.0, 1080.0, 1140.0, 1200.0]);
        // Private portion of pool 0 shrinks 248.8 -> 0 linearly (floored).
        let privates: Vec<i64> = p.steps.iter().map(|s| s.config.pools[0].private.tenths()).collect();
        assert_eq!(privates, vec![1990, 1492, 995, 497, 0]);
        assert_eq!(p.steps.last().unwrap().config, b["RDM"]);
        assert!(p.steps.iter().all(|s| !s.hard));
    }

    #[test]
    fn reconfigure_and_optimize() {
        let b = behaviors();
        let custom = b["MAM"].clone();
        let p = plan(
            &Action::ReconfigureBCs { name: "MAM2".into(), config: custom.clone() },
            Approach::Soft { transition_s: 100.0, steps: 4 },
            &b["MAM"],
            &b,
            0.0,
        )
        .unwrap();
        assert_eq!(p.steps.len(), 1);
        assert!(p.steps[0].hard);
        assert_eq!(plan(&Action::Optimize, Approach::Hard, &custom, &b, 0.0), Err(AutonomicError::Unsupported));
        assert_eq!(plan(&Action::None, Approach::Hard, &custom, &b, 0.0), Err(AutonomicError::NothingToPlan));
    }

    #[test]
    fn policy_validation() {
        assert!(policy(25, 0.65).validate().is_empty());
        assert_eq!(policy(25, 1.2).validate().len(), 1);
    }
}
