//! Windowed metrics per link and traffic class.
//!
//! [`Telemetry`] is a pure fold over the event log. Counters are attributed
//! as follows: a request to the first link of its route, a blocking to the
//! first link that refused, a preemption or devolution to the link whose
//! admission selected the victim, and a loan to the first link funding the
//! LSP with an LTH draw. Network totals are the sums over links.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClassId, LinkId, LspId, ScenarioConfig};
use crate::sim::{LogEntry, LogEvent};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TelemetryError {
    #[error("window {0} is not closed yet")]
    OpenWindow(usize),
    #[error("link {0} is not monitored")]
    UnknownLink(LinkId),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub requests: u64,
    pub blockings: u64,
    pub preemptions: u64,
    pub devolutions: u64,
    pub loans: u64,
}

impl Counts {
    fn add(&mut self, other: &Counts) {
        self.requests += other.requests;
        self.blockings += other.blockings;
        self.preemptions += other.preemptions;
        self.devolutions += other.devolutions;
        self.loans += other.loans;
    }
}

/// Metrics of one (link, class) pair over a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowCell {
    pub link: LinkId,
    pub class: ClassId,
    #[serde(flatten)]
    pub counts: Counts,
    /// Time-weighted share of link capacity reserved by the class.
    pub utilization: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsWindow {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    /// Link-major, class-minor.
    pub cells: Vec<WindowCell>,
}

impl MetricsWindow {
    /// Network totals of the window.
    pub fn totals(&self) -> Counts {
        let mut c = Counts::default();
        for cell in &self.cells {
            c.add(&cell.counts);
        }
        c
    }

    pub fn class_totals(&self, class: ClassId) -> Counts {
        let mut c = Counts::default();
        for cell in self.cells.iter().filter(|x| x.class == class) {
            c.add(&cell.counts);
        }
        c
    }

    /// Utilization of a link summed over classes.
    pub fn link_utilization(&self, link: LinkId) -> Option<f64> {
        let mut cells = self.cells.iter().filter(|c| c.link == link).peekable();
        cells.peek()?;
        Some(cells.map(|c| c.utilization).sum())
    }
}

#[derive(Clone, Copy, Debug)]
struct Held {
    class: usize,
    tenths: i64,
    route: usize,
}

#[derive(Clone, Debug)]
pub struct Telemetry {
    classes: usize,
    capacity: i64,
    links: Vec<LinkId>,
    link_index: BTreeMap<LinkId, usize>,
    routes: Vec<Vec<usize>>,
    pending: BTreeMap<LspId, Held>,
    active: BTreeMap<LspId, Held>,
    /// Reserved tenths of Mbps per (link, class).
    usage: Vec<i64>,
    /// Integral of `usage` since the window opened, in tenths * seconds.
    integral: Vec<f64>,
    counts: Vec<Counts>,
    last_t: f64,
    windows: Vec<MetricsWindow>,
    capacity_violations: u64,
    order_violations: u64,
}

impl Telemetry {
    pub fn new(scenario: &ScenarioConfig) -> Self {
        let links: Vec<LinkId> = scenario.topology().into_iter().collect();
        let link_index: BTreeMap<LinkId, usize> = links.iter().enumerate().map(|(i, l)| (*l, i)).collect();
        let routes = scenario
            .paths()
            .iter()
            .map(|p| p.links().iter().map(|l| link_index[l]).collect())
            .collect();
        let classes = scenario.classes as usize;
        let cells = links.len() * classes;
        Telemetry {
            classes,
            capacity: scenario.capacity().tenths(),
            links,
            link_index,
            routes,
            pending: BTreeMap::new(),
            active: BTreeMap::new(),
            usage: vec![0; cells],
            integral: vec![0.0; cells],
            counts: vec![Counts::default(); cells],
            last_t: 0.0,
            windows: Vec::new(),
            capacity_violations: 0,
            order_violations: 0,
        }
    }

    fn cell(&self, link: LinkId, class: ClassId) -> usize {
        self.link_index[&link] * self.classes + class.index()
    }

    fn advance(&mut self, t: f64) {
        if t < self.last_t {
            self.order_violations += 1;
            return;
        }
        let dt = t - self.last_t;
        if dt > 0.0 {
            for (acc, u) in self.integral.iter_mut().zip(&self.usage) {
                *acc += *u as f64 * dt;
            }
        }
        self.last_t = t;
    }

    fn hold(&mut self, held: Held, sign: i64) {
        for &l in &self.routes[held.route] {
            self.usage[l * self.classes + held.class] += sign * held.tenths;
            if sign > 0 {
                let used: i64 = self.usage[l * self.classes..(l + 1) * self.classes].iter().sum();
                if used > self.capacity {
                    self.capacity_violations += 1;
                }
            }
        }
    }

    fn end(&mut self, lsp: LspId) {
        if let Some(h) = self.active.remove(&lsp) {
            self.hold(h, -1);
        }
    }

    pub fn record(&mut self, entry: &LogEntry) {
        self.advance(entry.t);
        match &entry.event {
            LogEvent::Arrival { lsp, class, bandwidth, route, .. } => {
                let held = Held { class: class.index(), tenths: bandwidth.tenths(), route: *route };
                self.pending.insert(*lsp, held);
                let ingress = self.routes[*route][0];
                self.counts[ingress * self.classes + held.class].requests += 1;
            }
            LogEvent::Established { lsp, loan_link } => {
                if let Some(held) = self.pending.remove(lsp) {
                    self.active.insert(*lsp, held);
                    self.hold(held, 1);
                    if let Some(l) = loan_link {
                        let i = self.link_index[l] * self.classes + held.class;
                        self.counts[i].loans += 1;
                    }
                }
            }
            LogEvent::Blocked { lsp, class, link } => {
                self.pending.remove(lsp);
                let i = self.cell(*link, *class);
                self.counts[i].blockings += 1;
            }
            LogEvent::Preempted { lsp, class, link, .. } => {
                let i = self.cell(*link, *class);
                self.counts[i].preemptions += 1;
                self.end(*lsp);
            }
            LogEvent::Devolved { lsp, class, link } => {
                let i = self.cell(*link, *class);
                self.counts[i].devolutions += 1;
                self.end(*lsp);
            }
            LogEvent::Departed { lsp } | LogEvent::HorizonEnd { lsp } => self.end(*lsp),
            LogEvent::WindowClosed { index, start } => self.close(*index, *start, entry.t),
            LogEvent::ControllerEval { .. }
            | LogEvent::ModeSwitch { .. }
            | LogEvent::ConfigApplied { .. }
            | LogEvent::OverhangCleared => {}
        }
    }

    fn close(&mut self, index: usize, start: f64, end: f64) {
        let span = (end - start) * self.capacity as f64;
        let cells = (0..self.integral.len())
            .map(|i| WindowCell {
                link: self.links[i / self.classes],
                class: ClassId((i % self.classes) as u8),
                counts: self.counts[i],
                utilization: if span > 0.0 { self.integral[i] / span } else { 0.0 },
            })
            .collect();
        self.windows.push(MetricsWindow { index, start, end, cells });
        self.integral.iter_mut().for_each(|x| *x = 0.0);
        self.counts.iter_mut().for_each(|c| *c = Counts::default());
    }

    pub fn windows(&self) -> &[MetricsWindow] {
        &self.windows
    }

    pub fn into_windows(self) -> Vec<MetricsWindow> {
        self.windows
    }

    /// Utilization of `link` over closed window `window`.
    pub fn utilization(&self, link: LinkId, window: usize) -> Result<f64, TelemetryError> {
        let w = self.windows.get(window).ok_or(TelemetryError::OpenWindow(window))?;
        w.link_utilization(link).ok_or(TelemetryError::UnknownLink(link))
    }

    /// Instants at which some link carried more than its capacity. Always
    /// zero for logs produced by the simulator.
    pub fn capacity_violations(&self) -> u64 {
        self.capacity_violations
    }

    /// Entries whose time went backwards.
    pub fn order_violations(&self) -> u64 {
        self.order_violations
    }
}

/// Recomputes the windows of a run from its log.
pub fn replay(scenario: &ScenarioConfig, log: &[LogEntry]) -> Vec<MetricsWindow> {
    let mut t = Telemetry::new(scenario);
    for e in log {
        t.record(e);
    }
    t.into_windows()
}

/// Network totals of a run, the shape of one results-table column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub generated: u64,
    pub established: u64,
    pub blocked: u64,
    pub blocked_by_class: Vec<u64>,
    pub preemptions: u64,
    pub preemptions_by_class: Vec<u64>,
    pub devolutions: u64,
    pub loans: u64,
    /// Time-weighted mean utilization of the monitored link.
    pub utilization_mean: f64,
    /// Highest window utilization of the monitored link.
    pub utilization_peak: f64,
}

pub fn summarize(windows: &[MetricsWindow], monitored: LinkId, classes: usize) -> RunSummary {
    let mut total = Counts::default();
    let mut by_class = vec![Counts::default(); classes];
    let (mut area, mut span, mut peak) = (0.0, 0.0, 0.0f64);
    for w in windows {
        total.add(&w.totals());
        for (c, acc) in by_class.iter_mut().enumerate() {
            acc.add(&w.class_totals(ClassId(c as u8)));
        }
        let u = w.link_utilization(monitored).unwrap_or(0.0);
        area += u * (w.end - w.start);
        span += w.end - w.start;
        peak = peak.max(u);
    }
    RunSummary {
        generated: total.requests,
        established: total.requests - total.blockings,
        blocked: total.blockings,
        blocked_by_class: by_class.iter().map(|c| c.blockings).collect(),
        preemptions: total.preemptions,
        preemptions_by_class: by_class.iter().map(|c| c.preemptions).collect(),
        devolutions: total.devolutions,
        loans: total.loans,
        utilization_mean: if span > 0.0 { area / span } else { 0.0 },
        utilization_peak: peak,
    }
}

/// Event counts taken straight from a log, independent of windowing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LogTally {
    pub arrivals: u64,
    pub established: u64,
    pub blocked: u64,
    pub preempted: u64,
    pub devolved: u64,
    pub loans: u64,
    pub departed: u64,
    pub horizon_end: u64,
}

impl LogTally {
    pub fn of(log: &[LogEntry]) -> Self {
        let mut t = LogTally::default();
        for e in log {
            match &e.event {
                LogEvent::Arrival { .. } => t.arrivals += 1,
                LogEvent::Established { loan_link, .. } => {
                    t.established += 1;
                    t.loans += loan_link.is_some() as u64;
                }
                LogEvent::Blocked { .. } => t.blocked += 1,
                LogEvent::Preempted { .. } => t.preempted += 1,
                LogEvent::Devolved { .. } => t.devolved += 1,
                LogEvent::Departed { .. } => t.departed += 1,
                LogEvent::HorizonEnd { .. } => t.horizon_end += 1,
                _ => {}
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Bandwidth;

    fn scenario() -> ScenarioConfig {
        let mut s = crate::batch::bundled_scenario();
        s.routes.truncate(1);
        s.routes[0].nodes = vec![0, 2];
        s
    }

    fn at(t: f64, event: LogEvent) -> LogEntry {
        LogEntry { t, event }
    }

    fn arrival(t: f64, lsp: u64, class: u8, mbps: f64) -> LogEntry {
        at(
            t,
            LogEvent::Arrival {
                lsp: LspId(lsp),
                class: ClassId(class),
                bandwidth: Bandwidth::from_mbps(mbps),
                route: 0,
                holding: 1.0,
            },
        )
    }

    fn established(t: f64, lsp: u64) -> LogEntry {
        at(t, LogEvent::Established { lsp: LspId(lsp), loan_link: None })
    }

    const L: LinkId = LinkId { from: 0, to: 2 };

    #[test]
    fn constant_half_load() {
        let mut t = Telemetry::new(&scenario());
        t.record(&arrival(0.0, 1, 0, 311.0));
        t.record(&established(0.0, 1));
        assert_eq!(t.utilization(L, 0), Err(TelemetryError::OpenWindow(0)));
        t.record(&at(300.0, LogEvent::WindowClosed { index: 0, start: 0.0 }));
        assert_eq!(t.utilization(L, 0), Ok(0.5));
        t.record(&at(600.0, LogEvent::WindowClosed { index: 1, start: 300.0 }));
        assert_eq!(t.utilization(L, 1), Ok(0.5));
    }

    #[test]
    fn idle_and_piecewise() {
        let mut t = Telemetry::new(&scenario());
        t.record(&at(300.0, LogEvent::WindowClosed { index: 0, start: 0.0 }));
        assert_eq!(t.utilization(L, 0), Ok(0.0));
        t.record(&arrival(300.0, 1, 1, 622.0));
        t.record(&established(300.0, 1));
        t.record(&at(450.0, LogEvent::Departed { lsp: LspId(1) }));
        t.record(&at(600.0, LogEvent::WindowClosed { index: 1, start: 300.0 }));
        assert_eq!(t.utilization(L, 1), Ok(0.5));
        assert_eq!(t.capacity_violations(), 0);
    }

    #[test]
    fn counter_attribution() {
        let mut t = Telemetry::new(&scenario());
        t.record(&arrival(1.0, 1, 0, 10.0));
        t.record(&established(1.0, 1));
        t.record(&arrival(2.0, 2, 2, 10.0));
        t.record(&at(2.0, LogEvent::Preempted { lsp: LspId(1), class: ClassId(0), link: L, cause: crate::sim::PreemptionCause::Sharing }));
        t.record(&at(2.0, LogEvent::Established { lsp: LspId(2), loan_link: Some(L) }));
        t.record(&arrival(3.0, 3, 1, 10.0));
        t.record(&at(3.0, LogEvent::Blocked { lsp: LspId(3), class: ClassId(1), link: L }));
        t.record(&at(300.0, LogEvent::WindowClosed { index: 0, start: 0.0 }));
        let w = &t.windows()[0];
        assert_eq!(w.totals(), Counts { requests: 3, blockings: 1, preemptions: 1, devolutions: 0, loans: 1 });
        assert_eq!(w.class_totals(ClassId(0)).preemptions, 1);
        assert_eq!(w.class_totals(ClassId(2)).loans, 1);
        let s = summarize(t.windows(), L, 3);
        assert_eq!(s.generated, s.established + s.blocked);
        assert_eq!(s.blocked_by_class, vec![0, 1, 0]);
    }
}
