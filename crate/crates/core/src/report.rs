//! CSV and NDJSON exports of a batch.
//!
//! | file | one row per |
//! |------|-------------|
//! | `summary.csv` | configuration (seed means, plus standard deviations) |
//! | `runs.csv` | (configuration, seed) |
//! | `windows_<cfg>_<seed>.csv` | (window, link, class) |
//! | `modes_<cfg>_<seed>.csv` | controller mode change |
//! | `events_<cfg>_<seed>.ndjson` | log entry (optional) |
//!
//! `<cfg>` is the configuration name with characters other than ASCII
//! alphanumerics, `-` and `_` replaced by `-`, so `25/65` becomes `25-65`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::batch::{BatchResult, ConfigAggregate};
use crate::model::{ClassId, LinkId};
use crate::sim::RunResult;
use crate::telemetry::{Counts, MetricsWindow, RunSummary, WindowCell};

pub fn file_stem(config: &str) -> String {
    config
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_start: f64,
    pub window_end: f64,
    pub link: LinkId,
    pub class: ClassId,
    pub requests: u64,
    pub blockings: u64,
    pub preemptions: u64,
    pub devolutions: u64,
    pub loans: u64,
    pub utilization: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub time: f64,
    pub from: String,
    pub to: String,
    pub approach: String,
    pub window_preemptions: u64,
    pub window_utilization: f64,
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn class_headers(prefix: &str, classes: usize) -> Vec<String> {
    (0..classes).map(|c| format!("{prefix}_tc{c}")).collect()
}

fn summary_headers(lead: &[&str], classes: usize) -> Vec<String> {
    let mut h: Vec<String> = lead.iter().map(|s| s.to_string()).collect();
    h.extend(["generated", "established", "blocked"].map(String::from));
    h.extend(class_headers("blocked", classes));
    h.push("preemptions".into());
    h.extend(class_headers("preemptions", classes));
    h.extend(["devolutions", "loans", "utilization_mean", "utilization_peak"].map(String::from));
    h
}

fn aggregate_record(a: &ConfigAggregate) -> Vec<String> {
    let m = |x: f64| format!("{x:.3}");
    let mut r = vec![a.config.clone(), a.runs.to_string()];
    r.extend([a.generated, a.established, a.blocked].map(|s| m(s.mean)));
    r.extend(a.blocked_by_class.iter().map(|s| m(s.mean)));
    r.push(m(a.preemptions.mean));
    r.extend(a.preemptions_by_class.iter().map(|s| m(s.mean)));
    r.extend([m(a.devolutions.mean), m(a.loans.mean)]);
    r.extend([format!("{:.5}", a.utilization_mean.mean), format!("{:.5}", a.utilization_peak.mean)]);
    r.extend([a.generated, a.blocked, a.preemptions].map(|s| m(s.std)));
    r
}

fn run_record(config: &str, seed: u64, s: &RunSummary) -> Vec<String> {
    let mut r = vec![config.to_string(), seed.to_string()];
    r.extend([s.generated, s.established, s.blocked].map(|x| x.to_string()));
    r.extend(s.blocked_by_class.iter().map(u64::to_string));
    r.push(s.preemptions.to_string());
    r.extend(s.preemptions_by_class.iter().map(u64::to_string));
    r.extend([s.devolutions.to_string(), s.loans.to_string()]);
    r.extend([format!("{:.5}", s.utilization_mean), format!("{:.5}", s.utilization_peak)]);
    r
}

pub fn write_summary(batch: &BatchResult, path: &Path) -> io::Result<()> {
    let classes = batch.aggregates.first().map_or(0, |a| a.blocked_by_class.len());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut headers = summary_headers(&["config", "runs"], classes);
    headers.extend(["generated_std", "blocked_std", "preemptions_std"].map(String::from));
    w.write_record(&headers).map_err(csv_err)?;
    for a in &batch.aggregates {
        w.write_record(aggregate_record(a)).map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_runs(batch: &BatchResult, path: &Path) -> io::Result<()> {
    let classes = batch.runs.first().map_or(0, |r| r.summary.blocked_by_class.len());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(summary_headers(&["config", "seed"], classes)).map_err(csv_err)?;
    for r in &batch.runs {
        w.write_record(run_record(&r.result.config, r.result.seed, &r.summary)).map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_windows(windows: &[MetricsWindow], path: &Path) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for win in windows {
        for cell in &win.cells {
            w.serialize(WindowRow {
                window_start: win.start,
                window_end: win.end,
                link: cell.link,
                class: cell.class,
                requests: cell.counts.requests,
                blockings: cell.counts.blockings,
                preemptions: cell.counts.preemptions,
                devolutions: cell.counts.devolutions,
                loans: cell.counts.loans,
                utilization: cell.utilization,
            })
            .map_err(csv_err)?;
        }
    }
    w.flush()
}

/// Reads a windows CSV back into metric windows.
pub fn read_windows(path: &Path) -> io::Result<Vec<MetricsWindow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out: Vec<MetricsWindow> = Vec::new();
    for row in r.deserialize() {
        let row: WindowRow = row.map_err(csv_err)?;
        let same = out.last().is_some_and(|w| w.start == row.window_start && w.end == row.window_end);
        if !same {
            out.push(MetricsWindow { index: out.len(), start: row.window_start, end: row.window_end, cells: Vec::new() });
        }
        out.last_mut().expect("window").cells.push(WindowCell {
            link: row.link,
            class: row.class,
            counts: Counts {
                requests: row.requests,
                blockings: row.blockings,
                preemptions: row.preemptions,
                devolutions: row.devolutions,
                loans: row.loans,
            },
            utilization: row.utilization,
        });
    }
    Ok(out)
}

pub fn write_modes(run: &RunResult, path: &Path) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    w.write_record(["time", "from", "to", "approach", "window_preemptions", "window_utilization"])
        .map_err(csv_err)?;
    for m in &run.modes {
        w.serialize(ModeRow {
            time: m.time,
            from: m.from.clone(),
            to: m.to.clone(),
            approach: m.approach.clone(),
            window_preemptions: m.window_preemptions,
            window_utilization: m.window_utilization,
        })
        .map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_events(run: &RunResult, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in &run.log {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes every report of `batch` into `dir` (created if missing) and
/// returns the written paths in a fixed order.
pub fn emit_reports(batch: &BatchResult, dir: &Path, events: bool) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary = dir.join("summary.csv");
    write_summary(batch, &summary)?;
    written.push(summary);
    let runs = dir.join("runs.csv");
    write_runs(batch, &runs)?;
    written.push(runs);
    for r in &batch.runs {
        let tag = format!("{}_{}", file_stem(&r.result.config), r.result.seed);
        let windows = dir.join(format!("windows_{tag}.csv"));
        write_windows(&r.result.windows, &windows)?;
        written.push(windows);
        let modes = dir.join(format!("modes_{tag}.csv"));
        write_modes(&r.result, &modes)?;
        written.push(modes);
        if events {
            let ev = dir.join(format!("events_{tag}.ndjson"));
            write_events(&r.result, &ev)?;
            written.push(ev);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems() {
        assert_eq!(file_stem("25/65"), "25-65");
        assert_eq!(file_stem("RDM"), "RDM");
    }
}
