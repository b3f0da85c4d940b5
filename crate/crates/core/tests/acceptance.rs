//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits 0 after printing every verdict so the rest of `cargo test` keeps
//! running; set `ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use bamsim::autonomic::Approach;
use bamsim::batch::{all_configs, bundled_scenario, run_batch, run_batch_with_threads, BatchResult};
use bamsim::gbam::oracle::equivalence_check;
use bamsim::model::{PhaseSchedule, ScenarioConfig};
use bamsim::report::emit_reports;
use bamsim::sim::{run, LogEntry, LogEvent, PreemptionCause, RunConfig};
use bamsim::telemetry::LogTally;

struct Verdicts {
    failed: Vec<usize>,
}

impl Verdicts {
    fn record(&mut self, n: usize, title: &str, ok: bool, detail: String) {
        println!("{} [{n:>2}] {title}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(n);
        }
    }
}

fn mean_of(batch: &BatchResult, config: &str, f: impl Fn(&bamsim::RunSummary) -> f64) -> f64 {
    let v: Vec<f64> = batch.runs_of(config).map(|r| f(&r.summary)).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Spearman correlation with average ranks for ties.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Checks every mode switch of a controlled run against the closed window
/// that triggered it, and that no sharing preemption happens while
/// isolated. Returns the number of switches checked.
fn check_switches(log: &[LogEntry], config: &RunConfig) -> Result<usize, String> {
    let policy = config.controller.as_ref().expect("controlled run");
    let mut mode = policy.sharing_preset.clone();
    let mut last_eval: Option<(f64, String, u64, f64)> = None;
    let mut switches = 0;
    for e in log {
        match &e.event {
            LogEvent::ControllerEval { mode: m, preemptions, utilization, .. } => {
                last_eval = Some((e.t, m.clone(), *preemptions, *utilization));
            }
            LogEvent::ModeSwitch { from, to, .. } => {
                let (t, m, p, u) = last_eval.clone().ok_or("switch without evaluation")?;
                if t != e.t || &m != from || from != &mode {
                    return Err(format!("switch at {} not preceded by its evaluation", e.t));
                }
                let justified = if from == &policy.sharing_preset && to == &policy.isolated_preset {
                    p >= policy.max_preemptions
                } else if from == &policy.isolated_preset && to == &policy.sharing_preset {
                    u < policy.min_utilization
                } else {
                    false
                };
                if !justified {
                    return Err(format!("{from}->{to} at {} with window ({p}, {u:.3})", e.t));
                }
                mode = to.clone();
                switches += 1;
            }
            LogEvent::Preempted { cause: PreemptionCause::Sharing, lsp, .. } if mode == policy.isolated_preset => {
                return Err(format!("sharing preemption of {lsp} at {} while isolated", e.t));
            }
            _ => {}
        }
    }
    Ok(switches)
}

fn files_identical(a: &Path, b: &Path) -> Result<usize, String> {
    let list = |d: &Path| -> Vec<String> {
        let mut v: Vec<String> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        v.sort();
        v
    };
    let (la, lb) = (list(a), list(b));
    if la != lb {
        return Err("different file sets".into());
    }
    for f in &la {
        if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
            return Err(format!("{f} differs"));
        }
    }
    Ok(la.len())
}

/// Heavy traffic that stops at 900 s, with a soft controller that isolates
/// on the first preempting window.
fn drained_fixture() -> (ScenarioConfig, RunConfig) {
    let mut s = bundled_scenario();
    s.name = "drained".into();
    s.controller.approach = Approach::Soft { transition_s: 300.0, steps: 5 };
    s.phases = PhaseSchedule {
        end_times: vec![300.0, 900.0, 3600.0],
        mean_interarrival: vec![vec![2.0, 2.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 4.0, 0.0]],
    };
    let config = RunConfig::resolve(&s, "5/2").unwrap();
    (s, config)
}

fn main() {
    let mut v = Verdicts { failed: Vec::new() };
    let scenario = bundled_scenario();
    let configs = all_configs(&scenario).unwrap();
    let seeds = scenario.seeds.clone();
    let names: Vec<String> = configs.iter().map(|c| c.name.clone()).collect();
    let tuples: Vec<&RunConfig> = configs.iter().filter(|c| c.controller.is_some()).collect();

    let started = Instant::now();
    let batch = run_batch(&scenario, &configs, &seeds).expect("batch runs");
    println!(
        "# batch: {} configurations x {} seeds in {:.1} s",
        configs.len(),
        seeds.len(),
        started.elapsed().as_secs_f64()
    );

    // 1. MAM never preempts, lends or devolves; runtime per run.
    {
        let mam = RunConfig::resolve(&scenario, "MAM").unwrap();
        let mut slowest: f64 = 0.0;
        for &seed in &seeds {
            let t = Instant::now();
            run(&scenario, &mam, seed).unwrap();
            slowest = slowest.max(t.elapsed().as_secs_f64());
        }
        let bad: Vec<u64> = batch
            .runs_of("MAM")
            .filter(|r| r.summary.preemptions + r.summary.loans + r.summary.devolutions != 0)
            .map(|r| r.result.seed)
            .collect();
        v.record(
            1,
            "MAM: zero preemptions, loans, devolutions",
            bad.is_empty() && slowest < 5.0,
            format!("{} seeds, offending seeds {bad:?}, slowest run {slowest:.2} s (< 5 s)", seeds.len()),
        );
    }

    // 2. The top class is never preempted.
    {
        let top = scenario.classes as usize - 1;
        let total: u64 = batch.runs.iter().map(|r| r.summary.preemptions_by_class[top]).sum();
        let devolved_top = batch
            .runs
            .iter()
            .flat_map(|r| r.result.log.iter())
            .filter(|e| matches!(&e.event, LogEvent::Preempted { class, .. } if class.index() == top))
            .count();
        v.record(
            2,
            "top-class protection",
            total == 0 && devolved_top == 0,
            format!("TC{top} preemptions over {} runs: {total}", batch.runs.len()),
        );
    }

    // 3. Accounting.
    {
        let bad = batch
            .runs
            .iter()
            .filter(|r| {
                let s = &r.summary;
                let t = LogTally::of(&r.result.log);
                s.generated != s.established + s.blocked
                    || t.arrivals != t.established + t.blocked
                    || t.arrivals != s.generated
                    || t.established != t.departed + t.preempted + t.devolved + t.horizon_end
            })
            .count();
        v.record(
            3,
            "generated = established + blocked",
            bad == 0,
            format!("{} runs checked from windows and raw logs, {bad} violations", batch.runs.len()),
        );
    }

    // 4. TC2 blocking invariance per seed.
    {
        let top = scenario.classes as usize - 1;
        let mut per_seed: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for r in &batch.runs {
            per_seed.entry(r.result.seed).or_default().push(r.summary.blocked_by_class[top]);
        }
        let ok = per_seed.values().all(|b| b.iter().all(|x| *x == b[0]));
        let shown: Vec<String> = per_seed
            .iter()
            .map(|(s, b)| format!("seed {s}: {}", if b.iter().all(|x| *x == b[0]) { b[0].to_string() } else { format!("{b:?}") }))
            .collect();
        v.record(4, "TC2 blocking identical across configurations", ok, shown.join(", "));
    }

    // 5. Oracle equivalence.
    {
        let t = Instant::now();
        let report = equivalence_check(10_000, 2024);
        let secs = t.elapsed().as_secs_f64();
        v.record(
            5,
            "oracle equivalence (RDM and MAM)",
            report.mismatches.is_empty() && secs < 30.0,
            format!(
                "{} trials per model, {} requests, {} preemptions, {} mismatches, {secs:.1} s (< 30 s)",
                report.trials,
                report.requests,
                report.preemptions,
                report.mismatches.len()
            ),
        );
    }

    let pre = |c: &str| mean_of(&batch, c, |s| s.preemptions as f64);
    let blk = |c: &str| mean_of(&batch, c, |s| s.blocked as f64);
    let util = |c: &str| mean_of(&batch, c, |s| s.utilization_mean);
    let (iso, share) = (&scenario.controller.isolated_preset, &scenario.controller.sharing_preset);

    println!("# means over {} seeds:", seeds.len());
    for n in &names {
        println!("#   {n:<6} preemptions {:>7.1}  blocked {:>7.1}  utilization {:.4}", pre(n), blk(n), util(n));
    }

    // 6. RDM against MAM and the tuples.
    {
        let max_tuple = tuples.iter().map(|c| pre(&c.name)).fold(f64::MIN, f64::max);
        let ok = pre(share) > 0.0 && pre(share) > max_tuple && blk(share) < blk(iso) && util(share) > util(iso);
        v.record(
            6,
            "RDM vs MAM direction",
            ok,
            format!(
                "preemptions {:.1} (tuple max {max_tuple:.1}), blocking {:.1} vs {:.1}, utilization {:.4} vs {:.4}",
                pre(share),
                blk(share),
                blk(iso),
                util(share),
                util(iso)
            ),
        );
    }

    // 7. Tuple ordering at P = 25.
    {
        let ladder = ["25/65", "25/70", "25/75", "25/80"];
        let p: Vec<f64> = ladder.iter().map(|c| pre(c)).collect();
        let b: Vec<f64> = ladder.iter().map(|c| blk(c)).collect();
        let x = [65.0, 70.0, 75.0, 80.0];
        let (rp, rb) = (spearman(&x, &p), spearman(&x, &b));
        let monotone = p.windows(2).all(|w| w[0] <= w[1]) && b.windows(2).all(|w| w[0] >= w[1]);
        let (lo_p, hi_p) = (pre(iso), pre(share));
        let (lo_b, hi_b) = (blk(share), blk(iso));
        let bracketed = tuples.iter().all(|c| {
            let (pc, bc) = (pre(&c.name), blk(&c.name));
            (lo_p..=hi_p).contains(&pc) && (lo_b..=hi_b).contains(&bc)
        });
        v.record(
            7,
            "tuple ordering at P = 25",
            monotone && rp == 1.0 && rb == -1.0 && bracketed,
            format!(
                "preemptions {p:.1?} (rho {rp:+.3}), blocking {b:.1?} (rho {rb:+.3}), monotone {monotone}, all tuples between endpoints {bracketed}"
            ),
        );
    }

    // 8. Controller decisions match their windows.
    {
        let mut switches = 0;
        let mut errors = Vec::new();
        for c in &tuples {
            for r in batch.runs_of(&c.name) {
                match check_switches(&r.result.log, c) {
                    Ok(n) => switches += n,
                    Err(e) => errors.push(format!("{} seed {}: {e}", c.name, r.result.seed)),
                }
            }
        }
        v.record(
            8,
            "controller switches justified by closed windows",
            errors.is_empty() && switches > 0,
            if errors.is_empty() {
                format!("{switches} switches checked over {} runs", tuples.len() * seeds.len())
            } else {
                errors.join("; ")
            },
        );
    }

    // 9. Request count against the closed form.
    {
        let expected = scenario.expected_requests();
        let counts: Vec<u64> = seeds
            .iter()
            .map(|s| batch.runs_of(iso).find(|r| r.result.seed == *s).unwrap().summary.generated)
            .collect();
        let ok = counts.iter().all(|&n| (n as f64 - expected).abs() <= 0.05 * expected);
        v.record(
            9,
            "request count within 5% of expectation",
            ok,
            format!("expected {expected:.0}, per seed {counts:?}"),
        );
    }

    // 10. Determinism across invocations and thread counts.
    {
        let subset: Vec<RunConfig> = ["MAM", "25/65", "30/80", "RDM"]
            .iter()
            .map(|n| RunConfig::resolve(&scenario, n).unwrap())
            .collect();
        let sub_seeds = [1, 2];
        let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
        for (dir, threads) in dirs.iter().zip([1, 1, 4]) {
            let b = run_batch_with_threads(&scenario, &subset, &sub_seeds, threads).unwrap();
            emit_reports(&b, dir.path(), true).unwrap();
        }
        let first = files_identical(dirs[0].path(), dirs[1].path());
        let second = files_identical(dirs[0].path(), dirs[2].path());
        let ok = first.is_ok() && second.is_ok();
        v.record(
            10,
            "byte-identical outputs",
            ok,
            match (first, second) {
                (Ok(n), Ok(_)) => format!("{n} files (CSV and NDJSON) identical over 2 repeats and 1 vs 4 threads"),
                (a, b) => format!("repeat: {a:?}, threads: {b:?}"),
            },
        );
    }

    // 11. SOFT transitions never preempt and their overhang drains.
    {
        let mut soft = scenario.clone();
        soft.controller.approach = Approach::Soft { transition_s: 300.0, steps: 5 };
        let soft_configs: Vec<RunConfig> = all_configs(&soft).unwrap().into_iter().filter(|c| c.controller.is_some()).collect();
        let soft_batch = run_batch(&soft, &soft_configs, &seeds).unwrap();
        let (fixture, fconfig) = drained_fixture();
        let drained = run(&fixture, &fconfig, 1).unwrap();

        let forced = soft_batch
            .runs
            .iter()
            .map(|r| &r.result)
            .chain(std::iter::once(&drained))
            .flat_map(|r| r.log.iter())
            .filter(|e| {
                matches!(e.event, LogEvent::Preempted { cause: PreemptionCause::Forced, .. })
                    || matches!(e.event, LogEvent::ConfigApplied { forced_preemptions, .. } if forced_preemptions > 0)
            })
            .count();
        let soft_switches: usize = soft_batch.runs.iter().map(|r| r.result.modes.len()).sum();

        // Last step of the first isolating transition and when the overhang
        // it left was cleared.
        let mut final_step: Option<(f64, f64)> = None;
        let mut cleared: Option<f64> = None;
        for e in &drained.log {
            match &e.event {
                LogEvent::ConfigApplied { mode, step, of, overhang, .. }
                    if final_step.is_none() && mode == &fixture.controller.isolated_preset && step == of =>
                {
                    final_step = Some((e.t, overhang.mbps()));
                }
                LogEvent::OverhangCleared if final_step.is_some() && cleared.is_none() => cleared = Some(e.t),
                _ => {}
            }
        }
        let tail = 10.0 * fixture.lsp.holding_mean_s;
        let (ok, detail) = match (final_step, cleared) {
            (Some((t, overhang)), Some(c)) => (
                forced == 0 && overhang > 0.0 && c - t <= tail,
                format!(
                    "{soft_switches} soft switches on the paper scenario, {forced} forced preemptions; drained fixture: overhang {overhang:.1} Mbps at final step t={t}, cleared at t={c:.1} (within {tail} s)"
                ),
            ),
            (step, c) => (false, format!("{forced} forced preemptions; final step {step:?}, cleared {c:?}")),
        };
        v.record(11, "SOFT transitions: no preemption, overhang drains", ok, detail);
    }

    println!(
        "# {} of 11 criteria passed{}",
        11 - v.failed.len(),
        if v.failed.is_empty() { String::new() } else { format!(", failed: {:?}", v.failed) }
    );
    if !v.failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|x| x == "1") {
        std::process::exit(1);
    }
}
