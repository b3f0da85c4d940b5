//! Reference admission models written directly from the bandwidth
//! constraints, with no pools, funding or flows.
//!
//! RDM: for every level `k`, the classes `k..N` together stay within `BC_k`.
//! MAM: every class stays within its own `BC_c`.
//!
//! They share only the request vocabulary with the engine and exist to
//! cross-check it on randomized request/release sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_preset, Admission, LinkState};
use crate::model::{Bandwidth, BcTable, BehaviorPreset, ClassId, GBamLinkConfig, LspId, PresetKind};

/// One step of a single-link sequence. The `n`-th request gets `LspId(n)`.
/// Releasing an LSP that is not active is a no-op.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeqOp {
    Request { class: ClassId, bandwidth: Bandwidth },
    Release { lsp: LspId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleDecision {
    Admit,
    AdmitWithPreemption(Vec<LspId>),
    Block,
}

struct Active {
    id: LspId,
    class: usize,
    bw: i64,
}

fn nested_excess(bc: &[i64], usage: &[i64]) -> i64 {
    let mut worst = 0;
    let mut above = 0;
    for k in (0..bc.len()).rev() {
        above += usage[k];
        worst = worst.max(above - bc[k]);
    }
    worst
}

/// Russian-dolls admission straight from the nested constraints
/// `sum_{c >= k} u_c <= BC_k`.
///
/// When a request violates a constraint, LSPs of lower classes are
/// considered lowest class first and newest first; one is torn down when
/// doing so lowers the worst constraint excess. Passes repeat until the
/// request fits or nothing helps any more, in which case it is blocked.
pub fn rdm_constraint_oracle(bc: &[Bandwidth], ops: &[SeqOp]) -> Vec<OracleDecision> {
    let bc: Vec<i64> = bc.iter().map(|b| b.tenths()).collect();
    let n = bc.len();
    let mut active: Vec<Active> = Vec::new();
    let mut next_id = 0;
    let mut out = Vec::new();
    for op in ops {
        match *op {
            SeqOp::Release { lsp } => active.retain(|a| a.id != lsp),
            SeqOp::Request { class, bandwidth } => {
                let id = LspId(next_id);
                next_id += 1;
                let r = class.index();
                let mut usage = vec![0; n];
                for a in &active {
                    usage[a.class] += a.bw;
                }
                usage[r] += bandwidth.tenths();
                let mut excess = nested_excess(&bc, &usage);
                let mut victims = Vec::new();
                if excess > 0 {
                    let mut candidates: Vec<&Active> = active.iter().filter(|a| a.class < r).collect();
                    candidates.sort_by(|a, b| a.class.cmp(&b.class).then(b.id.cmp(&a.id)));
                    let mut taken = vec![false; candidates.len()];
                    'passes: loop {
                        let mut progress = false;
                        for (i, cand) in candidates.iter().enumerate() {
                            if taken[i] {
                                continue;
                            }
                            usage[cand.class] -= cand.bw;
                            let after = nested_excess(&bc, &usage);
                            if after < excess {
                                taken[i] = true;
                                victims.push(cand.id);
                                excess = after;
                                progress = true;
                                if excess == 0 {
                                    break 'passes;
                                }
                            } else {
                                usage[cand.class] += cand.bw;
                            }
                        }
                        if !progress {
                            break;
                        }
                    }
                }
                if excess > 0 {
                    out.push(OracleDecision::Block);
                    continue;
                }
                active.retain(|a| !victims.contains(&a.id));
                active.push(Active { id, class: r, bw: bandwidth.tenths() });
                out.push(if victims.is_empty() {
                    OracleDecision::Admit
                } else {
                    OracleDecision::AdmitWithPreemption(victims)
                });
            }
        }
    }
    out
}

/// Maximum-allocation admission: `u_c <= BC_c` per class, nothing shared,
/// nothing preempted.
pub fn mam_constraint_oracle(bc: &[Bandwidth], ops: &[SeqOp]) -> Vec<OracleDecision> {
    let mut active: Vec<Active> = Vec::new();
    let mut next_id = 0;
    let mut out = Vec::new();
    for op in ops {
        match *op {
            SeqOp::Release { lsp } => active.retain(|a| a.id != lsp),
            SeqOp::Request { class, bandwidth } => {
                let id = LspId(next_id);
                next_id += 1;
                let used: i64 = active.iter().filter(|a| a.class == class.index()).map(|a| a.bw).sum();
                if used + bandwidth.tenths() <= bc[class.index()].tenths() {
                    active.push(Active { id, class: class.index(), bw: bandwidth.tenths() });
                    out.push(OracleDecision::Admit);
                } else {
                    out.push(OracleDecision::Block);
                }
            }
        }
    }
    out
}

/// Runs a sequence through the G-BAM engine and reports its decisions in
/// the oracle vocabulary.
pub fn run_engine(config: &GBamLinkConfig, ops: &[SeqOp]) -> Vec<OracleDecision> {
    let mut link = LinkState::new(config.clone());
    let mut next_id = 0;
    let mut out = Vec::new();
    for op in ops {
        match *op {
            SeqOp::Release { lsp } => {
                if link.get(lsp).is_some() {
                    link.release(lsp).expect("active lsp");
                }
            }
            SeqOp::Request { class, bandwidth } => {
                let id = LspId(next_id);
                next_id += 1;
                let decision = link.try_admit(class, bandwidth).expect("valid request");
                let mapped = match &decision.outcome {
                    Admission::Block => OracleDecision::Block,
                    Admission::Admit { .. } => OracleDecision::Admit,
                    Admission::AdmitAfterReclaim { victims, .. } => {
                        OracleDecision::AdmitWithPreemption(victims.iter().map(|v| v.lsp).collect())
                    }
                };
                if !decision.is_block() {
                    link.commit(&decision, id).expect("fresh decision");
                }
                debug_assert_eq!(link.check_invariants(), Ok(()));
                out.push(mapped);
            }
        }
    }
    out
}

/// Random request/release sequence. Bandwidths are drawn between 1/20 and
/// 1/4 of `capacity` so links saturate quickly.
pub fn random_sequence<R: Rng>(rng: &mut R, classes: usize, capacity: Bandwidth, len: usize) -> Vec<SeqOp> {
    let lo = (capacity.tenths() / 20).max(1);
    let hi = (capacity.tenths() / 4).max(lo);
    let mut requested = 0u64;
    (0..len)
        .map(|_| {
            if requested > 0 && rng.random_bool(0.3) {
                SeqOp::Release { lsp: LspId(rng.random_range(0..requested)) }
            } else {
                requested += 1;
                SeqOp::Request {
                    class: ClassId(rng.random_range(0..classes) as u8),
                    bandwidth: Bandwidth::from_tenths(rng.random_range(lo..=hi)),
                }
            }
        })
        .collect()
}

fn table_one_rdm() -> Vec<Bandwidth> {
    [6220, 3732, 1866].map(Bandwidth::from_tenths).to_vec()
}

fn table_one_mam() -> Vec<Bandwidth> {
    [2488, 1866, 1866].map(Bandwidth::from_tenths).to_vec()
}

/// A random nested table, or the paper scenario's RDM column every fourth
/// trial.
fn random_rdm_table<R: Rng>(rng: &mut R, trial: usize) -> (Bandwidth, Vec<Bandwidth>) {
    if trial.is_multiple_of(4) {
        return (Bandwidth::from_tenths(6220), table_one_rdm());
    }
    let classes = rng.random_range(1..=4);
    let capacity = rng.random_range(500..=10_000);
    let mut bc = vec![rng.random_range(capacity / 2..=capacity)];
    for _ in 1..classes {
        let prev = *bc.last().unwrap();
        bc.push(rng.random_range(0..=prev));
    }
    (Bandwidth::from_tenths(capacity), bc.into_iter().map(Bandwidth::from_tenths).collect())
}

fn random_mam_table<R: Rng>(rng: &mut R, trial: usize) -> (Bandwidth, Vec<Bandwidth>) {
    if trial.is_multiple_of(4) {
        return (Bandwidth::from_tenths(6220), table_one_mam());
    }
    let classes = rng.random_range(1..=4);
    let capacity: i64 = rng.random_range(500..=10_000);
    let mut left = capacity;
    let bc = (0..classes)
        .map(|_| {
            let b = rng.random_range(0..=left);
            left -= b;
            Bandwidth::from_tenths(b)
        })
        .collect();
    (Bandwidth::from_tenths(capacity), bc)
}

/// First sequence on which engine and oracle disagree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub model: PresetKind,
    pub trial: usize,
    pub bc: Vec<Bandwidth>,
    pub ops: Vec<SeqOp>,
    pub engine: Vec<OracleDecision>,
    pub oracle: Vec<OracleDecision>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub requests: usize,
    pub blocks: usize,
    pub preemptions: usize,
    pub mismatches: Vec<Mismatch>,
}

/// Runs `trials` random sequences under RDM and `trials` under MAM and
/// compares engine decisions against the constraint oracles.
pub fn equivalence_check(trials: usize, seed: u64) -> EquivalenceReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EquivalenceReport { trials, ..Default::default() };
    for trial in 0..trials {
        for kind in [PresetKind::Rdm, PresetKind::Mam] {
            let (capacity, bc) = match kind {
                PresetKind::Rdm => random_rdm_table(&mut rng, trial),
                _ => random_mam_table(&mut rng, trial),
            };
            let len = rng.random_range(10..=80);
            let ops = random_sequence(&mut rng, bc.len(), capacity, len);
            let config = build_preset(&BehaviorPreset::new(kind, BcTable::Mbps(bc.clone())), capacity)
                .expect("generated tables are valid");
            let engine = run_engine(&config, &ops);
            let oracle = match kind {
                PresetKind::Rdm => rdm_constraint_oracle(&bc, &ops),
                _ => mam_constraint_oracle(&bc, &ops),
            };
            for d in &oracle {
                report.requests += 1;
                match d {
                    OracleDecision::Block => report.blocks += 1,
                    OracleDecision::AdmitWithPreemption(v) => report.preemptions += v.len(),
                    OracleDecision::Admit => {}
                }
            }
            if engine != oracle {
                report.mismatches.push(Mismatch { model: kind, trial, bc, ops, engine, oracle });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(class: u8, mbps: f64) -> SeqOp {
        SeqOp::Request { class: ClassId(class), bandwidth: Bandwidth::from_mbps(mbps) }
    }

    #[test]
    fn rdm_oracle_hand_sequences() {
        let bc = table_one_rdm();
        assert_eq!(rdm_constraint_oracle(&bc, &[]), vec![]);
        // u1 + u2 = 559.8 > 373.2 even without TC0, so the TC1 request blocks.
        assert_eq!(
            rdm_constraint_oracle(&bc, &[req(0, 400.0), req(2, 186.6), req(1, 373.2)]),
            vec![OracleDecision::Admit, OracleDecision::Admit, OracleDecision::Block]
        );
        // Only the total constraint binds here, which TC0 removal fixes.
        assert_eq!(
            rdm_constraint_oracle(&bc, &[req(0, 400.0), req(2, 186.6), req(1, 186.6)]),
            vec![
                OracleDecision::Admit,
                OracleDecision::Admit,
                OracleDecision::AdmitWithPreemption(vec![LspId(0)])
            ]
        );
    }

    #[test]
    fn rdm_oracle_skips_useless_victims() {
        let bc = table_one_rdm();
        // TC0 small, TC1 fills BC1 alone; a TC2 request must preempt TC1,
        // removing the TC0 LSP would not help.
        let ops = [req(0, 10.0), req(1, 373.2), req(2, 10.0)];
        assert_eq!(
            rdm_constraint_oracle(&bc, &ops)[2],
            OracleDecision::AdmitWithPreemption(vec![LspId(1)])
        );
    }

    #[test]
    fn mam_oracle_never_preempts() {
        let bc = table_one_mam();
        let ops = [req(0, 248.8), req(0, 0.1), req(2, 186.6), SeqOp::Release { lsp: LspId(0) }, req(0, 100.0)];
        assert_eq!(
            mam_constraint_oracle(&bc, &ops),
            vec![OracleDecision::Admit, OracleDecision::Block, OracleDecision::Admit, OracleDecision::Admit]
        );
    }

    #[test]
    fn engine_matches_hand_sequences() {
        let rdm = build_preset(&BehaviorPreset::new(PresetKind::Rdm, BcTable::Mbps(table_one_rdm())), Bandwidth::from_tenths(6220)).unwrap();
        for ops in [
            vec![req(0, 400.0), req(2, 186.6), req(1, 373.2)],
            vec![req(0, 400.0), req(2, 186.6), req(1, 186.6)],
            vec![req(0, 10.0), req(1, 373.2), req(2, 10.0)],
        ] {
            assert_eq!(run_engine(&rdm, &ops), rdm_constraint_oracle(&table_one_rdm(), &ops));
        }
    }

    #[test]
    fn small_equivalence_run() {
        let report = equivalence_check(300, 7);
        assert!(report.mismatches.is_empty(), "{:#?}", report.mismatches.first());
        assert!(report.preemptions > 0);
        assert!(report.blocks > 0);
    }
}
