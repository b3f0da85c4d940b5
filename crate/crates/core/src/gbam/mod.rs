//! Single-link G-BAM admission engine.
//!
//! A link is configured with one pool per traffic class. Each pool has an
//! allotment and a private portion only its owner may use; the rest of the
//! pool is sharable, downward (HTL, lower classes borrow from higher pools)
//! and/or upward (LTH, higher classes borrow from lower pools as a loan).
//! MAM, RDM, AllocTC-Sharing and G-RDM are particular settings of these
//! knobs, see [`build_preset`].
//!
//! Admission is plan/commit: [`LinkState::try_admit`] never mutates and
//! returns a decision tagged with the state version it was planned against;
//! [`LinkState::commit`] applies it. Existing LSPs may be re-attributed to
//! other pools (migration) so that a class's aggregate usage is all that
//! matters for feasibility.

mod flow;
mod funding;
pub mod oracle;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Bandwidth, BehaviorPreset, ClassId, ClassPool, FundingVector, GBamLinkConfig, LspId,
    PresetKind,
};
use funding::{allocate, distribute, fill_from_spare, max_fundable, SpareParts};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GbamError {
    #[error("invalid preset: {0}")]
    InvalidPreset(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("class {class} does not exist on a link with {classes} classes")]
    UnknownClass { class: ClassId, classes: usize },
    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(Bandwidth),
    #[error("{0} is not active on this link")]
    UnknownLsp(LspId),
    #[error("{0} is already active on this link")]
    DuplicateLsp(LspId),
    #[error("stale decision: planned against version {planned}, link is at {current}")]
    StaleDecision { planned: u64, current: u64 },
    #[error("a blocked request has nothing to commit")]
    NothingToCommit,
    #[error("configuration has {found} classes, link has {expected}")]
    ClassCountMismatch { expected: usize, found: usize },
    #[error("ledger invariant violated: {0}")]
    Invariant(String),
}

/// Builds the link configuration that reproduces a BAM behavior.
///
/// RDM-family tables are cumulative (`BC_c` bounds classes `c..N`), so the
/// pools are the telescoped differences `A_c = BC_c - BC_{c+1}`.
pub fn build_preset(preset: &BehaviorPreset, capacity: Bandwidth) -> Result<GBamLinkConfig, GbamError> {
    let violations = preset.validate(capacity);
    if !violations.is_empty() {
        let msg = violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        return Err(GbamError::InvalidPreset(msg));
    }
    let bc = preset.bc.resolve(capacity);
    let n = bc.len();
    let private = preset
        .private
        .as_ref()
        .map(|p| p.resolve(capacity))
        .unwrap_or_else(|| vec![Bandwidth::ZERO; n]);
    let telescoped = || -> Vec<Bandwidth> {
        (0..n)
            .map(|c| if c + 1 < n { bc[c] - bc[c + 1] } else { bc[c] })
            .collect()
    };
    let (allotments, private, htl, lth) = match preset.kind {
        PresetKind::Mam => (bc.clone(), bc.clone(), false, false),
        PresetKind::Rdm => (telescoped(), vec![Bandwidth::ZERO; n], true, false),
        PresetKind::Alloctc => (telescoped(), vec![Bandwidth::ZERO; n], true, true),
        PresetKind::Grdm => (telescoped(), private, true, false),
        PresetKind::Custom => (
            bc.clone(),
            private,
            preset.htl.unwrap_or(false),
            preset.lth.unwrap_or(false),
        ),
    };
    let config = GBamLinkConfig {
        capacity,
        pools: allotments
            .into_iter()
            .zip(private)
            .map(|(allotment, private)| ClassPool { allotment, private })
            .collect(),
        htl,
        lth,
    };
    let violations = config.validate();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(GbamError::InvalidPreset(
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        ))
    }
}

/// Result of [`feasible`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Feasibility {
    pub feasible: bool,
    /// One funding vector per demand, in input order, when feasible.
    pub witness: Option<Vec<FundingVector>>,
}

/// Whether a multiset of LSP demands can be funded at once on `config`.
///
/// The witness funds earlier demands of a class before later ones and each
/// class draws from its own pool first, then higher pools ascending (HTL),
/// then lower pools descending (LTH).
pub fn feasible(config: &GBamLinkConfig, demands: &[(ClassId, Bandwidth)]) -> Result<Feasibility, GbamError> {
    let n = config.classes();
    let mut per_class = vec![0i64; n];
    for (class, bw) in demands {
        if class.index() >= n {
            return Err(GbamError::UnknownClass { class: *class, classes: n });
        }
        per_class[class.index()] += bw.tenths();
    }
    let total: i64 = per_class.iter().sum();
    if max_fundable(config, &per_class) < total {
        return Ok(Feasibility { feasible: false, witness: None });
    }
    let alloc = allocate(config, &per_class);
    let mut witness = vec![FundingVector::empty(n); demands.len()];
    for c in 0..n {
        let idx: Vec<usize> = (0..demands.len()).filter(|&i| demands[i].0.index() == c).collect();
        let bws: Vec<Bandwidth> = idx.iter().map(|&i| demands[i].1).collect();
        for (i, fv) in idx.into_iter().zip(distribute(n, &alloc.per_class[c], &bws)) {
            witness[i] = fv;
        }
    }
    Ok(Feasibility { feasible: true, witness: Some(witness) })
}

/// Linear interpolation between two configurations, `step` of `steps`.
///
/// Values are floored to the 0.1 Mbps grid, which keeps `private <=
/// allotment` and the allotment sum under capacity at every step. Sharing
/// flags are the union of both endpoints before the last step and the
/// target's flags at the last step.
pub fn interpolate(from: &GBamLinkConfig, to: &GBamLinkConfig, step: u32, steps: u32) -> GBamLinkConfig {
    assert_eq!(from.classes(), to.classes(), "interpolating configs of different shape");
    assert!(steps > 0 && step <= steps);
    if step == steps {
        return to.clone();
    }
    let lerp = |a: Bandwidth, b: Bandwidth| {
        let num = (b.tenths() - a.tenths()) * step as i64;
        Bandwidth::from_tenths(a.tenths() + num.div_euclid(steps as i64))
    };
    GBamLinkConfig {
        capacity: lerp(from.capacity, to.capacity),
        pools: from
            .pools
            .iter()
            .zip(&to.pools)
            .map(|(a, b)| ClassPool {
                allotment: lerp(a.allotment, b.allotment),
                private: lerp(a.private, b.private),
            })
            .collect(),
        htl: from.htl || to.htl,
        lth: from.lth || to.lth,
    }
}

/// One LSP's reservation on a link.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reservation {
    pub class: ClassId,
    pub bandwidth: Bandwidth,
    pub funding: FundingVector,
}

impl Reservation {
    pub fn unfunded(&self) -> Bandwidth {
        self.bandwidth - self.funding.total()
    }
}

/// Why a victim is torn down.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReclaimKind {
    /// A lower-class LSP displaced by a higher-class request.
    Preemption,
    /// A higher-class LSP holding a loan on the requester's pool.
    Devolution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Victim {
    pub lsp: LspId,
    pub class: ClassId,
    pub kind: ReclaimKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Admission {
    Admit {
        funding: FundingVector,
        migrations: Vec<(LspId, FundingVector)>,
    },
    AdmitAfterReclaim {
        victims: Vec<Victim>,
        funding: FundingVector,
        migrations: Vec<(LspId, FundingVector)>,
    },
    Block,
}

/// A planned admission, valid only against the state version it was
/// planned on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdmissionDecision {
    planned_on: u64,
    pub class: ClassId,
    pub bandwidth: Bandwidth,
    pub outcome: Admission,
}

impl AdmissionDecision {
    pub fn is_block(&self) -> bool {
        matches!(self.outcome, Admission::Block)
    }

    pub fn victims(&self) -> &[Victim] {
        match &self.outcome {
            Admission::AdmitAfterReclaim { victims, .. } => victims,
            _ => &[],
        }
    }

    pub fn funding(&self) -> Option<&FundingVector> {
        match &self.outcome {
            Admission::Admit { funding, .. } | Admission::AdmitAfterReclaim { funding, .. } => Some(funding),
            Admission::Block => None,
        }
    }
}

/// Outcome of a soft reconfiguration step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SoftStepReport {
    /// Bandwidth of active LSPs the new configuration cannot fund.
    pub overhang: Bandwidth,
    /// LSPs left (partially) unfunded.
    pub grandfathered: Vec<LspId>,
}

/// Ledger of one link: configuration plus the funding of every active LSP.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkState {
    config: GBamLinkConfig,
    active: BTreeMap<LspId, Reservation>,
    version: u64,
}

impl LinkState {
    pub fn new(config: GBamLinkConfig) -> Self {
        LinkState {
            config,
            active: BTreeMap::new(),
            version: 0,
        }
    }

    pub fn config(&self) -> &GBamLinkConfig {
        &self.config
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn get(&self, id: LspId) -> Option<&Reservation> {
        self.active.get(&id)
    }

    pub fn reservations(&self) -> impl Iterator<Item = (LspId, &Reservation)> {
        self.active.iter().map(|(id, r)| (*id, r))
    }

    /// Aggregate reserved bandwidth of `class` (`u_c`).
    pub fn class_usage(&self, class: ClassId) -> Bandwidth {
        self.active
            .values()
            .filter(|r| r.class == class)
            .map(|r| r.bandwidth)
            .sum()
    }

    /// Total reserved bandwidth, including any unfunded overhang.
    pub fn reserved(&self) -> Bandwidth {
        self.active.values().map(|r| r.bandwidth).sum()
    }

    /// Bandwidth of active LSPs not covered by the current configuration.
    pub fn overhang(&self) -> Bandwidth {
        self.active.values().map(Reservation::unfunded).sum()
    }

    /// `(private, shared)` draws on pool `k`.
    pub fn pool_draws(&self, k: usize) -> (Bandwidth, Bandwidth) {
        let mut private = Bandwidth::ZERO;
        let mut shared = Bandwidth::ZERO;
        for r in self.active.values() {
            if r.class.index() == k {
                private += r.funding.private;
            }
            shared += r.funding.shared[k];
        }
        (private, shared)
    }

    fn class_demands(&self) -> Vec<i64> {
        let mut d = vec![0; self.config.classes()];
        for r in self.active.values() {
            d[r.class.index()] += r.bandwidth.tenths();
        }
        d
    }

    fn spare(&self) -> SpareParts {
        let mut spare = SpareParts::of_config(&self.config);
        for r in self.active.values() {
            spare.take_funding(r.class.index(), &r.funding);
        }
        spare
    }

    /// Checks the conservation invariants of the ledger.
    pub fn check_invariants(&self) -> Result<(), GbamError> {
        let n = self.config.classes();
        let mut total = Bandwidth::ZERO;
        for (id, r) in &self.active {
            if r.class.index() >= n || r.funding.shared.len() != n {
                return Err(GbamError::Invariant(format!("{id} has a malformed funding vector")));
            }
            if r.funding.private < Bandwidth::ZERO || r.funding.shared.iter().any(|b| *b < Bandwidth::ZERO) {
                return Err(GbamError::Invariant(format!("{id} has a negative draw")));
            }
            if r.funding.total() > r.bandwidth {
                return Err(GbamError::Invariant(format!("{id} is funded beyond its bandwidth")));
            }
            for k in 0..n {
                if !r.funding.shared[k].is_zero() && !self.config.may_draw(r.class.index(), k) {
                    return Err(GbamError::Invariant(format!(
                        "{id} of {} draws on pool {k} without the sharing flag",
                        r.class
                    )));
                }
            }
            total += r.funding.total();
        }
        for k in 0..n {
            let (private, shared) = self.pool_draws(k);
            let pool = self.config.pools[k];
            if private > pool.private {
                return Err(GbamError::Invariant(format!("private part of pool {k} overdrawn")));
            }
            if shared > pool.sharable() {
                return Err(GbamError::Invariant(format!("sharable part of pool {k} overdrawn")));
            }
            if private + shared > pool.allotment {
                return Err(GbamError::Invariant(format!("pool {k} overdrawn")));
            }
        }
        if total > self.config.capacity {
            return Err(GbamError::Invariant("draws exceed link capacity".into()));
        }
        Ok(())
    }

    /// How much of a new request of `class`/`bw` cannot be funded on top of
    /// `demands` without taking funding away from LSPs that have it.
    fn shortfall(&self, demands: &[i64], reserved: i64, class: usize, bw: i64, base: Option<i64>) -> i64 {
        let base = base.unwrap_or_else(|| max_fundable(&self.config, demands));
        let mut with = demands.to_vec();
        with[class] += bw;
        let flow_gap = base + bw - max_fundable(&self.config, &with);
        let physical = (reserved + bw - self.config.capacity.tenths()).max(0);
        flow_gap.max(physical)
    }

    /// Plans the admission of a request. Never mutates the link.
    pub fn try_admit(&self, class: ClassId, bandwidth: Bandwidth) -> Result<AdmissionDecision, GbamError> {
        let n = self.config.classes();
        if class.index() >= n {
            return Err(GbamError::UnknownClass { class, classes: n });
        }
        if bandwidth <= Bandwidth::ZERO {
            return Err(GbamError::NonPositiveBandwidth(bandwidth));
        }
        let decision = |outcome| AdmissionDecision {
            planned_on: self.version,
            class,
            bandwidth,
            outcome,
        };
        let r = class.index();
        let bw = bandwidth.tenths();
        let clean = self.overhang().is_zero();

        if clean {
            let mut spare = self.spare();
            if let Some(funding) = fill_from_spare(&self.config, r, bw, &mut spare) {
                return Ok(decision(Admission::Admit { funding, migrations: Vec::new() }));
            }
        }

        let mut demands = self.class_demands();
        let mut reserved = self.reserved().tenths();
        // Without overhang every subset of the active set is fully fundable.
        let base = |d: &[i64]| if clean { Some(d.iter().sum()) } else { None };
        let mut gap = self.shortfall(&demands, reserved, r, bw, base(&demands));
        if gap == 0 {
            let (funding, migrations) = self.refund_with(&[], class, bandwidth);
            return Ok(decision(Admission::Admit { funding, migrations }));
        }

        // Victim candidates: lower classes (preemption), and LSPs holding a
        // loan on the requester's pool (devolution). Lowest class first,
        // newest first within a class.
        let mut candidates: Vec<Victim> = self
            .active
            .iter()
            .filter_map(|(id, res)| {
                let kind = if res.class < class {
                    ReclaimKind::Preemption
                } else if res.class > class && self.config.lth && !res.funding.shared[r].is_zero() {
                    ReclaimKind::Devolution
                } else {
                    return None;
                };
                Some(Victim { lsp: *id, class: res.class, kind })
            })
            .collect();
        candidates.sort_by(|a, b| a.class.cmp(&b.class).then(b.lsp.cmp(&a.lsp)));

        let mut removed = vec![false; candidates.len()];
        let mut victims = Vec::new();
        'passes: while gap > 0 {
            let mut progress = false;
            // The shortfall is convex in each class demand, so once removing
            // one LSP of a class does not help, no other LSP of that class
            // helps until another class changes. Only exact without overhang.
            let mut exhausted = vec![false; n];
            for (i, cand) in candidates.iter().enumerate() {
                if removed[i] || (clean && exhausted[cand.class.index()]) {
                    continue;
                }
                let bw_x = self.active[&cand.lsp].bandwidth.tenths();
                let c = cand.class.index();
                demands[c] -= bw_x;
                let next = self.shortfall(&demands, reserved - bw_x, r, bw, base(&demands));
                if next < gap {
                    removed[i] = true;
                    victims.push(*cand);
                    reserved -= bw_x;
                    gap = next;
                    progress = true;
                    if gap == 0 {
                        break 'passes;
                    }
                } else {
                    demands[c] += bw_x;
                    exhausted[c] = true;
                }
            }
            if !progress {
                break;
            }
        }
        if gap > 0 {
            return Ok(decision(Admission::Block));
        }

        let victim_ids: Vec<LspId> = victims.iter().map(|v| v.lsp).collect();
        if clean {
            let mut spare = self.spare();
            for id in &victim_ids {
                let res = &self.active[id];
                spare.return_funding(res.class.index(), &res.funding);
            }
            if let Some(funding) = fill_from_spare(&self.config, r, bw, &mut spare) {
                return Ok(decision(Admission::AdmitAfterReclaim {
                    victims,
                    funding,
                    migrations: Vec::new(),
                }));
            }
        }
        let (funding, migrations) = self.refund_with(&victim_ids, class, bandwidth);
        Ok(decision(Admission::AdmitAfterReclaim { victims, funding, migrations }))
    }

    /// Re-funds every active LSP except `excluded`, plus a new request
    /// treated as the newest LSP. Returns the request's funding and the
    /// funding vectors that changed.
    fn refund_with(
        &self,
        excluded: &[LspId],
        class: ClassId,
        bandwidth: Bandwidth,
    ) -> (FundingVector, Vec<(LspId, FundingVector)>) {
        let n = self.config.classes();
        let members: Vec<(LspId, &Reservation)> = self
            .active
            .iter()
            .filter(|(id, _)| !excluded.contains(id))
            .map(|(id, r)| (*id, r))
            .collect();
        let mut demands = vec![0; n];
        for (_, res) in &members {
            demands[res.class.index()] += res.bandwidth.tenths();
        }
        demands[class.index()] += bandwidth.tenths();
        let alloc = allocate(&self.config, &demands);
        let mut request_funding = FundingVector::empty(n);
        let mut migrations = Vec::new();
        for c in 0..n {
            let of_class: Vec<&(LspId, &Reservation)> =
                members.iter().filter(|(_, res)| res.class.index() == c).collect();
            let mut bws: Vec<Bandwidth> = of_class.iter().map(|(_, res)| res.bandwidth).collect();
            if c == class.index() {
                bws.push(bandwidth);
            }
            let mut fvs = distribute(n, &alloc.per_class[c], &bws);
            if c == class.index() {
                request_funding = fvs.pop().expect("request funding");
            }
            for ((id, res), fv) in of_class.into_iter().zip(fvs) {
                if res.funding != fv {
                    migrations.push((*id, fv));
                }
            }
        }
        (request_funding, migrations)
    }

    /// Applies a decision planned by [`LinkState::try_admit`] on this exact
    /// state. Returns the victims removed from this link.
    pub fn commit(&mut self, decision: &AdmissionDecision, id: LspId) -> Result<Vec<Victim>, GbamError> {
        if decision.planned_on != self.version {
            return Err(GbamError::StaleDecision {
                planned: decision.planned_on,
                current: self.version,
            });
        }
        if self.active.contains_key(&id) {
            return Err(GbamError::DuplicateLsp(id));
        }
        let (victims, funding, migrations) = match &decision.outcome {
            Admission::Block => return Err(GbamError::NothingToCommit),
            Admission::Admit { funding, migrations } => (&[][..], funding, migrations),
            Admission::AdmitAfterReclaim { victims, funding, migrations } => (&victims[..], funding, migrations),
        };
        for v in victims {
            self.active.remove(&v.lsp).ok_or(GbamError::UnknownLsp(v.lsp))?;
        }
        for (mid, fv) in migrations {
            self.active
                .get_mut(mid)
                .ok_or(GbamError::UnknownLsp(*mid))?
                .funding = fv.clone();
        }
        self.active.insert(
            id,
            Reservation {
                class: decision.class,
                bandwidth: decision.bandwidth,
                funding: funding.clone(),
            },
        );
        self.version += 1;
        debug_assert_eq!(self.check_invariants(), Ok(()));
        Ok(victims.to_vec())
    }

    /// Removes an LSP and returns its funding to the pools. Other LSPs keep
    /// their funding.
    pub fn release(&mut self, id: LspId) -> Result<Reservation, GbamError> {
        let res = self.active.remove(&id).ok_or(GbamError::UnknownLsp(id))?;
        self.version += 1;
        Ok(res)
    }

    fn check_shape(&self, config: &GBamLinkConfig) {
        assert_eq!(
            config.classes(),
            self.config.classes(),
            "reconfiguration must keep the class count"
        );
    }

    /// Switches to `config` at once. Active LSPs are re-funded by descending
    /// class, oldest first; every LSP that cannot be fully funded is removed
    /// and returned.
    pub fn apply_config_hard(&mut self, config: GBamLinkConfig) -> Vec<LspId> {
        self.check_shape(&config);
        let n = config.classes();
        let mut order: Vec<(LspId, ClassId, i64)> = self
            .active
            .iter()
            .map(|(id, r)| (*id, r.class, r.bandwidth.tenths()))
            .collect();
        order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut kept = vec![0i64; n];
        let mut kept_total = 0;
        let mut preempted = Vec::new();
        for (id, class, bw) in order {
            kept[class.index()] += bw;
            if max_fundable(&config, &kept) == kept_total + bw {
                kept_total += bw;
            } else {
                kept[class.index()] -= bw;
                preempted.push(id);
            }
        }
        for id in &preempted {
            self.active.remove(id);
        }
        self.config = config;
        self.refund_all();
        self.version += 1;
        debug_assert_eq!(self.check_invariants(), Ok(()));
        debug_assert!(self.overhang().is_zero());
        preempted.sort();
        preempted
    }

    /// Moves to `config` without tearing anything down. LSPs the new
    /// configuration cannot fund stay up partially funded (grandfathered).
    pub fn apply_config_soft_step(&mut self, config: GBamLinkConfig) -> SoftStepReport {
        self.check_shape(&config);
        self.config = config;
        self.refund_all();
        self.version += 1;
        debug_assert_eq!(self.check_invariants(), Ok(()));
        let grandfathered: Vec<LspId> = self
            .active
            .iter()
            .filter(|(_, r)| !r.unfunded().is_zero())
            .map(|(id, _)| *id)
            .collect();
        SoftStepReport {
            overhang: self.overhang(),
            grandfathered,
        }
    }

    /// Funds every active LSP, higher classes first and older LSPs first
    /// within a class.
    fn refund_all(&mut self) {
        let n = self.config.classes();
        let demands = self.class_demands();
        let alloc = allocate(&self.config, &demands);
        for c in 0..n {
            let ids: Vec<LspId> = self
                .active
                .iter()
                .filter(|(_, r)| r.class.index() == c)
                .map(|(id, _)| *id)
                .collect();
            let bws: Vec<Bandwidth> = ids.iter().map(|id| self.active[id].bandwidth).collect();
            for (id, fv) in ids.into_iter().zip(distribute(n, &alloc.per_class[c], &bws)) {
                self.active.get_mut(&id).expect("active").funding = fv;
            }
        }
    }
}
