//! Domain types shared by the allocation engine, the network layer and the
//! simulator. Values here carry no behavior beyond construction and
//! validation.

mod scenario;

pub use scenario::{
    validate_scenario, ControllerSection, LspSection, PhaseSchedule, Route, ScenarioConfig,
};

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub, SubAssign};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Bandwidth with a fixed resolution of 0.1 Mbps.
///
/// All ledger arithmetic is exact integer arithmetic on tenths of a Mbps.
/// Serialized as a plain number of Mbps (`248.8`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bandwidth(i64);

impl Bandwidth {
    pub const ZERO: Bandwidth = Bandwidth(0);

    pub const fn from_tenths(tenths: i64) -> Self {
        Bandwidth(tenths)
    }

    /// Rounds to the nearest 0.1 Mbps.
    pub fn from_mbps(mbps: f64) -> Self {
        Bandwidth((mbps * 10.0).round() as i64)
    }

    /// Like [`Bandwidth::from_mbps`] but rejects values that are not on the
    /// 0.1 Mbps grid or not finite.
    pub fn from_mbps_exact(mbps: f64) -> Option<Self> {
        if !mbps.is_finite() {
            return None;
        }
        let scaled = mbps * 10.0;
        if (scaled - scaled.round()).abs() > 1e-6 {
            return None;
        }
        Some(Bandwidth(scaled.round() as i64))
    }

    pub const fn tenths(self) -> i64 {
        self.0
    }

    pub fn mbps(self) -> f64 {
        self.0 as f64 / 10.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn min(self, other: Bandwidth) -> Bandwidth {
        Bandwidth(self.0.min(other.0))
    }

    pub fn saturating_sub(self, other: Bandwidth) -> Bandwidth {
        Bandwidth((self.0 - other.0).max(0))
    }
}

impl Add for Bandwidth {
    type Output = Bandwidth;
    fn add(self, rhs: Bandwidth) -> Bandwidth {
        Bandwidth(self.0 + rhs.0)
    }
}

impl Sub for Bandwidth {
    type Output = Bandwidth;
    fn sub(self, rhs: Bandwidth) -> Bandwidth {
        Bandwidth(self.0 - rhs.0)
    }
}

impl AddAssign for Bandwidth {
    fn add_assign(&mut self, rhs: Bandwidth) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Bandwidth {
    fn sub_assign(&mut self, rhs: Bandwidth) {
        self.0 -= rhs.0;
    }
}

impl Sum for Bandwidth {
    fn sum<I: Iterator<Item = Bandwidth>>(iter: I) -> Self {
        Bandwidth(iter.map(|b| b.0).sum())
    }
}

impl<'a> Sum<&'a Bandwidth> for Bandwidth {
    fn sum<I: Iterator<Item = &'a Bandwidth>>(iter: I) -> Self {
        Bandwidth(iter.map(|b| b.0).sum())
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.abs();
        write!(f, "{}{}.{}", sign, abs / 10, abs % 10)
    }
}

impl Serialize for Bandwidth {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.mbps())
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let mbps = f64::deserialize(deserializer)?;
        Bandwidth::from_mbps_exact(mbps).ok_or_else(|| {
            serde::de::Error::custom(format!(
                "bandwidth {mbps} Mbps is not a multiple of 0.1 Mbps"
            ))
        })
    }
}

/// Traffic class index. A larger index means a higher priority (TC0 is the
/// lowest).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u8);

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TC{}", self.0)
    }
}

/// Identifier of an LSP. Ids are handed out in setup order, so comparing two
/// ids compares their setup times.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LspId(pub u64);

impl fmt::Display for LspId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lsp{}", self.0)
    }
}

pub type NodeId = u32;

/// A directed link, written `from->to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId {
    pub from: NodeId,
    pub to: NodeId,
}

impl LinkId {
    pub const fn new(from: NodeId, to: NodeId) -> Self {
        LinkId { from, to }
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid link `{0}`, expected `<from>-><to>`")]
pub struct ParseLinkError(String);

impl FromStr for LinkId {
    type Err = ParseLinkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("->")
            .ok_or_else(|| ParseLinkError(s.to_string()))?;
        let from = a.trim().parse().map_err(|_| ParseLinkError(s.to_string()))?;
        let to = b.trim().parse().map_err(|_| ParseLinkError(s.to_string()))?;
        Ok(LinkId { from, to })
    }
}

impl Serialize for LinkId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LinkId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A nonempty sequence of links where consecutive links share a node.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Path {
    links: Vec<LinkId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("a path needs at least two nodes")]
    TooShort,
    #[error("links {0} and {1} are not contiguous")]
    NotContiguous(LinkId, LinkId),
    #[error("path visits node {0} twice")]
    Loop(NodeId),
}

impl Path {
    pub fn from_nodes(nodes: &[NodeId]) -> Result<Self, PathError> {
        if nodes.len() < 2 {
            return Err(PathError::TooShort);
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in nodes {
            if !seen.insert(*n) {
                return Err(PathError::Loop(*n));
            }
        }
        let links = nodes.windows(2).map(|w| LinkId::new(w[0], w[1])).collect();
        Ok(Path { links })
    }

    pub fn from_links(links: Vec<LinkId>) -> Result<Self, PathError> {
        if links.is_empty() {
            return Err(PathError::TooShort);
        }
        for w in links.windows(2) {
            if w[0].to != w[1].from {
                return Err(PathError::NotContiguous(w[0], w[1]));
            }
        }
        Ok(Path { links })
    }

    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    pub fn source(&self) -> NodeId {
        self.links[0].from
    }

    pub fn destination(&self) -> NodeId {
        self.links[self.links.len() - 1].to
    }

    pub fn contains(&self, link: LinkId) -> bool {
        self.links.contains(&link)
    }
}

/// A human readable invariant violation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl Violation {
    pub fn new(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Per-class pool of a G-BAM link: the allotment `A_c` and the part of it
/// that only class `c` may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPool {
    pub allotment: Bandwidth,
    pub private: Bandwidth,
}

impl ClassPool {
    /// The part of the pool other classes may draw on (subject to the
    /// sharing flags).
    pub fn sharable(&self) -> Bandwidth {
        self.allotment - self.private
    }
}

/// Operational parameters of one G-BAM link.
///
/// `htl` lets a class borrow unused sharable bandwidth of higher-priority
/// pools; `lth` lets a class borrow (as a loan) unused sharable bandwidth of
/// lower-priority pools.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GBamLinkConfig {
    pub capacity: Bandwidth,
    pub pools: Vec<ClassPool>,
    pub htl: bool,
    pub lth: bool,
}

impl GBamLinkConfig {
    pub fn classes(&self) -> usize {
        self.pools.len()
    }

    /// Whether `class` may draw on the sharable part of `pool`.
    pub fn may_draw(&self, class: usize, pool: usize) -> bool {
        match class.cmp(&pool) {
            std::cmp::Ordering::Equal => true,
            std::cmp::Ordering::Less => self.htl,
            std::cmp::Ordering::Greater => self.lth,
        }
    }

    pub fn total_allotment(&self) -> Bandwidth {
        self.pools.iter().map(|p| p.allotment).sum()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.pools.is_empty() {
            out.push(Violation::new("config", "at least one traffic class is required"));
        }
        if self.capacity < Bandwidth::ZERO {
            out.push(Violation::new("config", "capacity is negative"));
        }
        for (c, pool) in self.pools.iter().enumerate() {
            let subject = format!("TC{c}");
            if pool.allotment < Bandwidth::ZERO || pool.private < Bandwidth::ZERO {
                out.push(Violation::new(&subject, "negative bandwidth"));
            }
            if pool.private > pool.allotment {
                out.push(Violation::new(
                    &subject,
                    format!(
                        "private portion {} exceeds allotment {}",
                        pool.private, pool.allotment
                    ),
                ));
            }
        }
        if self.total_allotment() > self.capacity {
            out.push(Violation::new(
                "config",
                format!(
                    "allotments sum to {} which exceeds capacity {}",
                    self.total_allotment(),
                    self.capacity
                ),
            ));
        }
        out
    }
}

/// The BAM behaviors G-BAM can be configured to reproduce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PresetKind {
    Mam,
    Rdm,
    Grdm,
    Alloctc,
    Custom,
}

impl fmt::Display for PresetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PresetKind::Mam => "MAM",
            PresetKind::Rdm => "RDM",
            PresetKind::Grdm => "GRDM",
            PresetKind::Alloctc => "ALLOCTC",
            PresetKind::Custom => "CUSTOM",
        };
        f.write_str(s)
    }
}

/// A per-class bandwidth table, either absolute or relative to capacity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcTable {
    Mbps(Vec<Bandwidth>),
    Percent(Vec<f64>),
}

impl BcTable {
    pub fn len(&self) -> usize {
        match self {
            BcTable::Mbps(v) => v.len(),
            BcTable::Percent(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn resolve(&self, capacity: Bandwidth) -> Vec<Bandwidth> {
        match self {
            BcTable::Mbps(v) => v.clone(),
            BcTable::Percent(v) => v
                .iter()
                .map(|pct| Bandwidth::from_tenths((capacity.tenths() as f64 * pct / 100.0).round() as i64))
                .collect(),
        }
    }
}

/// A named BAM behavior: a kind plus its bandwidth-constraint table.
///
/// For `GRDM` the `private` table gives the per-class private portions. For
/// `CUSTOM` the `bc` table holds the pool allotments directly and the sharing
/// flags must be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPreset {
    pub kind: PresetKind,
    pub bc: BcTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private: Option<BcTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub htl: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lth: Option<bool>,
}

impl BehaviorPreset {
    pub fn new(kind: PresetKind, bc: BcTable) -> Self {
        BehaviorPreset {
            kind,
            bc,
            private: None,
            htl: None,
            lth: None,
        }
    }

    pub fn with_private(mut self, private: BcTable) -> Self {
        self.private = Some(private);
        self
    }

    /// Type-level invariants that can be checked without a link capacity
    /// beyond the one given.
    pub fn validate(&self, capacity: Bandwidth) -> Vec<Violation> {
        let bc = self.bc.resolve(capacity);
        let mut out = Vec::new();
        let subject = format!("{} preset", self.kind);
        if bc.is_empty() {
            out.push(Violation::new(&subject, "bandwidth constraint table is empty"));
            return out;
        }
        if bc.iter().any(|b| *b < Bandwidth::ZERO) {
            out.push(Violation::new(&subject, "negative bandwidth constraint"));
        }
        match self.kind {
            PresetKind::Mam | PresetKind::Custom => {
                let total: Bandwidth = bc.iter().sum();
                if total > capacity {
                    out.push(Violation::new(
                        &subject,
                        format!("constraints sum to {total}, more than capacity {capacity}"),
                    ));
                }
            }
            PresetKind::Rdm | PresetKind::Grdm | PresetKind::Alloctc => {
                for (c, w) in bc.windows(2).enumerate() {
                    if w[0] < w[1] {
                        out.push(Violation::new(
                            &subject,
                            format!("BC{} = {} is below BC{} = {}, table is not nested", c, w[0], c + 1, w[1]),
                        ));
                    }
                }
                if bc[0] > capacity {
                    out.push(Violation::new(
                        &subject,
                        format!("BC0 = {} exceeds capacity {capacity}", bc[0]),
                    ));
                }
            }
        }
        if let Some(private) = &self.private {
            if private.len() != bc.len() {
                out.push(Violation::new(&subject, "private table has a different class count"));
            }
        }
        if self.kind == PresetKind::Custom && (self.htl.is_none() || self.lth.is_none()) {
            out.push(Violation::new(&subject, "CUSTOM presets must set both htl and lth"));
        }
        out
    }
}

/// A request to set up an LSP.
#[derive(Clone, Debug, PartialEq)]
pub struct LspRequest {
    pub id: LspId,
    pub class: ClassId,
    pub bandwidth: Bandwidth,
    /// Index of the route in the scenario.
    pub route: usize,
    pub path: Arc<Path>,
    pub arrival_time: f64,
    pub holding_time: f64,
}

/// Per-link ledger of which pools fund one LSP.
///
/// `private` is drawn from the private part of the LSP's own pool;
/// `shared[k]` from the sharable part of pool `k`. The draws sum to the LSP
/// bandwidth except for LSPs grandfathered by a soft reconfiguration step,
/// whose unfunded remainder is reported as overhang.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FundingVector {
    pub private: Bandwidth,
    pub shared: Vec<Bandwidth>,
}

impl FundingVector {
    pub fn empty(classes: usize) -> Self {
        FundingVector {
            private: Bandwidth::ZERO,
            shared: vec![Bandwidth::ZERO; classes],
        }
    }

    pub fn total(&self) -> Bandwidth {
        self.private + self.shared.iter().sum::<Bandwidth>()
    }

    /// Total drawn from pool `k` by an LSP of class `owner`.
    pub fn draw_on(&self, owner: ClassId, pool: usize) -> Bandwidth {
        let private = if pool == owner.index() {
            self.private
        } else {
            Bandwidth::ZERO
        };
        private + self.shared.get(pool).copied().unwrap_or_default()
    }

    /// Whether any draw comes from a pool of lower priority than `owner`.
    pub fn has_lth_draw(&self, owner: ClassId) -> bool {
        self.shared[..owner.index().min(self.shared.len())]
            .iter()
            .any(|b| !b.is_zero())
    }

    pub fn has_htl_draw(&self, owner: ClassId) -> bool {
        self.shared
            .iter()
            .skip(owner.index() + 1)
            .any(|b| !b.is_zero())
    }
}

/// Lifecycle state of an LSP. Everything but `Active` is terminal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LspState {
    Active,
    Departed,
    Preempted,
    Devolved,
    HorizonEnd,
}

impl LspState {
    pub fn is_terminal(self) -> bool {
        self != LspState::Active
    }
}

/// An LSP known to the network: its request, when it was set up and its
/// current state. Per-link funding lives in the link states.
#[derive(Clone, Debug, PartialEq)]
pub struct Lsp {
    pub request: LspRequest,
    pub setup_time: f64,
    pub state: LspState,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_display_and_parse() {
        assert_eq!(Bandwidth::from_mbps(248.8).to_string(), "248.8");
        assert_eq!(Bandwidth::from_tenths(-15).to_string(), "-1.5");
        assert_eq!(Bandwidth::from_mbps_exact(186.6), Some(Bandwidth::from_tenths(1866)));
        assert_eq!(Bandwidth::from_mbps_exact(5.25), None);
        let json = serde_json::to_string(&Bandwidth::from_tenths(3732)).unwrap();
        assert_eq!(json, "373.2");
        assert!(serde_json::from_str::<Bandwidth>("0.05").is_err());
    }

    #[test]
    fn percent_table_matches_table_one() {
        let cap = Bandwidth::from_mbps(622.0);
        let rdm = BcTable::Percent(vec![100.0, 60.0, 30.0]).resolve(cap);
        assert_eq!(rdm, vec![Bandwidth::from_tenths(6220), Bandwidth::from_tenths(3732), Bandwidth::from_tenths(1866)]);
        let mam = BcTable::Percent(vec![40.0, 30.0, 30.0]).resolve(cap);
        assert_eq!(mam, vec![Bandwidth::from_tenths(2488), Bandwidth::from_tenths(1866), Bandwidth::from_tenths(1866)]);
    }

    #[test]
    fn link_id_round_trip() {
        let l: LinkId = "0->2".parse().unwrap();
        assert_eq!(l, LinkId::new(0, 2));
        assert_eq!(l.to_string(), "0->2");
        assert!("0-2".parse::<LinkId>().is_err());
    }

    #[test]
    fn path_requires_contiguity() {
        let p = Path::from_nodes(&[0, 2, 5]).unwrap();
        assert_eq!(p.links(), &[LinkId::new(0, 2), LinkId::new(2, 5)]);
        assert_eq!(p.destination(), 5);
        assert_eq!(
            Path::from_links(vec![LinkId::new(0, 2), LinkId::new(3, 5)]),
            Err(PathError::NotContiguous(LinkId::new(0, 2), LinkId::new(3, 5)))
        );
        assert_eq!(Path::from_nodes(&[1]), Err(PathError::TooShort));
        assert_eq!(Path::from_nodes(&[1, 2, 1]), Err(PathError::Loop(1)));
    }

    #[test]
    fn config_flags_private_above_allotment() {
        let cfg = GBamLinkConfig {
            capacity: Bandwidth::from_mbps(100.0),
            pools: vec![
                ClassPool { allotment: Bandwidth::from_mbps(50.0), private: Bandwidth::from_mbps(60.0) },
                ClassPool { allotment: Bandwidth::from_mbps(50.0), private: Bandwidth::ZERO },
            ],
            htl: true,
            lth: false,
        };
        let v = cfg.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].subject, "TC0");
    }

    #[test]
    fn funding_vector_draw_kinds() {
        let f = FundingVector {
            private: Bandwidth::from_mbps(1.0),
            shared: vec![Bandwidth::from_mbps(2.0), Bandwidth::ZERO, Bandwidth::from_mbps(3.0)],
        };
        assert_eq!(f.total(), Bandwidth::from_mbps(6.0));
        assert!(f.has_lth_draw(ClassId(1)));
        assert!(f.has_htl_draw(ClassId(1)));
        assert!(!f.has_lth_draw(ClassId(0)));
        assert_eq!(f.draw_on(ClassId(1), 1), Bandwidth::from_mbps(1.0));
        assert_eq!(f.draw_on(ClassId(1), 2), Bandwidth::from_mbps(3.0));
    }
}
