//! Class-to-pool funding as a transportation problem.
//!
//! Network layout: source -> class node (capacity = class demand) -> pool
//! part (private part of the own pool, sharable part of every reachable pool)
//! -> sink (capacity = size of the part).

use super::flow::{FlowGraph, INF};
use crate::model::{Bandwidth, FundingVector, GBamLinkConfig};

/// A fundable slice of one pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Part {
    Private(usize),
    Shared(usize),
}

/// Order in which class `class` prefers to draw: own private part, own
/// sharable part, higher pools ascending (HTL), lower pools descending (LTH).
pub(crate) fn preference(config: &GBamLinkConfig, class: usize) -> Vec<Part> {
    let n = config.classes();
    let mut parts = vec![Part::Private(class), Part::Shared(class)];
    if config.htl {
        parts.extend((class + 1..n).map(Part::Shared));
    }
    if config.lth {
        parts.extend((0..class).rev().map(Part::Shared));
    }
    parts
}

struct FundingNet {
    g: FlowGraph,
    source: usize,
    sink: usize,
    class_node: Vec<usize>,
    source_edge: Vec<usize>,
    /// Per class, the access edges in preference order.
    access: Vec<Vec<(Part, usize, usize)>>,
}

impl FundingNet {
    fn build(config: &GBamLinkConfig, source_caps: &[i64]) -> Self {
        let n = config.classes();
        let source = 0;
        let sink = 1;
        let class_node: Vec<usize> = (0..n).map(|c| 2 + c).collect();
        let private_node = |k: usize| 2 + n + k;
        let shared_node = |k: usize| 2 + 2 * n + k;
        let mut g = FlowGraph::new(2 + 3 * n);
        let source_edge = (0..n)
            .map(|c| g.add_edge(source, class_node[c], source_caps[c]))
            .collect();
        for k in 0..n {
            g.add_edge(private_node(k), sink, config.pools[k].private.tenths());
            g.add_edge(shared_node(k), sink, config.pools[k].sharable().tenths());
        }
        let access = (0..n)
            .map(|c| {
                preference(config, c)
                    .into_iter()
                    .map(|part| {
                        let node = match part {
                            Part::Private(k) => private_node(k),
                            Part::Shared(k) => shared_node(k),
                        };
                        (part, node, g.add_edge(class_node[c], node, INF))
                    })
                    .collect()
            })
            .collect();
        FundingNet {
            g,
            source,
            sink,
            class_node,
            source_edge,
            access,
        }
    }
}

/// Largest total demand that can be funded at once.
pub(crate) fn max_fundable(config: &GBamLinkConfig, demands: &[i64]) -> i64 {
    let mut net = FundingNet::build(config, demands);
    let banned = vec![false; 2 + 3 * config.classes()];
    net.g.max_flow(net.source, net.sink, INF, &banned)
}

/// Per-class funding, each entry listing `(part, amount)` in preference
/// order.
#[derive(Clone, Debug)]
pub(crate) struct Allocation {
    pub per_class: Vec<Vec<(Part, i64)>>,
}

impl Allocation {
    #[cfg(test)]
    pub fn funded(&self, class: usize) -> i64 {
        self.per_class[class].iter().map(|(_, a)| a).sum()
    }
}

/// Funds as much demand as possible, higher classes first, then reshapes
/// the flow so every class draws as much as possible from its most preferred
/// parts (lexicographically, highest class first).
pub(crate) fn allocate(config: &GBamLinkConfig, demands: &[i64]) -> Allocation {
    let n = config.classes();
    let mut net = FundingNet::build(config, &vec![0; n]);
    let mut banned = vec![false; 2 + 3 * n];
    for c in (0..n).rev() {
        net.g.raise_capacity(net.source_edge[c], demands[c]);
        net.g.max_flow(net.source, net.sink, INF, &banned);
    }
    // Circulations through an access edge never pass the source, so class
    // totals stay fixed while attribution moves toward preferred parts.
    banned[net.source] = true;
    for c in (0..n).rev() {
        for i in 0..net.access[c].len() {
            let (_, node, e) = net.access[c][i];
            net.g.set_disabled(e, true);
            let extra = net.g.max_flow(node, net.class_node[c], INF, &banned);
            net.g.push_on(e, extra);
        }
    }
    let per_class = net
        .access
        .iter()
        .map(|edges| edges.iter().map(|&(part, _, e)| (part, net.g.flow(e))).collect())
        .collect();
    Allocation { per_class }
}

/// Splits one class's allocation over its LSPs in the given order. Earlier
/// LSPs are funded first; only the tail can end up partially funded.
pub(crate) fn distribute(
    classes: usize,
    parts: &[(Part, i64)],
    bandwidths: &[Bandwidth],
) -> Vec<FundingVector> {
    let mut left: Vec<(Part, i64)> = parts.to_vec();
    let mut cursor = 0;
    bandwidths
        .iter()
        .map(|bw| {
            let mut need = bw.tenths();
            let mut fv = FundingVector::empty(classes);
            while need > 0 && cursor < left.len() {
                let (part, avail) = &mut left[cursor];
                let take = need.min(*avail);
                if take > 0 {
                    add_draw(&mut fv, *part, take);
                    *avail -= take;
                    need -= take;
                }
                if *avail == 0 {
                    cursor += 1;
                }
            }
            fv
        })
        .collect()
}

pub(crate) fn add_draw(fv: &mut FundingVector, part: Part, amount: i64) {
    match part {
        Part::Private(_) => fv.private += Bandwidth::from_tenths(amount),
        Part::Shared(k) => fv.shared[k] += Bandwidth::from_tenths(amount),
    }
}

/// Funds `amount` for `class` from spare part capacity without moving any
/// existing draw. `spare` is updated on success.
pub(crate) fn fill_from_spare(
    config: &GBamLinkConfig,
    class: usize,
    amount: i64,
    spare: &mut SpareParts,
) -> Option<FundingVector> {
    let mut fv = FundingVector::empty(config.classes());
    let mut need = amount;
    let mut taken = Vec::new();
    for part in preference(config, class) {
        if need == 0 {
            break;
        }
        let avail = spare.get(part);
        let take = need.min(avail);
        if take > 0 {
            add_draw(&mut fv, part, take);
            taken.push((part, take));
            need -= take;
        }
    }
    if need > 0 {
        return None;
    }
    for (part, take) in taken {
        spare.take(part, take);
    }
    Some(fv)
}

/// Unused capacity of every pool part.
#[derive(Clone, Debug)]
pub(crate) struct SpareParts {
    private: Vec<i64>,
    shared: Vec<i64>,
}

impl SpareParts {
    pub fn of_config(config: &GBamLinkConfig) -> Self {
        SpareParts {
            private: config.pools.iter().map(|p| p.private.tenths()).collect(),
            shared: config.pools.iter().map(|p| p.sharable().tenths()).collect(),
        }
    }

    pub fn take_funding(&mut self, owner: usize, fv: &FundingVector) {
        self.private[owner] -= fv.private.tenths();
        for (k, s) in fv.shared.iter().enumerate() {
            self.shared[k] -= s.tenths();
        }
    }

    pub fn return_funding(&mut self, owner: usize, fv: &FundingVector) {
        self.private[owner] += fv.private.tenths();
        for (k, s) in fv.shared.iter().enumerate() {
            self.shared[k] += s.tenths();
        }
    }

    fn get(&self, part: Part) -> i64 {
        match part {
            Part::Private(k) => self.private[k],
            Part::Shared(k) => self.shared[k],
        }
    }

    fn take(&mut self, part: Part, amount: i64) {
        match part {
            Part::Private(k) => self.private[k] -= amount,
            Part::Shared(k) => self.shared[k] -= amount,
        }
    }
}
