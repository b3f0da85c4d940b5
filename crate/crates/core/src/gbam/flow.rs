//! Dinic max-flow on a small integer network.
//!
//! Besides plain max-flow, edges can be disabled (excluded in both
//! directions) and nodes banned from augmenting paths. The funding solver
//! uses both to push flow around cycles through one edge while keeping
//! earlier decisions fixed.

use std::collections::VecDeque;

pub(crate) const INF: i64 = i64::MAX / 4;

#[derive(Clone, Debug)]
pub(crate) struct FlowGraph {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
    orig: Vec<i64>,
    disabled: Vec<bool>,
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        FlowGraph {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            orig: Vec::new(),
            disabled: Vec::new(),
        }
    }

    /// Adds `u -> v` with capacity `c` and returns the edge index. The
    /// residual twin is `index ^ 1`.
    pub fn add_edge(&mut self, u: usize, v: usize, c: i64) -> usize {
        let e = self.to.len();
        self.adj[u].push(e);
        self.to.push(v);
        self.cap.push(c);
        self.orig.push(c);
        self.disabled.push(false);
        self.adj[v].push(e + 1);
        self.to.push(u);
        self.cap.push(0);
        self.orig.push(0);
        self.disabled.push(false);
        e
    }

    pub fn flow(&self, e: usize) -> i64 {
        self.orig[e] - self.cap[e]
    }

    /// Raises the capacity of `e` by `delta` (keeps the current flow).
    pub fn raise_capacity(&mut self, e: usize, delta: i64) {
        self.cap[e] += delta;
        self.orig[e] += delta;
    }

    /// Excludes `e` from all future augmenting paths in both directions.
    pub fn set_disabled(&mut self, e: usize, disabled: bool) {
        self.disabled[e] = disabled;
        self.disabled[e ^ 1] = disabled;
    }

    /// Adds `amount` of flow on `e` without touching its endpoints' balance.
    /// Only meaningful as the closing edge of a cycle.
    pub fn push_on(&mut self, e: usize, amount: i64) {
        self.cap[e] -= amount;
        self.cap[e ^ 1] += amount;
    }

    fn usable(&self, e: usize) -> bool {
        !self.disabled[e] && self.cap[e] > 0
    }

    fn levels(&self, s: usize, t: usize, banned: &[bool]) -> Option<Vec<u32>> {
        let mut level = vec![u32::MAX; self.adj.len()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if self.usable(e) && level[v] == u32::MAX && !banned[v] {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (level[t] != u32::MAX).then_some(level)
    }

    fn augment(&mut self, u: usize, t: usize, pushed: i64, level: &[u32], it: &mut [usize]) -> i64 {
        if u == t {
            return pushed;
        }
        while it[u] < self.adj[u].len() {
            let e = self.adj[u][it[u]];
            let v = self.to[e];
            if self.usable(e) && level[v] == level[u] + 1 {
                let got = self.augment(v, t, pushed.min(self.cap[e]), level, it);
                if got > 0 {
                    self.cap[e] -= got;
                    self.cap[e ^ 1] += got;
                    return got;
                }
            }
            it[u] += 1;
        }
        0
    }

    /// Pushes up to `limit` additional units from `s` to `t`, never entering
    /// a banned node. Returns the amount pushed.
    pub fn max_flow(&mut self, s: usize, t: usize, limit: i64, banned: &[bool]) -> i64 {
        let mut total = 0;
        while total < limit {
            let Some(level) = self.levels(s, t, banned) else {
                break;
            };
            let mut it = vec![0; self.adj.len()];
            loop {
                let got = self.augment(s, t, limit - total, &level, &mut it);
                if got == 0 {
                    break;
                }
                total += got;
                if total >= limit {
                    break;
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_network() {
        // CLRS figure 26.1, max flow 23.
        let mut g = FlowGraph::new(6);
        g.add_edge(0, 1, 16);
        g.add_edge(0, 2, 13);
        g.add_edge(1, 3, 12);
        g.add_edge(2, 1, 4);
        g.add_edge(2, 4, 14);
        g.add_edge(3, 2, 9);
        g.add_edge(3, 5, 20);
        g.add_edge(4, 3, 7);
        g.add_edge(4, 5, 4);
        let banned = vec![false; 6];
        assert_eq!(g.max_flow(0, 5, INF, &banned), 23);
    }

    #[test]
    fn limit_and_ban_are_respected() {
        let mut g = FlowGraph::new(4);
        g.add_edge(0, 1, 10);
        g.add_edge(0, 2, 10);
        g.add_edge(1, 3, 10);
        g.add_edge(2, 3, 10);
        let mut banned = vec![false; 4];
        assert_eq!(g.max_flow(0, 3, 5, &banned), 5);
        banned[1] = true;
        assert_eq!(g.max_flow(0, 3, INF, &banned), 10);
    }

    #[test]
    fn disabled_edges_carry_nothing() {
        let mut g = FlowGraph::new(3);
        let e = g.add_edge(0, 1, 10);
        g.add_edge(1, 2, 10);
        g.set_disabled(e, true);
        assert_eq!(g.max_flow(0, 2, INF, &[false; 3]), 0);
        g.set_disabled(e, false);
        assert_eq!(g.max_flow(0, 2, INF, &[false; 3]), 10);
        assert_eq!(g.flow(e), 10);
    }
}
