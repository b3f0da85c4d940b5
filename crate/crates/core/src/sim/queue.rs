//! Future event list.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::model::LspId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Departure(LspId),
    /// Next request of a generator.
    Arrival(usize),
    WindowTick(usize),
    ControllerEval(usize),
    /// A planned configuration step: `transition` identifies the plan so a
    /// newer plan can supersede the remaining steps of an older one.
    ApplyStep { transition: u64, step: usize },
}

impl EventKind {
    /// Order among events scheduled at the same instant. Departures go
    /// first so freed bandwidth is visible to simultaneous arrivals.
    fn rank(&self) -> u8 {
        match self {
            EventKind::Departure(_) => 0,
            EventKind::Arrival(_) => 1,
            EventKind::WindowTick(_) => 2,
            EventKind::ControllerEval(_) => 3,
            EventKind::ApplyStep { .. } => 4,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Scheduled {
    time: f64,
    rank: u8,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.rank.cmp(&other.rank))
            .then(self.seq.cmp(&other.seq))
    }
}

/// Min-queue on `(time, kind rank, insertion order)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, kind: EventKind) {
        debug_assert!(time.is_finite());
        self.seq += 1;
        self.heap.push(Reverse(Scheduled { time, rank: kind.rank(), seq: self.seq, kind }));
    }

    pub fn pop(&mut self) -> Option<(f64, EventKind)> {
        self.heap.pop().map(|Reverse(s)| (s.time, s.kind))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
