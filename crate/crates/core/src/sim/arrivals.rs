//! Phased Poisson request generators.
//!
//! Each generator owns three ChaCha streams keyed by the master seed: one
//! for inter-arrival gaps, one for bandwidths and one for holding times.
//! Admission outcomes never touch these streams, so the request sequence of
//! a seed is the same under every BAM configuration.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::model::{Bandwidth, ClassId, PhaseSchedule, ScenarioConfig};

const STREAMS_PER_GENERATOR: u64 = 3;

#[derive(Clone, Debug)]
pub struct Generator {
    pub id: usize,
    pub class: ClassId,
    /// Index of the route (one route per destination).
    pub route: usize,
    gaps: ChaCha8Rng,
    sizes: ChaCha8Rng,
    holdings: ChaCha8Rng,
}

fn stream(seed: u64, id: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64 * STREAMS_PER_GENERATOR + purpose);
    rng
}

impl Generator {
    pub fn new(id: usize, class: ClassId, route: usize, seed: u64) -> Self {
        Generator {
            id,
            class,
            route,
            gaps: stream(seed, id, 0),
            sizes: stream(seed, id, 1),
            holdings: stream(seed, id, 2),
        }
    }

    /// Time of the next request after `now`, `None` once the schedule is
    /// exhausted.
    ///
    /// A gap that crosses a phase boundary is discarded and redrawn from the
    /// boundary with the next phase's mean. By memorylessness this gives the
    /// exact piecewise-constant Poisson process. Inactive phases are skipped.
    pub fn next_arrival(&mut self, schedule: &PhaseSchedule, now: f64) -> Option<f64> {
        let class = self.class.index();
        let mut t = now;
        loop {
            let phase = schedule.phase_at(t)?;
            let end = schedule.end(phase);
            if let Some(mean) = schedule.mean(class, phase) {
                let gap: f64 = self.gaps.sample(Exp1);
                let next = t + gap * mean;
                if next < end {
                    return Some(next);
                }
            }
            t = end;
        }
    }

    /// Uniform bandwidth on the 0.1 Mbps grid, bounds inclusive.
    pub fn draw_bandwidth(&mut self, range: [Bandwidth; 2]) -> Bandwidth {
        Bandwidth::from_tenths(self.sizes.random_range(range[0].tenths()..=range[1].tenths()))
    }

    pub fn draw_holding(&mut self, mean: f64) -> f64 {
        let e: f64 = self.holdings.sample(Exp1);
        e * mean
    }
}

/// One generator per (class, route) pair, ids in class-major order.
pub fn make_generators(scenario: &ScenarioConfig, seed: u64) -> Vec<Generator> {
    let routes = scenario.routes.len();
    (0..scenario.classes)
        .flat_map(|c| (0..routes).map(move |r| (c, r)))
        .enumerate()
        .map(|(id, (c, r))| Generator::new(id, ClassId(c), r, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule() -> PhaseSchedule {
        // Table II.
        PhaseSchedule {
            end_times: vec![300.0, 600.0, 900.0, 1500.0, 1800.0, 2100.0, 2500.0, 3600.0],
            mean_interarrival: vec![
                vec![8.0; 8],
                vec![0.0, 8.0, 8.0, 8.0, 100.0, 100.0, 8.0, 50.0],
                vec![0.0, 0.0, 8.0, 100.0, 100.0, 8.0, 8.0, 50.0],
            ],
        }
    }

    #[test]
    fn inactive_phases_are_skipped() {
        let s = schedule();
        let mut g = Generator::new(0, ClassId(2), 0, 7);
        for _ in 0..200 {
            let t = g.next_arrival(&s, 450.0).unwrap();
            assert!(t >= 600.0);
        }
        let mut g = Generator::new(0, ClassId(1), 0, 7);
        assert!(g.next_arrival(&s, 10.0).unwrap() >= 300.0);
    }

    #[test]
    fn exhausted_at_horizon() {
        let s = schedule();
        let mut g = Generator::new(0, ClassId(0), 0, 1);
        assert_eq!(g.next_arrival(&s, 3600.0), None);
        let mut t = 0.0;
        let mut n = 0;
        while let Some(next) = g.next_arrival(&s, t) {
            assert!(next > t && next < 3600.0);
            t = next;
            n += 1;
        }
        assert!((350..550).contains(&n), "{n}");
    }

    #[test]
    fn empirical_mean_gap() {
        // One long phase with mean 100: 10^5 gaps, sample mean within 2%.
        let s = PhaseSchedule { end_times: vec![1e12], mean_interarrival: vec![vec![100.0]] };
        let mut g = Generator::new(3, ClassId(0), 0, 42);
        let n = 100_000;
        let mut t = 0.0;
        for _ in 0..n {
            t = g.next_arrival(&s, t).unwrap();
        }
        let mean = t / n as f64;
        assert!((mean - 100.0).abs() < 2.0, "{mean}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = schedule();
        let mut a = Generator::new(4, ClassId(1), 1, 9);
        let mut b = Generator::new(4, ClassId(1), 1, 9);
        let mut c = Generator::new(5, ClassId(1), 2, 9);
        let ta = a.next_arrival(&s, 0.0);
        assert_eq!(ta, b.next_arrival(&s, 0.0));
        assert_ne!(ta, c.next_arrival(&s, 0.0));
        let range = [Bandwidth::from_tenths(50), Bandwidth::from_tenths(150)];
        for _ in 0..1000 {
            let bw = a.draw_bandwidth(range);
            assert!((50..=150).contains(&bw.tenths()));
            assert!(a.draw_holding(200.0) >= 0.0);
        }
    }
}
