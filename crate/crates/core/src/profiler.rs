//! Runtime profiler: workload histogram, greedy scheduling plan and the
//! throughput monitor that decides when to reschedule secondary PEs.

use std::cmp::Ordering;

/// Tuples observed per primary PE during one profiling window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadHistogram {
    pub counts: Vec<u64>,
    pub window_cycles: u64,
}

impl WorkloadHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// One histogram instance per routing lane; merged when the window closes.
#[derive(Debug, Clone)]
pub struct HistogramLanes {
    lanes: Vec<Vec<u64>>,
}

impl HistogramLanes {
    pub fn new(lanes: usize, primaries: usize) -> Self {
        Self {
            lanes: vec![vec![0; primaries]; lanes],
        }
    }

    /// Lane `i` counts `ids[i]`. `ids` are pre-mapping primary destinations.
    pub fn record_batch(&mut self, ids: impl IntoIterator<Item = usize>) {
        for (lane, id) in ids.into_iter().enumerate() {
            self.lanes[lane][id] += 1;
        }
    }

    pub fn partial(&self, lane: usize) -> &[u64] {
        &self.lanes[lane]
    }

    pub fn merge(&self, window_cycles: u64) -> WorkloadHistogram {
        let mut counts = vec![0; self.lanes.first().map_or(0, Vec::len)];
        for lane in &self.lanes {
            for (c, v) in counts.iter_mut().zip(lane) {
                *c += v;
            }
        }
        WorkloadHistogram {
            counts,
            window_cycles,
        }
    }

    pub fn clear(&mut self) {
        for lane in &mut self.lanes {
            lane.fill(0);
        }
    }
}

/// Entry `i` is the primary PE helped by secondary PE `M + i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SchedulingPlan {
    assignments: Vec<usize>,
}

impl SchedulingPlan {
    pub fn new(assignments: Vec<usize>) -> Self {
        Self { assignments }
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// `(secondary, primary)` pairs in installation order.
    pub fn pairs(&self, m: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .map(move |(i, &pri)| (m + i, pri))
    }

    /// Number of helpers each primary receives.
    pub fn helpers_per_row(&self, m: usize) -> Vec<u64> {
        let mut h = vec![0; m];
        for &r in &self.assignments {
            h[r] += 1;
        }
        h
    }
}

// counts[a] / (1 + ha)  vs  counts[b] / (1 + hb), exactly.
fn cmp_effective(ca: u64, ha: u64, cb: u64, hb: u64) -> Ordering {
    (ca as u128 * (1 + hb) as u128).cmp(&(cb as u128 * (1 + ha) as u128))
}

/// Greedy plan: `x` times, give the next secondary PE to the primary with the
/// largest effective workload `counts[r] / (1 + helpers(r))`. Ties go to the
/// lowest primary index.
pub fn generate_plan(hist: &WorkloadHistogram, x: usize) -> SchedulingPlan {
    let m = hist.counts.len();
    let mut helpers = vec![0u64; m];
    let mut assignments = Vec::with_capacity(x);
    for _ in 0..x {
        let mut best = 0;
        for r in 1..m {
            if cmp_effective(hist.counts[r], helpers[r], hist.counts[best], helpers[best])
                == Ordering::Greater
            {
                best = r;
            }
        }
        helpers[best] += 1;
        assignments.push(best);
    }
    SchedulingPlan { assignments }
}

/// The largest per-PE share of a histogram once `helpers` are applied.
pub fn max_effective_load(counts: &[u64], helpers: &[u64]) -> f64 {
    counts
        .iter()
        .zip(helpers)
        .map(|(&c, &h)| c as f64 / (1 + h) as f64)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Health {
    Healthy,
    Degraded,
}

/// Degraded iff `delta / window < threshold * reference`. A zero threshold never degrades.
pub fn check_throughput(reference: f64, threshold: f64, delta: u64, window: u64) -> Health {
    if threshold <= 0.0 {
        return Health::Healthy;
    }
    let observed = delta as f64 / window as f64;
    if observed < threshold * reference {
        Health::Degraded
    } else {
        Health::Healthy
    }
}

/// Clock-tick based throughput monitor.
///
/// The reference is the best window observed since the monitor was last
/// restarted (i.e. since the last plan took effect).
#[derive(Debug, Clone)]
pub struct ThroughputMonitor {
    window: u64,
    threshold: f64,
    tick: u64,
    window_count: u64,
    reference: f64,
}

impl ThroughputMonitor {
    pub fn new(window: u64, threshold: f64) -> Self {
        Self {
            window,
            threshold,
            tick: 0,
            window_count: 0,
            reference: 0.0,
        }
    }

    pub fn restart(&mut self) {
        self.tick = 0;
        self.window_count = 0;
        self.reference = 0.0;
    }

    pub fn ticks(&self) -> u64 {
        self.tick
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    /// Advances one cycle with `processed` tuples observed in it. Returns a
    /// verdict at the end of each window.
    pub fn tick(&mut self, processed: u64) -> Option<Health> {
        self.tick += 1;
        self.window_count += processed;
        if !self.tick.is_multiple_of(self.window) {
            return None;
        }
        let delta = std::mem::take(&mut self.window_count);
        let observed = delta as f64 / self.window as f64;
        if observed > self.reference {
            self.reference = observed;
        }
        Some(check_throughput(
            self.reference,
            self.threshold,
            delta,
            self.window,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist(counts: &[u64]) -> WorkloadHistogram {
        WorkloadHistogram {
            counts: counts.to_vec(),
            window_cycles: 256,
        }
    }

    #[test]
    fn lanes_count_their_own_ids() {
        let mut lanes = HistogramLanes::new(4, 3);
        lanes.record_batch([2, 0, 2, 1]);
        assert_eq!(lanes.partial(0), &[0, 0, 1]);
        assert_eq!(lanes.partial(1), &[1, 0, 0]);
        assert_eq!(lanes.partial(2), &[0, 0, 1]);
        assert_eq!(lanes.partial(3), &[0, 1, 0]);
        lanes.record_batch([]);
        assert_eq!(lanes.merge(1).counts, vec![1, 1, 2]);
    }

    #[test]
    fn window_total_bounded_by_lane_count() {
        let mut lanes = HistogramLanes::new(4, 4);
        for cycle in 0..256usize {
            let n = cycle % 5;
            lanes.record_batch((0..n.min(4)).map(|l| (l + cycle) % 4));
        }
        let h = lanes.merge(256);
        assert!(h.total() <= 256 * 4);
        lanes.clear();
        assert_eq!(lanes.merge(256).total(), 0);
    }

    #[test]
    fn hottest_primary_takes_helpers_until_it_is_no_longer_hottest() {
        // 600 -> 300 -> 200 < 250, so the third helper goes to primary 1.
        let plan = generate_plan(&hist(&[100, 250, 600, 74]), 3);
        assert_eq!(plan.assignments(), &[2, 2, 1]);
    }

    #[test]
    fn ties_break_toward_lowest_index() {
        let plan = generate_plan(&hist(&[64, 64, 64, 64]), 3);
        assert_eq!(plan.assignments(), &[0, 1, 2]);
    }

    #[test]
    fn single_hot_primary_takes_every_helper() {
        let plan = generate_plan(&hist(&[0, 0, 1024, 0]), 3);
        assert_eq!(plan.assignments(), &[2, 2, 2]);
        assert!(generate_plan(&hist(&[5, 1]), 0).is_empty());
    }

    #[test]
    fn exact_comparison_separates_near_ties() {
        // 3/2 vs 1: primary 0 must win; 2/2 vs 1: tie, lowest index wins.
        assert_eq!(generate_plan(&hist(&[3, 1]), 1).assignments(), &[0]);
        assert_eq!(generate_plan(&hist(&[2, 1]), 2).assignments(), &[0, 0]);
    }

    #[test]
    fn throughput_verdicts() {
        // 5.0 t/c against 0.8 * 8.0 = 6.4
        assert_eq!(check_throughput(8.0, 0.8, 5 * 1024, 1024), Health::Degraded);
        assert_eq!(check_throughput(8.0, 0.0, 0, 1024), Health::Healthy);
        // exactly at the threshold stays healthy
        assert_eq!(check_throughput(8.0, 0.5, 4 * 1024, 1024), Health::Healthy);
        assert_eq!(check_throughput(8.0, 1.0, 8 * 1024, 1024), Health::Healthy);
    }

    #[test]
    fn monitor_reference_is_best_window() {
        let mut mon = ThroughputMonitor::new(4, 0.8);
        let mut verdicts = Vec::new();
        for per_cycle in [8, 8, 7, 2, 8] {
            for _ in 0..4 {
                if let Some(v) = mon.tick(per_cycle) {
                    verdicts.push(v);
                }
            }
        }
        use Health::*;
        assert_eq!(verdicts, vec![Healthy, Healthy, Healthy, Degraded, Healthy]);
        assert_eq!(mon.reference(), 8.0);
        assert_eq!(mon.ticks(), 20);
        mon.restart();
        assert_eq!(mon.reference(), 0.0);
    }

    // Brute force: moving any single helper to another row never lowers the maximum.
    fn locally_optimal(counts: &[u64], plan: &SchedulingPlan) -> bool {
        let m = counts.len();
        let helpers = plan.helpers_per_row(m);
        let base = max_effective_load(counts, &helpers);
        for from in 0..m {
            if helpers[from] == 0 {
                continue;
            }
            for to in 0..m {
                if to == from {
                    continue;
                }
                let mut h = helpers.clone();
                h[from] -= 1;
                h[to] += 1;
                if max_effective_load(counts, &h) < base {
                    return false;
                }
            }
        }
        true
    }

    proptest! {
        #[test]
        fn greedy_plan_is_locally_optimal(
            (counts, x) in (1usize..=8).prop_flat_map(|m| (
                proptest::collection::vec(0u64..2000, m),
                0..m,
            ))
        ) {
            let plan = generate_plan(&hist(&counts), x);
            prop_assert_eq!(plan.len(), x);
            prop_assert!(plan.assignments().iter().all(|&r| r < counts.len()));
            prop_assert!(locally_optimal(&counts, &plan));
            prop_assert_eq!(plan.clone(), generate_plan(&hist(&counts), x));
        }
    }
}
