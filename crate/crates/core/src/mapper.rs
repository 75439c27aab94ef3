//! Mapping table that redirects primary destinations to the secondary PEs
//! the current scheduling plan assigned to them.

use std::collections::VecDeque;

use thiserror::Error;

use crate::profiler::SchedulingPlan;
use crate::tuple::RoutedTuple;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapperError {
    #[error("mapper needs m >= 1 and x <= m-1 (m={m}, x={x})")]
    Shape { m: usize, x: usize },
    #[error("secondary PE already placed: {0}")]
    AlreadyPlaced(usize),
    #[error("row overflow: primary {0} already holds every secondary slot")]
    RowOverflow(usize),
    #[error("secondary PE {secpe} or primary PE {pripe} out of range")]
    OutOfRange { secpe: usize, pripe: usize },
}

/// The `M x (X + 1)` table, its per-row counters and round-robin cursors.
///
/// Column 0 of row `r` is always `r`; columns `1..counters[r]` hold the
/// secondary PEs currently helping primary `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingState {
    m: usize,
    x: usize,
    table: Vec<usize>,
    counters: Vec<usize>,
    cursors: Vec<usize>,
    placed: Vec<bool>,
    pending: VecDeque<(usize, usize)>,
    row_seen: Vec<usize>,
}

impl MappingState {
    pub fn new(m: usize, x: usize) -> Result<Self, MapperError> {
        if m == 0 || x >= m {
            return Err(MapperError::Shape { m, x });
        }
        let cols = x + 1;
        Ok(Self {
            m,
            x,
            table: (0..m * cols).map(|i| i / cols).collect(),
            counters: vec![1; m],
            cursors: vec![0; m],
            placed: vec![false; x],
            pending: VecDeque::new(),
            row_seen: vec![0; m],
        })
    }

    pub fn primaries(&self) -> usize {
        self.m
    }

    pub fn secondaries(&self) -> usize {
        self.x
    }

    /// Full row `r`, all `X + 1` columns.
    pub fn row(&self, r: usize) -> &[usize] {
        let cols = self.x + 1;
        &self.table[r * cols..(r + 1) * cols]
    }

    /// The PEs currently serving row `r`, primary first.
    pub fn active(&self, r: usize) -> &[usize] {
        &self.row(r)[..self.counters[r]]
    }

    pub fn counters(&self) -> &[usize] {
        &self.counters
    }

    pub fn cursor(&self, r: usize) -> usize {
        self.cursors[r]
    }

    /// True when no row has a helper installed.
    pub fn is_identity(&self) -> bool {
        self.counters.iter().all(|&c| c == 1)
    }

    /// Writes one `secondary -> primary` pair at the row's counter position.
    pub fn apply_plan_pair(&mut self, secpe: usize, pripe: usize) -> Result<(), MapperError> {
        if pripe >= self.m || secpe < self.m || secpe >= self.m + self.x {
            return Err(MapperError::OutOfRange { secpe, pripe });
        }
        let count = self.counters[pripe];
        if count > self.x {
            return Err(MapperError::RowOverflow(pripe));
        }
        if self.placed[secpe - self.m] {
            return Err(MapperError::AlreadyPlaced(secpe));
        }
        self.table[pripe * (self.x + 1) + count] = secpe;
        self.counters[pripe] += 1;
        self.placed[secpe - self.m] = true;
        Ok(())
    }

    /// Returns the next PE of row `pripe` in round-robin order.
    pub fn redirect(&mut self, pripe: usize) -> usize {
        let pe = self.row(pripe)[self.cursors[pripe]];
        self.cursors[pripe] = (self.cursors[pripe] + 1) % self.counters[pripe];
        pe
    }

    /// Redirects a whole routing batch without touching the cursors.
    ///
    /// Lanes are resolved in lane order against one shared snapshot, so the
    /// k-th tuple of row `r` in this batch takes the PE `k` positions after
    /// the row's cursor. The result equals calling [`redirect`](Self::redirect)
    /// once per lane; [`advance_cursors`](Self::advance_cursors) commits it.
    pub fn redirect_batch(&mut self, batch: &[RoutedTuple], out: &mut Vec<RoutedTuple>) {
        out.clear();
        for t in batch {
            let r = t.dst;
            let k = self.row_seen[r];
            self.row_seen[r] += 1;
            let col = (self.cursors[r] + k) % self.counters[r];
            out.push(RoutedTuple {
                dst: self.row(r)[col],
                ..*t
            });
        }
        for t in batch {
            self.row_seen[t.dst] = 0;
        }
    }

    /// Commits the cursor movement of a batch that was accepted.
    pub fn advance_cursors(&mut self, batch: &[RoutedTuple]) {
        for t in batch {
            let r = t.dst;
            self.cursors[r] = (self.cursors[r] + 1) % self.counters[r];
        }
    }

    /// Queues a plan's pairs for one-per-cycle installation.
    pub fn enqueue_plan(&mut self, plan: &SchedulingPlan) {
        self.pending.extend(plan.pairs(self.m));
    }

    pub fn pending_pairs(&self) -> usize {
        self.pending.len()
    }

    /// Installs the oldest queued pair, if any.
    pub fn install_next_pair(&mut self) -> Result<Option<(usize, usize)>, MapperError> {
        match self.pending.pop_front() {
            Some((sec, pri)) => {
                self.apply_plan_pair(sec, pri)?;
                Ok(Some((sec, pri)))
            }
            None => Ok(None),
        }
    }

    /// Back to the identity mapping; queued pairs are dropped.
    pub fn reset(&mut self) {
        let cols = self.x + 1;
        for (i, slot) in self.table.iter_mut().enumerate() {
            *slot = i / cols;
        }
        self.counters.fill(1);
        self.cursors.fill(0);
        self.placed.fill(false);
        self.pending.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple::TupleRecord;
    use proptest::prelude::*;

    fn figure_five_state() -> MappingState {
        let mut s = MappingState::new(4, 3).unwrap();
        s.apply_plan_pair(4, 2).unwrap();
        s.apply_plan_pair(5, 2).unwrap();
        s.apply_plan_pair(6, 0).unwrap();
        s
    }

    #[test]
    fn initial_table_is_filled_with_row_ids() {
        let s = MappingState::new(4, 3).unwrap();
        for r in 0..4 {
            assert_eq!(s.row(r), &[r; 4]);
        }
        assert_eq!(s.counters(), &[1, 1, 1, 1]);
        let s = MappingState::new(1, 0).unwrap();
        assert_eq!(s.row(0), &[0]);
        assert_eq!(s.counters(), &[1]);
    }

    #[test]
    fn fresh_state_redirects_to_itself() {
        let mut s = MappingState::new(8, 5).unwrap();
        for r in 0..8 {
            for _ in 0..3 {
                assert_eq!(s.redirect(r), r);
            }
        }
    }

    #[test]
    fn shape_guard() {
        assert!(MappingState::new(0, 0).is_err());
        assert!(MappingState::new(4, 4).is_err());
    }

    #[test]
    fn plan_pairs_fill_rows_left_to_right() {
        let s = figure_five_state();
        assert_eq!(&s.row(2)[..3], &[2, 4, 5]);
        assert_eq!(s.counters()[2], 3);
        assert_eq!(&s.row(0)[..2], &[0, 6]);
        assert_eq!(s.counters()[0], 2);
        assert_eq!(s.counters()[1], 1);
    }

    #[test]
    fn round_robin_sequences_follow_the_table() {
        let mut s = figure_five_state();
        let zero: Vec<usize> = (0..6).map(|_| s.redirect(0)).collect();
        assert_eq!(zero, vec![0, 6, 0, 6, 0, 6]);
        let two: Vec<usize> = (0..6).map(|_| s.redirect(2)).collect();
        assert_eq!(two, vec![2, 4, 5, 2, 4, 5]);
        assert!((0..5).all(|_| s.redirect(3) == 3));
    }

    #[test]
    fn duplicate_and_overflow_are_rejected() {
        let mut s = MappingState::new(4, 3).unwrap();
        s.apply_plan_pair(4, 2).unwrap();
        let err = s.apply_plan_pair(4, 2).unwrap_err();
        assert!(err.to_string().contains("secondary PE already placed"));

        // A row can take at most X helpers; the X+1-th pair has nowhere to go.
        let mut s = MappingState::new(4, 3).unwrap();
        for sec in 4..7 {
            s.apply_plan_pair(sec, 1).unwrap();
        }
        let err = s.apply_plan_pair(4, 1).unwrap_err();
        assert!(err.to_string().contains("row overflow"));
    }

    #[test]
    fn reset_restores_identity() {
        let mut s = figure_five_state();
        s.redirect(2);
        s.reset();
        assert!((0..10).all(|_| s.redirect(2) == 2));
        assert_eq!(s, MappingState::new(4, 3).unwrap());
        let mut fresh = MappingState::new(4, 3).unwrap();
        let copy = fresh.clone();
        fresh.reset();
        assert_eq!(fresh, copy);
    }

    #[test]
    fn reset_drops_queued_pairs() {
        let mut s = MappingState::new(4, 3).unwrap();
        s.enqueue_plan(&SchedulingPlan::new(vec![2, 2, 0]));
        assert_eq!(s.pending_pairs(), 3);
        s.install_next_pair().unwrap();
        s.reset();
        assert_eq!(s.pending_pairs(), 0);
        assert!(s.is_identity());
    }

    #[test]
    fn installing_a_plan_matches_direct_pair_application() {
        let mut s = MappingState::new(4, 3).unwrap();
        s.enqueue_plan(&SchedulingPlan::new(vec![2, 2, 0]));
        let mut installed = Vec::new();
        while let Some(p) = s.install_next_pair().unwrap() {
            installed.push(p);
        }
        assert_eq!(installed, vec![(4, 2), (5, 2), (6, 0)]);
        assert_eq!(s, figure_five_state());
    }

    fn routed(dsts: &[usize]) -> Vec<RoutedTuple> {
        dsts.iter()
            .map(|&d| RoutedTuple::new(TupleRecord::new(d as u64, 0), d, 0))
            .collect()
    }

    proptest! {
        #[test]
        fn batch_redirect_equals_sequential_redirect(
            plan in proptest::collection::vec(0usize..4, 3),
            batches in proptest::collection::vec(proptest::collection::vec(0usize..4, 0..=8), 1..20),
        ) {
            let mut seq = MappingState::new(4, 3).unwrap();
            seq.enqueue_plan(&SchedulingPlan::new(plan));
            while seq.install_next_pair().unwrap().is_some() {}
            let mut bat = seq.clone();
            let mut out = Vec::new();
            for b in &batches {
                let batch = routed(b);
                bat.redirect_batch(&batch, &mut out);
                bat.advance_cursors(&batch);
                let expect: Vec<usize> = b.iter().map(|&r| seq.redirect(r)).collect();
                let got: Vec<usize> = out.iter().map(|t| t.dst).collect();
                prop_assert_eq!(got, expect);
            }
            prop_assert_eq!(bat.cursors, seq.cursors);
        }

        #[test]
        fn rotation_is_fair(plan in proptest::collection::vec(0usize..6, 0..=5), k in 1usize..5) {
            let mut s = MappingState::new(6, 5).unwrap();
            let plan = SchedulingPlan::new(plan);
            s.enqueue_plan(&plan);
            while s.install_next_pair().unwrap().is_some() {}
            for r in 0..6 {
                let active = s.active(r).to_vec();
                let mut hits = std::collections::HashMap::new();
                for _ in 0..k * active.len() {
                    *hits.entry(s.redirect(r)).or_insert(0) += 1;
                }
                prop_assert_eq!(hits.len(), active.len());
                prop_assert!(hits.values().all(|&h| h == k));
                // Range ownership: only the primary or its own helpers.
                for pe in hits.keys() {
                    prop_assert!(*pe == r || plan.assignments()[*pe - 6] == r);
                }
            }
        }
    }
}
