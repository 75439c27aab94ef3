//! Heavy hitter detection with count-min sketches.
//!
//! Keys are routed by hash, so each primary owns a disjoint key range and
//! keeps a full `rows x cols` sketch for it. A helper PE keeps its own
//! sketch of the same shape for the same range; count-min sketches are
//! linear, so adding the helper's counters into the primary's reproduces
//! exactly the sketch an unsplit PE would hold. Every PE also records the
//! keys it has seen, which become the candidates queried at the end.

use std::collections::{BTreeMap, HashSet};

use super::{AppError, AppKind, Application};
use crate::hash::murmur3_u64;
use crate::tuple::{RoutedTuple, TupleRecord};

#[derive(Debug, Clone)]
pub struct HeavyHitters {
    rows: usize,
    cols: usize,
    phi: f64,
    seed: u32,
    m: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SketchState {
    counters: Vec<u64>,
    candidates: HashSet<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeavyHitterOutput {
    /// Keys whose estimate reaches `phi * total`, ascending.
    pub reported: Vec<u64>,
    /// Count-min estimate of every candidate key.
    pub estimates: BTreeMap<u64, u64>,
    pub total: u64,
}

impl HeavyHitters {
    pub fn new(rows: usize, cols: usize, phi: f64, seed: u32, m: usize) -> Result<Self, AppError> {
        if rows == 0 || cols == 0 {
            return Err(AppError::InvalidParam(
                "sketch needs at least one row and column".into(),
            ));
        }
        if !(phi > 0.0 && phi <= 1.0) {
            return Err(AppError::InvalidParam(format!(
                "heavy threshold must be in (0, 1], got {phi}"
            )));
        }
        if m == 0 {
            return Err(AppError::InvalidParam(
                "need at least one primary PE".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            phi,
            seed,
            m,
        })
    }

    pub fn owner_of(&self, key: u64) -> usize {
        (murmur3_u64(key, self.seed) % self.m as u64) as usize
    }

    fn column(&self, key: u64, row: usize) -> usize {
        let h = murmur3_u64(key, self.seed.wrapping_add(1 + row as u32));
        row * self.cols + (h % self.cols as u64) as usize
    }

    fn query(&self, counters: &[u64], key: u64) -> u64 {
        (0..self.rows)
            .map(|r| counters[self.column(key, r)])
            .min()
            .unwrap_or(0)
    }

    fn report(&self, sketches: &[SketchState]) -> HeavyHitterOutput {
        let total: u64 = sketches
            .iter()
            .map(|s| s.counters[..self.cols].iter().sum::<u64>())
            .sum();
        let mut estimates = BTreeMap::new();
        for s in sketches {
            for &key in &s.candidates {
                estimates.insert(key, self.query(&s.counters, key));
            }
        }
        let cut = self.phi * total as f64;
        let reported = estimates
            .iter()
            .filter(|&(_, &e)| total > 0 && e as f64 >= cut)
            .map(|(&k, _)| k)
            .collect();
        HeavyHitterOutput {
            reported,
            estimates,
            total,
        }
    }
}

impl Application for HeavyHitters {
    type State = SketchState;
    type Output = HeavyHitterOutput;

    fn kind(&self) -> AppKind {
        AppKind::Hhd
    }

    fn primaries(&self) -> usize {
        self.m
    }

    fn prepare(&self, tuple: TupleRecord) -> RoutedTuple {
        RoutedTuple::new(tuple, self.owner_of(tuple.key), tuple.key)
    }

    fn new_state(&self) -> SketchState {
        SketchState {
            counters: vec![0; self.rows * self.cols],
            candidates: HashSet::new(),
        }
    }

    fn process(&self, state: &mut SketchState, item: &RoutedTuple) {
        let key = item.payload;
        for r in 0..self.rows {
            state.counters[self.column(key, r)] += 1;
        }
        state.candidates.insert(key);
    }

    fn combine(&self, into: &mut SketchState, from: SketchState) {
        for (a, b) in into.counters.iter_mut().zip(from.counters) {
            *a += b;
        }
        into.candidates.extend(from.candidates);
    }

    fn finalize(&self, rows: Vec<SketchState>) -> HeavyHitterOutput {
        self.report(&rows)
    }

    fn reference(&self, data: &[TupleRecord]) -> HeavyHitterOutput {
        let mut sketches: Vec<SketchState> = (0..self.m).map(|_| self.new_state()).collect();
        for t in data {
            let s = &mut sketches[self.owner_of(t.key)];
            for r in 0..self.rows {
                s.counters[self.column(t.key, r)] += 1;
            }
            s.candidates.insert(t.key);
        }
        self.report(&sketches)
    }

    fn same_result(&self, a: &HeavyHitterOutput, b: &HeavyHitterOutput) -> bool {
        a == b
    }

    fn buffer_units(&self) -> usize {
        self.rows * self.cols
    }
}
