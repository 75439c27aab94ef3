//! Radix data partitioning.
//!
//! Partition `p = key mod fanout` is owned by primary `p mod M`. Each PE
//! stages tuples in one line buffer per owned partition and flushes full
//! lines to its own output region. Regions are never merged element-wise;
//! a helper's region is appended to its primary's for the same partition.

use super::{AppError, AppKind, Application};
use crate::tuple::{RoutedTuple, TupleRecord};

#[derive(Debug, Clone)]
pub struct DataPartitioning {
    fanout: usize,
    line: usize,
    m: usize,
}

/// One PE's line buffers and flushed output, indexed by local partition slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionBuffers {
    lines: Vec<Vec<TupleRecord>>,
    regions: Vec<Vec<TupleRecord>>,
}

impl DataPartitioning {
    pub fn new(fanout: usize, buffer_line: usize, m: usize) -> Result<Self, AppError> {
        if m == 0 || fanout == 0 || !fanout.is_multiple_of(m) {
            return Err(AppError::NotDivisible {
                what: "fanout",
                value: fanout,
                m,
            });
        }
        if buffer_line == 0 {
            return Err(AppError::InvalidParam(
                "buffer_line must be at least 1".into(),
            ));
        }
        Ok(Self {
            fanout,
            line: buffer_line,
            m,
        })
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    pub fn partition_of(&self, key: u64) -> usize {
        (key % self.fanout as u64) as usize
    }

    fn slots(&self) -> usize {
        self.fanout / self.m
    }
}

impl Application for DataPartitioning {
    type State = PartitionBuffers;
    type Output = Vec<Vec<TupleRecord>>;

    fn kind(&self) -> AppKind {
        AppKind::Dp
    }

    fn primaries(&self) -> usize {
        self.m
    }

    fn prepare(&self, tuple: TupleRecord) -> RoutedTuple {
        let p = self.partition_of(tuple.key);
        RoutedTuple::new(tuple, p % self.m, (p / self.m) as u64)
    }

    fn new_state(&self) -> PartitionBuffers {
        PartitionBuffers {
            lines: vec![Vec::with_capacity(self.line); self.slots()],
            regions: vec![Vec::new(); self.slots()],
        }
    }

    fn process(&self, state: &mut PartitionBuffers, item: &RoutedTuple) {
        let slot = item.payload as usize;
        let line = &mut state.lines[slot];
        line.push(item.tuple);
        if line.len() == self.line {
            state.regions[slot].append(line);
        }
    }

    fn combine(&self, into: &mut PartitionBuffers, from: PartitionBuffers) {
        // Concatenation: the donor's flushed lines, then its partial line.
        for (slot, (region, line)) in from.regions.into_iter().zip(from.lines).enumerate() {
            into.regions[slot].extend(region);
            into.regions[slot].extend(line);
        }
    }

    fn finalize(&self, rows: Vec<PartitionBuffers>) -> Vec<Vec<TupleRecord>> {
        let mut out = vec![Vec::new(); self.fanout];
        for (pe, row) in rows.into_iter().enumerate() {
            for (slot, (mut region, line)) in row.regions.into_iter().zip(row.lines).enumerate() {
                region.extend(line);
                out[slot * self.m + pe] = region;
            }
        }
        out
    }

    fn reference(&self, data: &[TupleRecord]) -> Vec<Vec<TupleRecord>> {
        let mut out = vec![Vec::new(); self.fanout];
        for t in data {
            out[self.partition_of(t.key)].push(*t);
        }
        out
    }

    /// Partitions must hold the same tuples; order inside a partition is free.
    fn same_result(&self, a: &Self::Output, b: &Self::Output) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                if x.len() != y.len() {
                    return false;
                }
                let (mut x, mut y) = (x.clone(), y.clone());
                x.sort_unstable();
                y.sort_unstable();
                x == y
            })
    }

    fn decomposable(&self) -> bool {
        false
    }

    fn buffer_units(&self) -> usize {
        self.slots() * self.line
    }
}
