//! Equi-width histogram building.

use super::{AppError, AppKind, Application};
use crate::hash::murmur3_u64;
use crate::tuple::{RoutedTuple, TupleRecord};

/// How a key is turned into a bin index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoHash {
    /// `key mod bins`: the low bits of the key pick the bin (and the PE).
    #[default]
    Radix,
    Murmur3 {
        seed: u32,
    },
}

/// Bins are interleaved across primaries: bin `b` lives on PE `b mod M` at
/// local slot `b / M`.
#[derive(Debug, Clone)]
pub struct Histogram {
    bins: usize,
    m: usize,
    hash: HistoHash,
}

impl Histogram {
    pub fn new(bins: usize, m: usize, hash: HistoHash) -> Result<Self, AppError> {
        if m == 0 || bins == 0 || !bins.is_multiple_of(m) {
            return Err(AppError::NotDivisible {
                what: "num_bins",
                value: bins,
                m,
            });
        }
        Ok(Self { bins, m, hash })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bin_of(&self, key: u64) -> usize {
        let h = match self.hash {
            HistoHash::Radix => key,
            HistoHash::Murmur3 { seed } => murmur3_u64(key, seed),
        };
        (h % self.bins as u64) as usize
    }
}

impl Application for Histogram {
    type State = Vec<u64>;
    type Output = Vec<u64>;

    fn kind(&self) -> AppKind {
        AppKind::Histo
    }

    fn primaries(&self) -> usize {
        self.m
    }

    fn prepare(&self, tuple: TupleRecord) -> RoutedTuple {
        let bin = self.bin_of(tuple.key);
        RoutedTuple::new(tuple, bin % self.m, (bin / self.m) as u64)
    }

    fn new_state(&self) -> Vec<u64> {
        vec![0; self.bins / self.m]
    }

    fn process(&self, state: &mut Vec<u64>, item: &RoutedTuple) {
        state[item.payload as usize] += 1;
    }

    fn combine(&self, into: &mut Vec<u64>, from: Vec<u64>) {
        for (a, b) in into.iter_mut().zip(from) {
            *a += b;
        }
    }

    fn finalize(&self, rows: Vec<Vec<u64>>) -> Vec<u64> {
        let mut out = vec![0; self.bins];
        for (pe, row) in rows.into_iter().enumerate() {
            for (slot, count) in row.into_iter().enumerate() {
                out[slot * self.m + pe] = count;
            }
        }
        out
    }

    fn reference(&self, data: &[TupleRecord]) -> Vec<u64> {
        let mut bins = vec![0; self.bins];
        for t in data {
            bins[self.bin_of(t.key)] += 1;
        }
        bins
    }

    fn same_result(&self, a: &Vec<u64>, b: &Vec<u64>) -> bool {
        a == b
    }

    fn buffer_units(&self) -> usize {
        self.bins / self.m
    }
}
