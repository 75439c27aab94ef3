//! HyperLogLog cardinality estimation over 64-bit murmur3 hashes.

use super::{AppError, AppKind, Application};
use crate::hash::murmur3_u64;
use crate::tuple::{RoutedTuple, TupleRecord};

/// Register `j` (the top `precision` bits of the hash) is owned by primary `j mod M`.
#[derive(Debug, Clone)]
pub struct HyperLogLog {
    precision: u32,
    seed: u32,
    m: usize,
}

impl HyperLogLog {
    pub fn new(precision: u32, seed: u32, m: usize) -> Result<Self, AppError> {
        if !(4..=18).contains(&precision) {
            return Err(AppError::InvalidParam(format!(
                "hll precision must be in 4..=18, got {precision}"
            )));
        }
        let registers = 1usize << precision;
        if m == 0 || !registers.is_multiple_of(m) {
            return Err(AppError::NotDivisible {
                what: "num_registers",
                value: registers,
                m,
            });
        }
        Ok(Self { precision, seed, m })
    }

    pub fn registers(&self) -> usize {
        1 << self.precision
    }

    pub fn hash(&self, key: u64) -> u64 {
        murmur3_u64(key, self.seed)
    }

    pub fn register_of(&self, hash: u64) -> usize {
        (hash >> (64 - self.precision)) as usize
    }

    /// One plus the leading-zero run of the bits below the register index.
    pub fn rank_of(&self, hash: u64) -> u8 {
        let rest = hash << self.precision;
        (rest.leading_zeros().min(64 - self.precision) + 1) as u8
    }

    pub fn estimate(&self, registers: &[u8]) -> f64 {
        estimate(registers)
    }
}

fn alpha(m: usize) -> f64 {
    match m {
        16 => 0.673,
        32 => 0.697,
        64 => 0.709,
        _ => 0.7213 / (1.0 + 1.079 / m as f64),
    }
}

/// Raw harmonic-mean estimate with linear counting for small cardinalities
/// and the log correction near the 64-bit hash range.
pub fn estimate(registers: &[u8]) -> f64 {
    let m = registers.len() as f64;
    let sum: f64 = registers.iter().map(|&r| (-(r as f64)).exp2()).sum();
    let raw = alpha(registers.len()) * m * m / sum;
    let zeros = registers.iter().filter(|&&r| r == 0).count();
    if raw <= 2.5 * m && zeros > 0 {
        return m * (m / zeros as f64).ln();
    }
    let two64 = 2f64.powi(64);
    if raw > two64 / 30.0 {
        return -two64 * (1.0 - raw / two64).ln();
    }
    raw
}

impl Application for HyperLogLog {
    type State = Vec<u8>;
    /// The full register array, in register order.
    type Output = Vec<u8>;

    fn kind(&self) -> AppKind {
        AppKind::Hll
    }

    fn primaries(&self) -> usize {
        self.m
    }

    fn prepare(&self, tuple: TupleRecord) -> RoutedTuple {
        let h = self.hash(tuple.key);
        RoutedTuple::new(tuple, self.register_of(h) % self.m, h)
    }

    fn new_state(&self) -> Vec<u8> {
        vec![0; self.registers() / self.m]
    }

    fn process(&self, state: &mut Vec<u8>, item: &RoutedTuple) {
        let slot = self.register_of(item.payload) / self.m;
        let rank = self.rank_of(item.payload);
        if rank > state[slot] {
            state[slot] = rank;
        }
    }

    fn combine(&self, into: &mut Vec<u8>, from: Vec<u8>) {
        for (a, b) in into.iter_mut().zip(from) {
            *a = (*a).max(b);
        }
    }

    fn finalize(&self, rows: Vec<Vec<u8>>) -> Vec<u8> {
        let mut out = vec![0; self.registers()];
        for (pe, row) in rows.into_iter().enumerate() {
            for (slot, r) in row.into_iter().enumerate() {
                out[slot * self.m + pe] = r;
            }
        }
        out
    }

    fn reference(&self, data: &[TupleRecord]) -> Vec<u8> {
        let mut regs = vec![0u8; self.registers()];
        for t in data {
            let h = self.hash(t.key);
            let j = self.register_of(h);
            regs[j] = regs[j].max(self.rank_of(h));
        }
        regs
    }

    fn same_result(&self, a: &Vec<u8>, b: &Vec<u8>) -> bool {
        a == b
    }

    fn buffer_units(&self) -> usize {
        self.registers() / self.m
    }
}
