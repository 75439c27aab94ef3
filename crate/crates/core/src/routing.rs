//! Combiner, decoder and filter: dispatches up to N prepared tuples per cycle
//! to the M + X destination datapaths.
//!
//! Every destination datapath sees the whole batch (the combiner duplicates
//! it). The decoder compares each lane's destination with its own PE index,
//! producing an N-bit mask, and looks the mask up in a preset table that
//! yields the number of selected lanes and their positions. The filter then
//! pulls exactly those lanes.

use thiserror::Error;

use crate::channel::Channel;
use crate::tuple::{PeMessage, RoutedTuple};

/// Largest supported lane count; bounds the preset table at 2^16 entries.
pub const MAX_LANES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("lane count must be between 1 and {MAX_LANES}, got {0}")]
    LaneCount(usize),
}

/// One row of the preset table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeEntry {
    count: u8,
    positions: [u8; MAX_LANES],
}

impl DecodeEntry {
    pub fn count(&self) -> usize {
        self.count as usize
    }

    /// Set-bit indices of the mask, ascending.
    pub fn positions(&self) -> &[u8] {
        &self.positions[..self.count as usize]
    }
}

#[derive(Debug, Clone)]
pub struct DecodeTable {
    lanes: usize,
    entries: Vec<DecodeEntry>,
}

/// Builds the preset table for `n` lanes.
pub fn build_decode_table(n: usize) -> Result<DecodeTable, RoutingError> {
    if n == 0 || n > MAX_LANES {
        return Err(RoutingError::LaneCount(n));
    }
    let entries = (0..1u32 << n)
        .map(|mask| {
            let mut entry = DecodeEntry {
                count: 0,
                positions: [0; MAX_LANES],
            };
            let mut rest = mask;
            while rest != 0 {
                let lane = rest.trailing_zeros() as u8;
                entry.positions[entry.count as usize] = lane;
                entry.count += 1;
                rest &= rest - 1;
            }
            entry
        })
        .collect();
    Ok(DecodeTable { lanes: n, entries })
}

impl DecodeTable {
    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, mask: u32) -> &DecodeEntry {
        &self.entries[mask as usize]
    }
}

/// Bit `i` is set iff lane `i` of `batch` is destined for `pe_id`.
pub fn lane_mask(batch: &[RoutedTuple], pe_id: usize) -> u32 {
    batch
        .iter()
        .enumerate()
        .filter(|(_, t)| t.dst == pe_id)
        .fold(0, |mask, (lane, _)| mask | 1 << lane)
}

/// Tuples of `batch` addressed to `pe_id`, in lane order.
pub fn decode(table: &DecodeTable, batch: &[RoutedTuple], pe_id: usize) -> Vec<RoutedTuple> {
    debug_assert!(batch.len() <= table.lanes());
    table
        .entry(lane_mask(batch, pe_id))
        .positions()
        .iter()
        .map(|&lane| batch[lane as usize])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteOutcome {
    Accepted,
    Stalled,
}

/// Routing stage state: the batch awaiting dispatch plus scratch space.
#[derive(Debug, Clone)]
pub struct Router {
    table: DecodeTable,
    /// Prepared tuples (primary destinations) waiting to be routed. Kept
    /// until a cycle accepts them so a stall replays the same batch.
    pub pending: Vec<RoutedTuple>,
    masks: Vec<u32>,
    touched: Vec<usize>,
    stall_cycles: u64,
}

impl Router {
    pub fn new(lanes: usize, destinations: usize) -> Result<Self, RoutingError> {
        Ok(Self {
            table: build_decode_table(lanes)?,
            pending: Vec::with_capacity(lanes),
            masks: vec![0; destinations],
            touched: Vec::with_capacity(lanes),
            stall_cycles: 0,
        })
    }

    pub fn table(&self) -> &DecodeTable {
        &self.table
    }

    pub fn stall_cycles(&self) -> u64 {
        self.stall_cycles
    }

    /// Dispatches a mapped batch. Either every tuple is staged into its
    /// destination channel, or (when any destination lacks room for all of
    /// its matched tuples) nothing is and the cycle counts as a stall.
    pub fn route_cycle(
        &mut self,
        batch: &[RoutedTuple],
        channels: &mut [Channel<PeMessage>],
    ) -> RouteOutcome {
        debug_assert!(batch.len() <= self.table.lanes());
        // One pass over the lanes builds every destination's mask at once;
        // equivalent to each filter comparing all lanes against its own id.
        self.touched.clear();
        for (lane, t) in batch.iter().enumerate() {
            if self.masks[t.dst] == 0 {
                self.touched.push(t.dst);
            }
            self.masks[t.dst] |= 1 << lane;
        }
        let fits = self
            .touched
            .iter()
            .all(|&pe| self.table.entry(self.masks[pe]).count() <= channels[pe].free_slots());
        if fits {
            self.touched.sort_unstable();
            for &pe in &self.touched {
                for &lane in self.table.entry(self.masks[pe]).positions() {
                    let pushed = channels[pe].try_push(PeMessage::Tuple(batch[lane as usize]));
                    debug_assert!(pushed.is_ok());
                }
            }
        }
        for &pe in &self.touched {
            self.masks[pe] = 0;
        }
        if fits {
            RouteOutcome::Accepted
        } else {
            self.stall_cycles += 1;
            RouteOutcome::Stalled
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple::TupleRecord;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch_with_dsts(dsts: &[usize]) -> Vec<RoutedTuple> {
        dsts.iter()
            .enumerate()
            .map(|(i, &d)| {
                RoutedTuple::new(TupleRecord::new(i as u64, 100 + i as u64), d, i as u64)
            })
            .collect()
    }

    // Independent oracle: scan the bits one at a time.
    fn naive_positions(mask: u32, n: usize) -> Vec<u8> {
        (0..n as u8).filter(|&b| mask >> b & 1 == 1).collect()
    }

    #[test]
    fn two_lane_table_is_exhaustively_correct() {
        let t = build_decode_table(2).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.entry(0b00).positions(), &[] as &[u8]);
        assert_eq!(t.entry(0b01).positions(), &[0]);
        assert_eq!(t.entry(0b10).positions(), &[1]);
        assert_eq!(t.entry(0b11).positions(), &[0, 1]);
        assert_eq!(t.entry(0b11).count(), 2);
    }

    #[test]
    fn four_lane_mask_0101_selects_lanes_zero_and_two() {
        let t = build_decode_table(4).unwrap();
        let e = t.entry(0b0101);
        assert_eq!(e.count(), 2);
        assert_eq!(e.positions(), &[0, 2]);
    }

    #[test]
    fn every_mask_up_to_eight_lanes_matches_popcount_and_bit_scan() {
        for n in 1..=8 {
            let t = build_decode_table(n).unwrap();
            for mask in 0..1u32 << n {
                let e = t.entry(mask);
                assert_eq!(e.count(), mask.count_ones() as usize);
                assert_eq!(e.positions(), naive_positions(mask, n).as_slice());
            }
        }
    }

    #[test]
    fn sixteen_lane_table_random_masks() {
        let t = build_decode_table(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..100_000 {
            let mask: u32 = rng.random_range(0..1 << 16);
            assert_eq!(
                t.entry(mask).positions(),
                naive_positions(mask, 16).as_slice()
            );
        }
    }

    #[test]
    fn oversized_table_rejected() {
        assert_eq!(
            build_decode_table(17).unwrap_err(),
            RoutingError::LaneCount(17)
        );
        assert!(build_decode_table(0).is_err());
    }

    #[test]
    fn decode_examples() {
        let t = build_decode_table(4).unwrap();
        let batch = batch_with_dsts(&[2, 0, 2, 1]);
        assert_eq!(lane_mask(&batch, 2), 0b0101);
        assert_eq!(decode(&t, &batch, 2), vec![batch[0], batch[2]]);
        assert!(decode(&t, &batch, 7).is_empty());
        let all = batch_with_dsts(&[3, 3, 3, 3]);
        assert_eq!(decode(&t, &all, 3), all);
    }

    fn channels(n: usize, depth: usize) -> Vec<Channel<PeMessage>> {
        (0..n).map(|_| Channel::new(depth)).collect()
    }

    #[test]
    fn spread_batch_is_accepted_one_per_channel() {
        let mut router = Router::new(8, 8).unwrap();
        let mut chans = channels(8, 4);
        let batch = batch_with_dsts(&[0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(
            router.route_cycle(&batch, &mut chans),
            RouteOutcome::Accepted
        );
        assert!(chans.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn overfull_destination_stalls_atomically() {
        let mut router = Router::new(8, 8).unwrap();
        let mut chans = channels(8, 8);
        for _ in 0..5 {
            chans[5].try_push(PeMessage::EndOfStream).unwrap();
        }
        chans[5].commit();
        assert_eq!(chans[5].free_slots(), 3);
        let batch = batch_with_dsts(&[5; 8]);
        assert_eq!(
            router.route_cycle(&batch, &mut chans),
            RouteOutcome::Stalled
        );
        assert_eq!(chans[5].len(), 5);
        assert!(chans
            .iter()
            .enumerate()
            .all(|(i, c)| i == 5 || c.is_empty()));
        assert_eq!(router.stall_cycles(), 1);
    }

    #[test]
    fn stall_leaves_other_destinations_untouched() {
        let mut router = Router::new(4, 3).unwrap();
        let mut chans = channels(3, 1);
        chans[2].try_push(PeMessage::EndOfStream).unwrap();
        chans[2].commit();
        let batch = batch_with_dsts(&[0, 1, 2, 0]);
        assert_eq!(
            router.route_cycle(&batch, &mut chans),
            RouteOutcome::Stalled
        );
        assert!(chans[0].is_empty() && chans[1].is_empty());
    }

    proptest! {
        #[test]
        fn decode_partitions_every_batch(dsts in proptest::collection::vec(0usize..6, 0..=8)) {
            let t = build_decode_table(8).unwrap();
            let batch = batch_with_dsts(&dsts);
            let mut union: Vec<RoutedTuple> = (0..6).flat_map(|pe| decode(&t, &batch, pe)).collect();
            union.sort_by_key(|r| r.tuple.key);
            prop_assert_eq!(union, batch.clone());
            for pe in 0..6 {
                let got = decode(&t, &batch, pe);
                let naive: Vec<_> = batch.iter().copied().filter(|r| r.dst == pe).collect();
                prop_assert_eq!(got, naive);
            }
        }

        #[test]
        fn accepted_batches_land_exactly_once_in_lane_order(
            dsts in proptest::collection::vec(0usize..5, 1..=8),
            depth in 1usize..4,
        ) {
            let mut router = Router::new(8, 5).unwrap();
            let mut chans = channels(5, depth);
            let batch = batch_with_dsts(&dsts);
            let before: Vec<usize> = chans.iter().map(|c| c.len()).collect();
            match router.route_cycle(&batch, &mut chans) {
                RouteOutcome::Accepted => {
                    for c in chans.iter_mut() { c.commit(); }
                    let mut seen = Vec::new();
                    for (pe, c) in chans.iter().enumerate() {
                        let got: Vec<RoutedTuple> = c.iter().map(|m| match m {
                            PeMessage::Tuple(t) => *t,
                            PeMessage::EndOfStream => unreachable!(),
                        }).collect();
                        prop_assert!(got.iter().all(|t| t.dst == pe));
                        prop_assert!(got.windows(2).all(|w| w[0].tuple.key < w[1].tuple.key));
                        seen.extend(got);
                    }
                    seen.sort_by_key(|r| r.tuple.key);
                    prop_assert_eq!(seen, batch);
                }
                RouteOutcome::Stalled => {
                    let after: Vec<usize> = chans.iter().map(|c| c.len()).collect();
                    prop_assert_eq!(before, after);
                    prop_assert!((0..5).any(|pe| dsts.iter().filter(|&&d| d == pe).count() > depth));
                }
            }
        }
    }
}
