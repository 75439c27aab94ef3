//! Bounded FIFO channels with two-phase (stage, then commit) semantics.

use std::collections::VecDeque;

/// A bounded FIFO connecting two pipeline stages.
///
/// Pushes made during a cycle are staged and only become visible to the
/// consumer after [`Channel::commit`]. Free space is computed against the
/// occupancy at the start of the cycle, so a producer never observes a slot
/// freed by the consumer in the same cycle. Together these make a cycle's
/// outcome independent of the order in which stages are evaluated.
#[derive(Debug, Clone)]
pub struct Channel<T> {
    capacity: usize,
    queue: VecDeque<T>,
    staged: Vec<T>,
    len_at_start: usize,
}

impl<T> Channel<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "channel capacity must be at least 1");
        Self {
            capacity,
            queue: VecDeque::with_capacity(capacity.min(4096)),
            staged: Vec::new(),
            len_at_start: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Items currently held, including ones staged this cycle.
    pub fn len(&self) -> usize {
        self.queue.len() + self.staged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty() && self.staged.is_empty()
    }

    /// Slots a producer may still fill this cycle.
    pub fn free_slots(&self) -> usize {
        self.capacity - self.len_at_start - self.staged.len()
    }

    /// Stages `item`; hands it back when the channel is full (a stall, never a drop).
    pub fn try_push(&mut self, item: T) -> Result<(), T> {
        if self.free_slots() == 0 {
            return Err(item);
        }
        self.staged.push(item);
        Ok(())
    }

    /// Removes the oldest item that was visible at the start of the cycle.
    pub fn pop(&mut self) -> Option<T> {
        self.queue.pop_front()
    }

    pub fn peek(&self) -> Option<&T> {
        self.queue.front()
    }

    /// Number of items the consumer can see this cycle.
    pub fn visible_len(&self) -> usize {
        self.queue.len()
    }

    /// Makes staged items visible. Returns the new occupancy.
    pub fn commit(&mut self) -> usize {
        self.queue.extend(self.staged.drain(..));
        self.len_at_start = self.queue.len();
        self.len_at_start
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.queue.iter().chain(self.staged.iter())
    }
}
