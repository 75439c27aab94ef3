//! Records flowing through the pipeline.

/// A key/value pair as read from memory. Fields are never mutated after fetch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TupleRecord {
    pub key: u64,
    pub value: u64,
}

impl TupleRecord {
    pub const fn new(key: u64, value: u64) -> Self {
        Self { key, value }
    }
}

/// A tuple after preparation, tagged with its destination processing element.
///
/// `dst` is a primary index in `[0, M)` when it leaves a preprocessing PE and
/// may become a secondary index in `[M, M + X)` after the mapper rewrites it.
/// `payload` is whatever the application's prepare hook computed for the
/// downstream PE (a local bin index, a hash, a rank contribution, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoutedTuple {
    pub tuple: TupleRecord,
    pub dst: usize,
    pub payload: u64,
}

impl RoutedTuple {
    pub const fn new(tuple: TupleRecord, dst: usize, payload: u64) -> Self {
        Self {
            tuple,
            dst,
            payload,
        }
    }
}

/// What travels on a channel feeding a primary or secondary PE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeMessage {
    Tuple(RoutedTuple),
    /// Sent once per channel after the last tuple has been routed.
    EndOfStream,
}
