//! Application contract and the built-in data-intensive applications.
//!
//! An application supplies four hooks, mirroring the programming interface
//! of the routing architecture:
//!
//! * `prepare` runs on a preprocessing PE and picks the owning primary PE,
//! * `process` updates one PE's private buffer,
//! * `combine` folds a secondary PE's buffer into its primary's results,
//! * `finalize` turns the per-primary buffers into the application result.
//!
//! Each application also carries a single-threaded `reference` that computes
//! the same result directly from the dataset, with no routing or helpers.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::tuple::{RoutedTuple, TupleRecord};

pub mod dp;
pub mod hhd;
pub mod histo;
pub mod hll;
pub mod pagerank;

pub use dp::DataPartitioning;
pub use hhd::{HeavyHitterOutput, HeavyHitters};
pub use histo::{HistoHash, Histogram};
pub use hll::HyperLogLog;
pub use pagerank::{PageRank, ScatterPass};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AppError {
    #[error("{what} ({value}) must be divisible by the number of primary PEs ({m})")]
    NotDivisible {
        what: &'static str,
        value: usize,
        m: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("edge {index} references vertex {vertex}, but the graph has {vertices} vertices")]
    VertexOutOfRange {
        index: usize,
        vertex: u64,
        vertices: usize,
    },
    #[error("unknown application `{0}` (expected histo, dp, pr, hll or hhd)")]
    UnknownApp(String),
    #[error("unknown application parameter `{0}`")]
    UnknownParam(String),
}

/// The hooks the simulated pipeline calls.
pub trait Application {
    /// Private buffer of one primary or secondary PE.
    type State: Clone;
    type Output: Clone + fmt::Debug;

    fn kind(&self) -> AppKind;

    /// Number of primary PEs the application was laid out for.
    fn primaries(&self) -> usize;

    /// Pure function of the tuple; `dst` of the result is in `[0, primaries())`.
    fn prepare(&self, tuple: TupleRecord) -> RoutedTuple;

    fn new_state(&self) -> Self::State;

    fn process(&self, state: &mut Self::State, item: &RoutedTuple);

    /// Folds `from` (a helper's buffer, or a primary's) into `into`.
    fn combine(&self, into: &mut Self::State, from: Self::State);

    /// `rows[r]` holds everything merged for primary range `r`.
    fn finalize(&self, rows: Vec<Self::State>) -> Self::Output;

    /// Single instance, no routing, tuples in stream order.
    fn reference(&self, data: &[TupleRecord]) -> Self::Output;

    /// Result equality as the application defines it.
    fn same_result(&self, a: &Self::Output, b: &Self::Output) -> bool;

    /// False when PEs write disjoint output regions that are concatenated
    /// instead of merged.
    fn decomposable(&self) -> bool {
        true
    }

    /// Buffer units one PE needs (bins, registers, counters, slots).
    fn buffer_units(&self) -> usize;

    /// Cycles per tuple of the PE logic: one buffer read plus one write.
    fn pe_ii(&self) -> u32 {
        2
    }
}

/// Runs the application's single-threaded oracle.
pub fn reference_run<A: Application>(app: &A, data: &[TupleRecord]) -> A::Output {
    app.reference(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AppKind {
    Histo,
    Dp,
    Pr,
    Hll,
    Hhd,
}

impl AppKind {
    pub const ALL: [AppKind; 5] = [
        AppKind::Histo,
        AppKind::Dp,
        AppKind::Pr,
        AppKind::Hll,
        AppKind::Hhd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AppKind::Histo => "histo",
            AppKind::Dp => "dp",
            AppKind::Pr => "pr",
            AppKind::Hll => "hll",
            AppKind::Hhd => "hhd",
        }
    }
}

impl fmt::Display for AppKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AppKind {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "histo" => Ok(AppKind::Histo),
            "dp" => Ok(AppKind::Dp),
            "pr" => Ok(AppKind::Pr),
            "hll" => Ok(AppKind::Hll),
            "hhd" => Ok(AppKind::Hhd),
            other => Err(AppError::UnknownApp(other.to_string())),
        }
    }
}

/// Tunables for every built-in application, with usable defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct AppParams {
    pub histo_bins: usize,
    pub dp_fanout: usize,
    pub dp_buffer_line: usize,
    pub hll_precision: u32,
    pub hll_seed: u32,
    pub hhd_rows: usize,
    pub hhd_cols: usize,
    pub hhd_phi: f64,
    pub hhd_seed: u32,
    pub pr_vertices: Option<usize>,
    pub pr_iterations: usize,
    pub pr_damping: f64,
}

impl Default for AppParams {
    fn default() -> Self {
        Self {
            histo_bins: 1 << 16,
            dp_fanout: 256,
            dp_buffer_line: 8,
            hll_precision: 14,
            hll_seed: 0,
            hhd_rows: 4,
            hhd_cols: 1024,
            hhd_phi: 0.1,
            hhd_seed: 0,
            pr_vertices: None,
            pr_iterations: 5,
            pr_damping: 0.85,
        }
    }
}

impl AppParams {
    /// Sets one parameter from its textual `key=value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), AppError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, AppError> {
            value
                .trim()
                .parse()
                .map_err(|_| AppError::InvalidParam(format!("{key} = {value}")))
        }
        match key.trim() {
            "histo_bins" => self.histo_bins = num(key, value)?,
            "dp_fanout" => self.dp_fanout = num(key, value)?,
            "dp_buffer_line" => self.dp_buffer_line = num(key, value)?,
            "hll_precision" => self.hll_precision = num(key, value)?,
            "hll_seed" => self.hll_seed = num(key, value)?,
            "hhd_rows" => self.hhd_rows = num(key, value)?,
            "hhd_cols" => self.hhd_cols = num(key, value)?,
            "hhd_phi" => self.hhd_phi = num(key, value)?,
            "hhd_seed" => self.hhd_seed = num(key, value)?,
            "pr_vertices" => self.pr_vertices = Some(num(key, value)?),
            "pr_iterations" => self.pr_iterations = num(key, value)?,
            "pr_damping" => self.pr_damping = num(key, value)?,
            other => return Err(AppError::UnknownParam(other.to_string())),
        }
        Ok(())
    }
}
