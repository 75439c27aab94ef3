//! Offline sizing: balanced PE counts, secondary-PE count selection from a
//! sampled destination histogram, and the buffer capacity model.

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::apps::Application;
use crate::tuple::TupleRecord;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyzerError {
    #[error("cannot select a helper count from an empty sample")]
    EmptySample,
    #[error("tolerance must be in (0, 1), got {0}")]
    Tolerance(f64),
    #[error("all pipeline parameters must be at least 1 and w_tuple must divide w_mem")]
    Pipeline,
    #[error("sample fraction must be in (0, 1], got {0}")]
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSize {
    Count(usize),
    Fraction(f64),
}

impl Default for SampleSize {
    fn default() -> Self {
        SampleSize::Count(25_600)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerParams {
    pub tolerance: f64,
    pub sample: SampleSize,
    pub seed: u64,
}

impl Default for AnalyzerParams {
    fn default() -> Self {
        Self {
            tolerance: 0.01,
            sample: SampleSize::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// Sample the dataset and size X from its histogram.
    Offline,
    /// No dataset knowledge: provision the worst case.
    Online,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Implementation {
    pub x: usize,
    pub capacity: u64,
    /// Sampled tuples per primary destination (empty in online mode).
    pub histogram: Vec<u64>,
}

/// `(N, M)` for a pipeline that neither starves nor backs up.
pub fn pe_counts(
    ii_prepe: u32,
    ii_pripe: u32,
    w_mem: usize,
    w_tuple: usize,
) -> Result<(usize, usize), AnalyzerError> {
    if ii_prepe == 0 || ii_pripe == 0 || w_tuple == 0 || w_mem == 0 || !w_mem.is_multiple_of(w_tuple) {
        return Err(AnalyzerError::Pipeline);
    }
    let per_read = w_mem / w_tuple;
    Ok((ii_prepe as usize * per_read, ii_pripe as usize * per_read))
}

/// Helper count for a destination histogram: `sum_i ceil(|m*w_i/S - t|) - m`,
/// clamped to `[0, m-1]`.
pub fn select_secpe_count(workloads: &[u64], t: f64) -> Result<usize, AnalyzerError> {
    if !(t > 0.0 && t < 1.0) {
        return Err(AnalyzerError::Tolerance(t));
    }
    let total: u64 = workloads.iter().sum();
    if total == 0 {
        return Err(AnalyzerError::EmptySample);
    }
    let m = workloads.len();
    let sum: i64 = workloads
        .iter()
        .map(|&w| ((m as f64 * w as f64 / total as f64) - t).abs().ceil() as i64)
        .sum();
    Ok((sum - m as i64).clamp(0, m as i64 - 1) as usize)
}

/// Sampled tuples bucketed by the application's primary destination.
pub fn destination_histogram<A: Application>(app: &A, samples: &[TupleRecord]) -> Vec<u64> {
    let mut hist = vec![0u64; app.primaries()];
    for &t in samples {
        hist[app.prepare(t).dst] += 1;
    }
    hist
}

/// Uniform sample without replacement, deterministic by seed.
pub fn sample_dataset(
    data: &[TupleRecord],
    params: &AnalyzerParams,
) -> Result<Vec<TupleRecord>, AnalyzerError> {
    let n = data.len();
    let amount = match params.sample {
        SampleSize::Count(c) => c.min(n),
        SampleSize::Fraction(f) if f > 0.0 && f <= 1.0 => {
            ((f * n as f64).round() as usize).clamp(1.min(n), n)
        }
        SampleSize::Fraction(f) => return Err(AnalyzerError::Fraction(f)),
    };
    if amount == n {
        return Ok(data.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    Ok(data.iter().copied().choose_multiple(&mut rng, amount))
}

/// Distinct data each PE can buffer when `x` helpers replicate ranges: `floor(m*c/(m+x))`.
pub fn bram_capacity(m: usize, x: usize, c: u64) -> u64 {
    (m as u128 * c as u128 / (m + x) as u128) as u64
}

pub fn select_implementation<A: Application>(
    data: &[TupleRecord],
    app: &A,
    params: &AnalyzerParams,
    mode: SelectionMode,
    c: u64,
) -> Result<Implementation, AnalyzerError> {
    select_implementation_by(
        data,
        app.primaries(),
        |t| app.prepare(t).dst,
        params,
        mode,
        c,
    )
}

/// Same as [`select_implementation`], with routing given as a function
/// from tuple to primary destination in `0..m`.
pub fn select_implementation_by(
    data: &[TupleRecord],
    m: usize,
    route: impl Fn(TupleRecord) -> usize,
    params: &AnalyzerParams,
    mode: SelectionMode,
    c: u64,
) -> Result<Implementation, AnalyzerError> {
    let (x, histogram) = match mode {
        SelectionMode::Online => (m - 1, Vec::new()),
        SelectionMode::Offline => {
            let mut hist = vec![0u64; m];
            for t in sample_dataset(data, params)? {
                hist[route(t)] += 1;
            }
            (select_secpe_count(&hist, params.tolerance)?, hist)
        }
    };
    Ok(Implementation {
        x,
        capacity: bram_capacity(m, x, c),
        histogram,
    })
}
