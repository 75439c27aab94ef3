//! Architecture parameters and their validation.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::routing::MAX_LANES;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("n_prepe must be at least 1")]
    NoPrePe,
    #[error("n_prepe exceeds {MAX_LANES} routing lanes")]
    TooManyLanes,
    #[error("m_pripe must be at least 1")]
    NoPriPe,
    #[error("x_secpe exceeds M-1 (x_secpe={x}, m_pripe={m})")]
    TooManySecPe { x: usize, m: usize },
    #[error("ii_prepe must be at least 1")]
    ZeroPrePeIi,
    #[error("ii_pripe must be at least 1")]
    ZeroPriPeIi,
    #[error("w_tuple must be nonzero")]
    ZeroTupleWidth,
    #[error("w_tuple must divide w_mem (w_mem={w_mem}, w_tuple={w_tuple})")]
    WidthNotDivisible { w_mem: usize, w_tuple: usize },
    #[error("channel_depth must be at least 1")]
    ZeroChannelDepth,
    /// A router batch may carry one tuple per lane for the same destination.
    #[error("channel_depth ({depth}) must be at least n_prepe ({lanes})")]
    ChannelShallowerThanBatch { depth: usize, lanes: usize },
    #[error("profiling_cycles must be at least 1")]
    ZeroProfilingCycles,
    #[error("monitor_window must be at least 1")]
    ZeroMonitorWindow,
    #[error("throughput_threshold must lie in [0, 1], got {0}")]
    ThresholdOutOfRange(f64),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`")]
    InvalidValue { key: String, value: String },
    #[error("line {line}: expected `key = value`")]
    MalformedLine { line: usize },
}

/// Every tunable of the simulated architecture.
///
/// Construct with [`ArchConfig::default`] (the eight-lane, sixteen-primary
/// histogram pipeline) and override fields, then call [`ArchConfig::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub n_prepe: usize,
    pub m_pripe: usize,
    pub x_secpe: usize,
    pub ii_prepe: u32,
    pub ii_pripe: u32,
    /// Memory interface width in bytes per cycle.
    pub w_mem: usize,
    /// Tuple width in bytes.
    pub w_tuple: usize,
    pub channel_depth: usize,
    pub profiling_cycles: u64,
    pub monitor_window: u64,
    /// Fraction of the reference throughput below which a window counts as
    /// degraded. Zero disables rescheduling.
    pub throughput_threshold: f64,
    pub reschedule_overhead: u64,
    /// Abstract on-chip buffer budget shared by all primary and secondary PEs.
    pub bram_capacity_c: u64,
    pub seed: u64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            n_prepe: 8,
            m_pripe: 16,
            x_secpe: 0,
            ii_prepe: 1,
            ii_pripe: 2,
            w_mem: 64,
            w_tuple: 8,
            channel_depth: 512,
            profiling_cycles: 256,
            monitor_window: 1024,
            throughput_threshold: 0.8,
            reschedule_overhead: 1024,
            bram_capacity_c: 1 << 20,
            seed: 0,
        }
    }
}

impl ArchConfig {
    /// Returns the config unchanged iff every invariant holds, otherwise the first violation.
    pub fn validate(self) -> Result<Self, ConfigError> {
        if self.n_prepe == 0 {
            return Err(ConfigError::NoPrePe);
        }
        if self.n_prepe > MAX_LANES {
            return Err(ConfigError::TooManyLanes);
        }
        if self.m_pripe == 0 {
            return Err(ConfigError::NoPriPe);
        }
        if self.x_secpe > self.m_pripe - 1 {
            return Err(ConfigError::TooManySecPe {
                x: self.x_secpe,
                m: self.m_pripe,
            });
        }
        if self.ii_prepe == 0 {
            return Err(ConfigError::ZeroPrePeIi);
        }
        if self.ii_pripe == 0 {
            return Err(ConfigError::ZeroPriPeIi);
        }
        if self.w_tuple == 0 {
            return Err(ConfigError::ZeroTupleWidth);
        }
        if self.w_mem == 0 || !self.w_mem.is_multiple_of(self.w_tuple) {
            return Err(ConfigError::WidthNotDivisible {
                w_mem: self.w_mem,
                w_tuple: self.w_tuple,
            });
        }
        if self.channel_depth == 0 {
            return Err(ConfigError::ZeroChannelDepth);
        }
        if self.channel_depth < self.n_prepe {
            return Err(ConfigError::ChannelShallowerThanBatch {
                depth: self.channel_depth,
                lanes: self.n_prepe,
            });
        }
        if self.profiling_cycles == 0 {
            return Err(ConfigError::ZeroProfilingCycles);
        }
        if self.monitor_window == 0 {
            return Err(ConfigError::ZeroMonitorWindow);
        }
        if !(0.0..=1.0).contains(&self.throughput_threshold) {
            return Err(ConfigError::ThresholdOutOfRange(self.throughput_threshold));
        }
        Ok(self)
    }

    /// Tuples the memory interface delivers per cycle.
    pub fn tuples_per_fetch(&self) -> usize {
        self.w_mem / self.w_tuple
    }

    pub fn total_pes(&self) -> usize {
        self.m_pripe + self.x_secpe
    }

    pub fn rescheduling_enabled(&self) -> bool {
        self.throughput_threshold > 0.0
    }

    /// Sets one field from its textual `key=value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::InvalidValue {
                key: key.to_string(),
                value: value.to_string(),
            })
        }
        match key.trim() {
            "n_prepe" | "n" => self.n_prepe = num(key, value)?,
            "m_pripe" | "m" => self.m_pripe = num(key, value)?,
            "x_secpe" | "x" => self.x_secpe = num(key, value)?,
            "ii_prepe" => self.ii_prepe = num(key, value)?,
            "ii_pripe" => self.ii_pripe = num(key, value)?,
            "w_mem" => self.w_mem = num(key, value)?,
            "w_tuple" => self.w_tuple = num(key, value)?,
            "channel_depth" => self.channel_depth = num(key, value)?,
            "profiling_cycles" => self.profiling_cycles = num(key, value)?,
            "monitor_window" => self.monitor_window = num(key, value)?,
            "throughput_threshold" | "threshold" => self.throughput_threshold = num(key, value)?,
            "reschedule_overhead" => self.reschedule_overhead = num(key, value)?,
            "bram_capacity_c" | "c" => self.bram_capacity_c = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}

impl fmt::Display for ArchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n_prepe = {}", self.n_prepe)?;
        writeln!(f, "m_pripe = {}", self.m_pripe)?;
        writeln!(f, "x_secpe = {}", self.x_secpe)?;
        writeln!(f, "ii_prepe = {}", self.ii_prepe)?;
        writeln!(f, "ii_pripe = {}", self.ii_pripe)?;
        writeln!(f, "w_mem = {}", self.w_mem)?;
        writeln!(f, "w_tuple = {}", self.w_tuple)?;
        writeln!(f, "channel_depth = {}", self.channel_depth)?;
        writeln!(f, "profiling_cycles = {}", self.profiling_cycles)?;
        writeln!(f, "monitor_window = {}", self.monitor_window)?;
        writeln!(f, "throughput_threshold = {}", self.throughput_threshold)?;
        writeln!(f, "reschedule_overhead = {}", self.reschedule_overhead)?;
        writeln!(f, "bram_capacity_c = {}", self.bram_capacity_c)?;
        writeln!(f, "seed = {}", self.seed)
    }
}

/// Splits a flat `key = value` text into pairs. `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(ConfigError::MalformedLine { line: idx + 1 })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::MalformedLine { line: idx + 1 });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}
