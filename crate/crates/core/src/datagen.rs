//! Workload generators and on-disk formats.
//!
//! Keys of a Zipf stream are produced by drawing a rank and pushing it
//! through a seeded bijection of the key domain, so the hottest key lands on
//! a different routing destination for different seeds.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Zipf};
use thiserror::Error;

use crate::tuple::TupleRecord;

pub const TUPLE_MAGIC: [u8; 4] = *b"SKTP";
pub const TUPLE_FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("invalid generator parameter: {0}")]
    InvalidParam(String),
    #[error("not a tuple file (bad magic)")]
    BadMagic,
    #[error("unsupported tuple file version {0}")]
    UnsupportedVersion(u16),
    #[error("tuple width must be even and between 2 and 16 bytes, got {0}")]
    BadWidth(u16),
    #[error("tuple file ends after {read} of {expected} tuples")]
    Truncated { read: u64, expected: u64 },
    #[error("tuple {index} does not fit in {width}-byte fields")]
    FieldOverflow { index: usize, width: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: vertex {vertex} is outside 0..{vertices}")]
    VertexOutOfRange {
        line: usize,
        vertex: u64,
        vertices: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Uniform,
    Zipf {
        alpha: f64,
    },
    /// Every tuple carries the same key.
    SingleKey {
        key: u64,
    },
    /// Zipf segments of `interval` tuples, segment `i` generated with `seeds[i % len]`.
    Evolving {
        alpha: f64,
        interval: usize,
        seeds: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub size: usize,
    pub distribution: Distribution,
    pub domain: u64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn generate(&self) -> Result<Vec<TupleRecord>, DatagenError> {
        match &self.distribution {
            Distribution::Uniform => gen_zipf(self.size, 0.0, self.domain, self.seed),
            Distribution::Zipf { alpha } => gen_zipf(self.size, *alpha, self.domain, self.seed),
            Distribution::SingleKey { key } => Ok(gen_single_key(self.size, *key)),
            Distribution::Evolving {
                alpha,
                interval,
                seeds,
            } => gen_evolving(self.size, *alpha, self.domain, *interval, seeds),
        }
    }
}

/// Seeded bijection on `0..domain`: a mixing permutation of the enclosing
/// power-of-two range, cycle-walked back into the domain.
#[derive(Debug, Clone)]
pub struct KeyPermutation {
    domain: u64,
    bits: u32,
    mask: u64,
    mul: u64,
    add: u64,
}

impl KeyPermutation {
    pub fn new(domain: u64, seed: u64) -> Self {
        assert!(domain >= 1);
        let bits = (64 - (domain - 1).leading_zeros()).max(1);
        let mask = if bits == 64 {
            u64::MAX
        } else {
            (1 << bits) - 1
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            domain,
            bits,
            mask,
            mul: rng.random::<u64>() | 1,
            add: rng.random::<u64>(),
        }
    }

    fn mix(&self, mut x: u64) -> u64 {
        let shift = self.bits.div_ceil(2);
        for _ in 0..2 {
            x = x.wrapping_mul(self.mul) & self.mask;
            x ^= x >> shift;
            x = x.wrapping_add(self.add) & self.mask;
        }
        x
    }

    pub fn apply(&self, rank: u64) -> u64 {
        debug_assert!(rank < self.domain);
        let mut x = self.mix(rank);
        while x >= self.domain {
            x = self.mix(x);
        }
        x
    }
}

/// `n` tuples whose keys follow a Zipf law with exponent `alpha` over
/// `domain` keys; tuple `i` carries value `i`. `alpha == 0` is uniform.
pub fn gen_zipf(
    n: usize,
    alpha: f64,
    domain: u64,
    seed: u64,
) -> Result<Vec<TupleRecord>, DatagenError> {
    Ok(zipf_keys(n, alpha, domain, seed)?
        .enumerate()
        .map(|(i, k)| TupleRecord::new(k, i as u64))
        .collect())
}

fn zipf_keys(
    n: usize,
    alpha: f64,
    domain: u64,
    seed: u64,
) -> Result<impl Iterator<Item = u64>, DatagenError> {
    if domain == 0 {
        return Err(DatagenError::InvalidParam(
            "key domain must be at least 1".into(),
        ));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(DatagenError::InvalidParam(format!(
            "zipf exponent must be >= 0, got {alpha}"
        )));
    }
    let zipf =
        Zipf::new(domain as f64, alpha).map_err(|e| DatagenError::InvalidParam(e.to_string()))?;
    let perm = KeyPermutation::new(domain, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(move |_| {
        let rank = if alpha == 0.0 {
            rng.random_range(0..domain)
        } else {
            // Samples are integral floats in [1, domain].
            (zipf.sample(&mut rng) as u64 - 1).min(domain - 1)
        };
        perm.apply(rank)
    }))
}

pub fn gen_single_key(n: usize, key: u64) -> Vec<TupleRecord> {
    (0..n as u64).map(|i| TupleRecord::new(key, i)).collect()
}

/// Concatenated Zipf segments of `interval` tuples, one seed per segment.
pub fn gen_evolving(
    n: usize,
    alpha: f64,
    domain: u64,
    interval: usize,
    seeds: &[u64],
) -> Result<Vec<TupleRecord>, DatagenError> {
    if interval == 0 {
        return Err(DatagenError::InvalidParam(
            "segment interval must be positive".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(DatagenError::InvalidParam("seed schedule is empty".into()));
    }
    let mut out = Vec::with_capacity(n);
    for (segment, start) in (0..n).step_by(interval).enumerate() {
        let len = interval.min(n - start);
        let seed = seeds[segment % seeds.len()];
        out.extend(zipf_keys(len, alpha, domain, seed)?.map(|k| TupleRecord::new(k, 0)));
    }
    for (i, t) in out.iter_mut().enumerate() {
        t.value = i as u64;
    }
    Ok(out)
}

/// `vertices * avg_degree` edges: sources uniform, destinations Zipf over
/// the vertices with exponent `skew`. Edges are tuples `(src, dst)`.
pub fn gen_graph(
    vertices: u64,
    avg_degree: usize,
    skew: f64,
    seed: u64,
) -> Result<Vec<TupleRecord>, DatagenError> {
    if vertices == 0 {
        return Err(DatagenError::InvalidParam(
            "graph needs at least one vertex".into(),
        ));
    }
    let edges = vertices as usize * avg_degree;
    let mut src_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5352_4300);
    Ok(zipf_keys(edges, skew, vertices, seed)?
        .map(|dst| TupleRecord::new(src_rng.random_range(0..vertices), dst))
        .collect())
}

/// Adds the reverse of every edge.
pub fn symmetrize(edges: &[TupleRecord]) -> Vec<TupleRecord> {
    edges
        .iter()
        .flat_map(|e| [*e, TupleRecord::new(e.value, e.key)])
        .collect()
}

pub fn write_edge_list<W: Write>(mut out: W, edges: &[TupleRecord]) -> io::Result<()> {
    for e in edges {
        writeln!(out, "{} {}", e.key, e.value)?;
    }
    out.flush()
}

/// Parses whitespace-separated `src dst` lines. Blank lines and lines
/// starting with `#` or `%` are skipped; extra columns (weights) are ignored.
pub fn parse_edge_list<R: BufRead>(
    input: R,
    vertices: Option<u64>,
) -> Result<Vec<TupleRecord>, DatagenError> {
    let mut edges = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') || text.starts_with('%') {
            continue;
        }
        let mut fields = text.split_whitespace();
        let mut vertex = |name: &str| -> Result<u64, DatagenError> {
            let field = fields.next().ok_or_else(|| DatagenError::Parse {
                line: line_no,
                message: format!("missing {name} vertex"),
            })?;
            let v: u64 = field.parse().map_err(|_| DatagenError::Parse {
                line: line_no,
                message: format!("{name} vertex {field:?} is not a non-negative integer"),
            })?;
            match vertices {
                Some(limit) if v >= limit => Err(DatagenError::VertexOutOfRange {
                    line: line_no,
                    vertex: v,
                    vertices: limit,
                }),
                _ => Ok(v),
            }
        };
        let src = vertex("source")?;
        let dst = vertex("destination")?;
        edges.push(TupleRecord::new(src, dst));
    }
    Ok(edges)
}

pub fn load_edge_list(
    path: &Path,
    vertices: Option<u64>,
) -> Result<Vec<TupleRecord>, DatagenError> {
    parse_edge_list(BufReader::new(File::open(path)?), vertices)
}

/// Smallest vertex count covering every endpoint.
pub fn vertex_count(edges: &[TupleRecord]) -> u64 {
    edges
        .iter()
        .map(|e| e.key.max(e.value) + 1)
        .max()
        .unwrap_or(0)
}

fn check_width(w_tuple: u16) -> Result<usize, DatagenError> {
    if !(2..=16).contains(&w_tuple) || !w_tuple.is_multiple_of(2) {
        return Err(DatagenError::BadWidth(w_tuple));
    }
    Ok(w_tuple as usize / 2)
}

/// Binary tuple file: 16-byte header (magic, version, width, count) then
/// `count` key/value pairs, each field `w_tuple / 2` bytes, little-endian.
pub fn write_tuples<W: Write>(
    out: W,
    tuples: &[TupleRecord],
    w_tuple: u16,
) -> Result<(), DatagenError> {
    let field = check_width(w_tuple)?;
    let mut out = BufWriter::new(out);
    out.write_all(&TUPLE_MAGIC)?;
    out.write_all(&TUPLE_FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&w_tuple.to_le_bytes())?;
    out.write_all(&(tuples.len() as u64).to_le_bytes())?;
    let limit = if field == 8 {
        u64::MAX
    } else {
        (1u64 << (8 * field)) - 1
    };
    for (index, t) in tuples.iter().enumerate() {
        if t.key > limit || t.value > limit {
            return Err(DatagenError::FieldOverflow {
                index,
                width: field,
            });
        }
        out.write_all(&t.key.to_le_bytes()[..field])?;
        out.write_all(&t.value.to_le_bytes()[..field])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_tuples`]; returns the tuples and their width.
pub fn read_tuples<R: Read>(input: R) -> Result<(Vec<TupleRecord>, u16), DatagenError> {
    let mut input = BufReader::new(input);
    let mut header = [0u8; 16];
    input.read_exact(&mut header).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => DatagenError::BadMagic,
        _ => e.into(),
    })?;
    if header[..4] != TUPLE_MAGIC {
        return Err(DatagenError::BadMagic);
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != TUPLE_FORMAT_VERSION {
        return Err(DatagenError::UnsupportedVersion(version));
    }
    let w_tuple = u16::from_le_bytes([header[6], header[7]]);
    let field = check_width(w_tuple)?;
    let count = u64::from_le_bytes(header[8..16].try_into().expect("8-byte slice"));
    let mut tuples = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut buf = [0u8; 16];
    for read in 0..count {
        input
            .read_exact(&mut buf[..2 * field])
            .map_err(|e| match e.kind() {
                io::ErrorKind::UnexpectedEof => DatagenError::Truncated {
                    read,
                    expected: count,
                },
                _ => e.into(),
            })?;
        let mut k = [0u8; 8];
        let mut v = [0u8; 8];
        k[..field].copy_from_slice(&buf[..field]);
        v[..field].copy_from_slice(&buf[field..2 * field]);
        tuples.push(TupleRecord::new(
            u64::from_le_bytes(k),
            u64::from_le_bytes(v),
        ));
    }
    Ok((tuples, w_tuple))
}

pub fn save_tuples(path: &Path, tuples: &[TupleRecord], w_tuple: u16) -> Result<(), DatagenError> {
    write_tuples(File::create(path)?, tuples, w_tuple)
}

pub fn load_tuples(path: &Path) -> Result<Vec<TupleRecord>, DatagenError> {
    Ok(read_tuples(File::open(path)?)?.0)
}
