//! PageRank over an edge stream, with Q32.32 fixed-point ranks.
//!
//! Each iteration is one scatter pass over the edges: the edge `(src, dst)`
//! is routed to the PE owning vertex `dst` (`dst mod M`), which adds
//! `rank(src) / outdegree(src)` to its local accumulator. Integer addition
//! is associative and commutative, so the result is bit-identical no matter
//! how the pass was split between primaries and helpers.

use super::{AppError, AppKind, Application};
use crate::config::ArchConfig;
use crate::engine::{run_simulation_with, SimError, SimMetrics, SimOptions};
use crate::tuple::{RoutedTuple, TupleRecord};

/// 1.0 in Q32.32.
pub const FIXED_ONE: u64 = 1 << 32;

pub fn to_fixed(x: f64) -> u64 {
    (x * FIXED_ONE as f64).round() as u64
}

pub fn from_fixed(x: u64) -> f64 {
    x as f64 / FIXED_ONE as f64
}

/// Graph summary and iteration parameters. Edges are tuples with
/// `key = src` and `value = dst`.
#[derive(Debug, Clone)]
pub struct PageRank {
    vertices: usize,
    out_degree: Vec<u64>,
    damping: u64,
    iterations: usize,
    m: usize,
}

impl PageRank {
    pub fn new(
        edges: &[TupleRecord],
        vertices: usize,
        damping: f64,
        iterations: usize,
        m: usize,
    ) -> Result<Self, AppError> {
        if vertices == 0 || m == 0 {
            return Err(AppError::InvalidParam(
                "need at least one vertex and one PE".into(),
            ));
        }
        if !(0.0..=1.0).contains(&damping) {
            return Err(AppError::InvalidParam(format!(
                "damping must be in [0, 1], got {damping}"
            )));
        }
        let mut out_degree = vec![0u64; vertices];
        for (index, e) in edges.iter().enumerate() {
            for vertex in [e.key, e.value] {
                if vertex >= vertices as u64 {
                    return Err(AppError::VertexOutOfRange {
                        index,
                        vertex,
                        vertices,
                    });
                }
            }
            out_degree[e.key as usize] += 1;
        }
        Ok(Self {
            vertices,
            out_degree,
            damping: to_fixed(damping),
            iterations,
            m,
        })
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn initial_ranks(&self) -> Vec<u64> {
        vec![FIXED_ONE / self.vertices as u64; self.vertices]
    }

    /// The per-iteration application fed to the pipeline.
    pub fn scatter_pass(&self, ranks: &[u64]) -> ScatterPass {
        let contrib = ranks
            .iter()
            .zip(&self.out_degree)
            .map(|(&r, &d)| r.checked_div(d).unwrap_or(0))
            .collect();
        ScatterPass {
            contrib,
            vertices: self.vertices,
            m: self.m,
        }
    }

    /// `(1 - d) / V + d * accum`, in fixed point.
    pub fn apply(&self, accum: &[u64]) -> Vec<u64> {
        let base = (FIXED_ONE - self.damping) / self.vertices as u64;
        accum
            .iter()
            .map(|&a| base + ((self.damping as u128 * a as u128) >> 32) as u64)
            .collect()
    }

    /// Single-threaded fixed-point iteration over the edge list.
    pub fn reference_ranks(&self, edges: &[TupleRecord]) -> Vec<u64> {
        let mut ranks = self.initial_ranks();
        for _ in 0..self.iterations {
            let mut accum = vec![0u64; self.vertices];
            for e in edges {
                let src = e.key as usize;
                accum[e.value as usize] =
                    accum[e.value as usize].wrapping_add(ranks[src] / self.out_degree[src]);
            }
            ranks = self.apply(&accum);
        }
        ranks
    }

    /// Runs every iteration through the simulated pipeline. Returns one
    /// metrics record per iteration and the final ranks.
    pub fn simulate(
        &self,
        cfg: &ArchConfig,
        edges: &[TupleRecord],
        opts: &SimOptions,
    ) -> Result<(Vec<SimMetrics>, Vec<u64>), SimError> {
        let mut ranks = self.initial_ranks();
        let mut metrics = Vec::with_capacity(self.iterations);
        for _ in 0..self.iterations {
            let pass = self.scatter_pass(&ranks);
            let out = run_simulation_with(cfg, edges, &pass, opts)?;
            metrics.push(out.metrics);
            ranks = self.apply(&out.result);
        }
        Ok((metrics, ranks))
    }
}

/// One scatter pass: accumulates contributions per destination vertex.
#[derive(Debug, Clone)]
pub struct ScatterPass {
    contrib: Vec<u64>,
    vertices: usize,
    m: usize,
}

impl Application for ScatterPass {
    type State = Vec<u64>;
    /// Accumulated contributions per vertex.
    type Output = Vec<u64>;

    fn kind(&self) -> AppKind {
        AppKind::Pr
    }

    fn primaries(&self) -> usize {
        self.m
    }

    fn prepare(&self, tuple: TupleRecord) -> RoutedTuple {
        let dst = tuple.value as usize;
        RoutedTuple::new(tuple, dst % self.m, self.contrib[tuple.key as usize])
    }

    fn new_state(&self) -> Vec<u64> {
        vec![0; self.vertices.div_ceil(self.m)]
    }

    fn process(&self, state: &mut Vec<u64>, item: &RoutedTuple) {
        let slot = item.tuple.value as usize / self.m;
        state[slot] = state[slot].wrapping_add(item.payload);
    }

    fn combine(&self, into: &mut Vec<u64>, from: Vec<u64>) {
        for (a, b) in into.iter_mut().zip(from) {
            *a = a.wrapping_add(b);
        }
    }

    fn finalize(&self, rows: Vec<Vec<u64>>) -> Vec<u64> {
        let mut out = vec![0; self.vertices];
        for (pe, row) in rows.into_iter().enumerate() {
            for (slot, v) in row.into_iter().enumerate() {
                let vertex = slot * self.m + pe;
                if vertex < self.vertices {
                    out[vertex] = v;
                }
            }
        }
        out
    }

    fn reference(&self, data: &[TupleRecord]) -> Vec<u64> {
        let mut accum = vec![0u64; self.vertices];
        for e in data {
            let v = e.value as usize;
            accum[v] = accum[v].wrapping_add(self.contrib[e.key as usize]);
        }
        accum
    }

    fn same_result(&self, a: &Vec<u64>, b: &Vec<u64>) -> bool {
        a == b
    }

    fn buffer_units(&self) -> usize {
        self.vertices.div_ceil(self.m)
    }
}
