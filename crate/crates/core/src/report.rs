//! Parameter sweeps and the tables derived from them: the per-run CSV,
//! normalized per-PE workload heatmaps and speedup summaries.

use std::io::{Read, Write};

use thiserror::Error;

use crate::apps::{
    AppError, AppKind, AppParams, Application, DataPartitioning, HeavyHitters, HistoHash,
    Histogram, HyperLogLog, PageRank,
};
use crate::config::ArchConfig;
use crate::datagen::{gen_graph, gen_zipf, vertex_count, DatagenError};
use crate::engine::{run_simulation_with, SimError, SimMetrics, SimOptions};
use crate::tuple::TupleRecord;

pub const CSV_HEADER: [&str; 10] = [
    "app",
    "alpha",
    "m",
    "x",
    "seed",
    "cycles",
    "tuples",
    "throughput",
    "stalls",
    "reschedules",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    App(#[from] AppError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{app} result differs from the single-threaded reference")]
    Mismatch { app: AppKind },
    #[error("sweep table: {0}")]
    Table(String),
}

/// Aggregate of one application run (all passes for PageRank).
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub cycles: u64,
    pub tuples: u64,
    pub throughput: f64,
    pub stalls: u64,
    pub reschedules: usize,
    pub matches_reference: bool,
    pub range_workload: Vec<u64>,
    pub passes: Vec<SimMetrics>,
}

impl RunSummary {
    fn from_passes(passes: Vec<SimMetrics>, matches_reference: bool) -> Self {
        let cycles = passes.iter().map(|p| p.total_cycles).sum();
        let tuples = passes.iter().map(|p| p.input_tuples).sum();
        let mut range_workload = vec![0; passes.first().map_or(0, |p| p.range_workload.len())];
        for p in &passes {
            for (a, b) in range_workload.iter_mut().zip(&p.range_workload) {
                *a += b;
            }
        }
        Self {
            cycles,
            tuples,
            throughput: if cycles == 0 {
                0.0
            } else {
                tuples as f64 / cycles as f64
            },
            stalls: passes.iter().map(|p| p.stall_cycles).sum(),
            reschedules: passes.iter().map(|p| p.reschedule_events.len()).sum(),
            matches_reference,
            range_workload,
            passes,
        }
    }
}

fn simulate_one<A: Application>(
    app: &A,
    cfg: &ArchConfig,
    data: &[TupleRecord],
    opts: &SimOptions,
) -> Result<RunSummary, ReportError> {
    let out = run_simulation_with(cfg, data, app, opts)?;
    let ok = app.same_result(&out.result, &app.reference(data));
    Ok(RunSummary::from_passes(vec![out.metrics], ok))
}

/// Builds application `kind` for `cfg.m_pripe` primaries and simulates it,
/// checking the merged result against the reference.
pub fn run_app(
    kind: AppKind,
    params: &AppParams,
    cfg: &ArchConfig,
    data: &[TupleRecord],
    opts: &SimOptions,
) -> Result<RunSummary, ReportError> {
    let m = cfg.m_pripe;
    match kind {
        AppKind::Histo => simulate_one(
            &Histogram::new(params.histo_bins, m, HistoHash::Radix)?,
            cfg,
            data,
            opts,
        ),
        AppKind::Dp => simulate_one(
            &DataPartitioning::new(params.dp_fanout, params.dp_buffer_line, m)?,
            cfg,
            data,
            opts,
        ),
        AppKind::Hll => simulate_one(
            &HyperLogLog::new(params.hll_precision, params.hll_seed, m)?,
            cfg,
            data,
            opts,
        ),
        AppKind::Hhd => simulate_one(
            &HeavyHitters::new(
                params.hhd_rows,
                params.hhd_cols,
                params.hhd_phi,
                params.hhd_seed,
                m,
            )?,
            cfg,
            data,
            opts,
        ),
        AppKind::Pr => {
            let vertices = params.pr_vertices.unwrap_or(vertex_count(data) as usize);
            let pr = PageRank::new(data, vertices, params.pr_damping, params.pr_iterations, m)?;
            let (passes, ranks) = pr.simulate(cfg, data, opts)?;
            let ok = ranks == pr.reference_ranks(data);
            Ok(RunSummary::from_passes(passes, ok))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub app: AppKind,
    pub alpha: f64,
    pub m: usize,
    pub x: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub apps: Vec<AppKind>,
    pub alphas: Vec<f64>,
    pub ms: Vec<usize>,
    pub xs: Vec<usize>,
    pub seeds: Vec<u64>,
    pub tuples: usize,
    pub domain: u64,
    /// Average out-degree of generated graphs.
    pub avg_degree: usize,
    pub base: ArchConfig,
    pub params: AppParams,
}

impl SweepSpec {
    /// Every grid point in a fixed order: app, alpha, m, x, seed.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &app in &self.apps {
            for &alpha in &self.alphas {
                for &m in &self.ms {
                    for &x in &self.xs {
                        for &seed in &self.seeds {
                            out.push(SweepPoint {
                                app,
                                alpha,
                                m,
                                x,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn config_for(&self, p: &SweepPoint) -> ArchConfig {
        ArchConfig {
            m_pripe: p.m,
            x_secpe: p.x,
            seed: p.seed,
            ..self.base.clone()
        }
    }

    pub fn dataset_for(&self, p: &SweepPoint) -> Result<Vec<TupleRecord>, DatagenError> {
        match p.app {
            AppKind::Pr => {
                let vertices = self.params.pr_vertices.map_or(self.domain, |v| v as u64);
                gen_graph(vertices, self.avg_degree, p.alpha, p.seed)
            }
            _ => gen_zipf(self.tuples, p.alpha, self.domain, p.seed),
        }
    }

    pub fn run_point(&self, p: &SweepPoint) -> Result<SweepRow, ReportError> {
        let data = self.dataset_for(p)?;
        let mut params = self.params.clone();
        if p.app == AppKind::Pr && params.pr_vertices.is_none() {
            params.pr_vertices = Some(self.domain as usize);
        }
        let summary = run_app(
            p.app,
            &params,
            &self.config_for(p),
            &data,
            &SimOptions::default(),
        )?;
        if !summary.matches_reference {
            return Err(ReportError::Mismatch { app: p.app });
        }
        Ok(SweepRow::new(*p, &summary))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub cycles: u64,
    pub tuples: u64,
    pub throughput: f64,
    pub stalls: u64,
    pub reschedules: usize,
}

impl SweepRow {
    pub fn new(point: SweepPoint, s: &RunSummary) -> Self {
        Self {
            point,
            cycles: s.cycles,
            tuples: s.tuples,
            throughput: s.throughput,
            stalls: s.stalls,
            reschedules: s.reschedules,
        }
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let p = &r.point;
        w.write_record([
            p.app.to_string(),
            p.alpha.to_string(),
            p.m.to_string(),
            p.x.to_string(),
            p.seed.to_string(),
            r.cycles.to_string(),
            r.tuples.to_string(),
            format!("{:.6}", r.throughput),
            r.stalls.to_string(),
            r.reschedules.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>, ReportError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(ReportError::Table(format!(
            "unexpected header {}",
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |field: &str| ReportError::Table(format!("row {}: bad {field}", i + 1));
        let num = |idx: usize, name: &str| rec[idx].parse::<u64>().map_err(|_| bad(name));
        rows.push(SweepRow {
            point: SweepPoint {
                app: rec[0].parse()?,
                alpha: rec[1].parse().map_err(|_| bad("alpha"))?,
                m: num(2, "m")? as usize,
                x: num(3, "x")? as usize,
                seed: num(4, "seed")?,
            },
            cycles: num(5, "cycles")?,
            tuples: num(6, "tuples")?,
            throughput: rec[7].parse().map_err(|_| bad("throughput"))?,
            stalls: num(8, "stalls")?,
            reschedules: num(9, "reschedules")? as usize,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub app: AppKind,
    pub alpha: f64,
    pub m: usize,
    pub x: usize,
    pub seed: u64,
    pub speedup: f64,
}

/// Throughput of every row relative to the `x = 0` row with the same
/// app, alpha, m and seed. Rows without a baseline are skipped.
pub fn speedup_table(rows: &[SweepRow]) -> Vec<SpeedupRow> {
    rows.iter()
        .filter_map(|r| {
            let p = &r.point;
            let base = rows.iter().find(|b| {
                let q = &b.point;
                q.x == 0 && q.app == p.app && q.alpha == p.alpha && q.m == p.m && q.seed == p.seed
            })?;
            Some(SpeedupRow {
                app: p.app,
                alpha: p.alpha,
                m: p.m,
                x: p.x,
                seed: p.seed,
                speedup: r.throughput / base.throughput,
            })
        })
        .collect()
}

pub fn write_speedup_csv<W: Write>(out: W, rows: &[SpeedupRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["app", "alpha", "m", "x", "seed", "speedup"])?;
    for r in rows {
        w.write_record([
            r.app.to_string(),
            r.alpha.to_string(),
            r.m.to_string(),
            r.x.to_string(),
            r.seed.to_string(),
            format!("{:.4}", r.speedup),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-PE routed workload for each alpha at `x = 0`, divided by the same
/// PE's workload on a uniform stream.
pub fn workload_heatmap(
    app: AppKind,
    params: &AppParams,
    cfg: &ArchConfig,
    alphas: &[f64],
    tuples: usize,
    domain: u64,
    seed: u64,
) -> Result<Vec<Vec<f64>>, ReportError> {
    let cfg = ArchConfig {
        x_secpe: 0,
        ..cfg.clone()
    };
    let workload = |alpha: f64| -> Result<Vec<u64>, ReportError> {
        let data = gen_zipf(tuples, alpha, domain, seed)?;
        Ok(run_app(app, params, &cfg, &data, &SimOptions::default())?.range_workload)
    };
    let uniform = workload(0.0)?;
    alphas
        .iter()
        .map(|&a| {
            Ok(workload(a)?
                .iter()
                .zip(&uniform)
                .map(|(&w, &u)| if u == 0 { 0.0 } else { w as f64 / u as f64 })
                .collect())
        })
        .collect()
}

pub fn write_heatmap_csv<W: Write>(
    out: W,
    alphas: &[f64],
    matrix: &[Vec<f64>],
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    let pes = matrix.first().map_or(0, Vec::len);
    let mut header = vec!["alpha".to_string()];
    header.extend((0..pes).map(|i| format!("pe{i}")));
    w.write_record(&header)?;
    for (alpha, row) in alphas.iter().zip(matrix) {
        let mut rec = vec![alpha.to_string()];
        rec.extend(row.iter().map(|v| format!("{v:.4}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
