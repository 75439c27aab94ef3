use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use skewsim::analyzer::{select_implementation_by, AnalyzerParams, SampleSize, SelectionMode};
use skewsim::apps::{
    AppKind, AppParams, Application, DataPartitioning, HeavyHitters, HistoHash, Histogram,
    HyperLogLog, PageRank,
};
use skewsim::config::{parse_kv, ConfigError};
use skewsim::datagen::{
    gen_evolving, gen_graph, gen_single_key, gen_zipf, load_edge_list, load_tuples, save_tuples,
    symmetrize, vertex_count, write_edge_list,
};
use skewsim::engine::SimOptions;
use skewsim::report::{
    read_csv, run_app, speedup_table, workload_heatmap, write_csv, write_heatmap_csv,
    write_speedup_csv, SweepPoint, SweepRow, SweepSpec,
};
use skewsim::{ArchConfig, TupleRecord};

#[derive(Parser)]
#[command(
    name = "skewsim",
    version,
    about = "Simulate skew-oblivious data routing on a PE array"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset to a file.
    Generate(GenerateArgs),
    /// Run one application over one dataset and print its metrics.
    Simulate(SimulateArgs),
    /// Choose the number of secondary PEs for a dataset.
    Analyze(AnalyzeArgs),
    /// Run a parameter grid and write one CSV row per point.
    Sweep(SweepArgs),
    /// Derive heatmaps or speedup tables.
    Report(ReportArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` file with architecture or application settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset (binary tuple file, or an edge list for `pr`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "histo")]
    app: AppKind,
    /// Zipf exponent of the generated stream.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    x: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tuples to generate when no dataset is given.
    #[arg(long, default_value_t = 1 << 20)]
    tuples: usize,
    /// Key domain (or vertex count for graphs) of generated data.
    #[arg(long, default_value_t = 1 << 20)]
    domain: u64,
    /// Average out-degree of generated graphs.
    #[arg(long, default_value_t = 8)]
    degree: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Zipf,
    Single,
    Evolving,
    Graph,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "zipf")]
    dist: Dist,
    /// Tuples per segment of an evolving stream.
    #[arg(long)]
    interval: Option<usize>,
    /// Seeds of the evolving segments, in order.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Key of the single-key stream.
    #[arg(long, default_value_t = 0)]
    key: u64,
    /// Also add the reverse of every generated edge.
    #[arg(long)]
    symmetric: bool,
    /// Tuple width in bytes for binary output.
    #[arg(long, default_value_t = 8)]
    w_tuple: u16,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.01)]
    tolerance: f64,
    #[arg(long)]
    online: bool,
    #[arg(long, conflicts_with = "sample_fraction")]
    sample_count: Option<usize>,
    #[arg(long)]
    sample_fraction: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "histo")]
    apps: Vec<AppKind>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "16")]
    ms: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8,15")]
    xs: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Heatmap,
    Speedup,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    kind: ReportKind,
    /// Sweep CSV to derive speedups from.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    alphas: Vec<f64>,
}

impl Common {
    fn settings(&self) -> Result<(ArchConfig, AppParams)> {
        let mut cfg = ArchConfig::default();
        let mut params = AppParams::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (k, v) in
                parse_kv(&text).with_context(|| format!("parsing config {}", path.display()))?
            {
                match cfg.set(&k, &v) {
                    Err(ConfigError::UnknownKey(_)) => params
                        .set(&k, &v)
                        .with_context(|| format!("in config {}", path.display()))?,
                    other => other.with_context(|| format!("in config {}", path.display()))?,
                }
            }
        }
        if let Some(m) = self.m {
            cfg.m_pripe = m;
        }
        if let Some(x) = self.x {
            cfg.x_secpe = x;
        }
        cfg.seed = self.seed;
        Ok((cfg.validate()?, params))
    }

    fn dataset(&self, params: &mut AppParams) -> Result<Vec<TupleRecord>> {
        let data = match (&self.dataset, self.app) {
            (Some(path), AppKind::Pr) => load_edge_list(path, params.pr_vertices.map(|v| v as u64))
                .with_context(|| format!("loading edge list {}", path.display()))?,
            (Some(path), _) => {
                load_tuples(path).with_context(|| format!("loading tuples {}", path.display()))?
            }
            (None, AppKind::Pr) => {
                params.pr_vertices.get_or_insert(self.domain as usize);
                gen_graph(self.domain, self.degree, self.alpha, self.seed)?
            }
            (None, _) => gen_zipf(self.tuples, self.alpha, self.domain, self.seed)?,
        };
        Ok(data)
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            ),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let c = &args.common;
    let out = c.out.as_deref().context("generate needs --out")?;
    let data = match args.dist {
        Dist::Zipf => gen_zipf(c.tuples, c.alpha, c.domain, c.seed)?,
        Dist::Single => gen_single_key(c.tuples, args.key),
        Dist::Evolving => {
            let seeds = if args.seeds.is_empty() {
                vec![c.seed]
            } else {
                args.seeds.clone()
            };
            gen_evolving(
                c.tuples,
                c.alpha,
                c.domain,
                args.interval.unwrap_or(c.tuples),
                &seeds,
            )?
        }
        Dist::Graph => {
            let edges = gen_graph(c.domain, c.degree, c.alpha, c.seed)?;
            let edges = if args.symmetric {
                symmetrize(&edges)
            } else {
                edges
            };
            let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
            write_edge_list(io::BufWriter::new(file), &edges)?;
            eprintln!("wrote {} edges to {}", edges.len(), out.display());
            return Ok(());
        }
    };
    save_tuples(out, &data, args.w_tuple)?;
    eprintln!("wrote {} tuples to {}", data.len(), out.display());
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let c = &args.common;
    let (cfg, mut params) = c.settings()?;
    let data = c.dataset(&mut params)?;
    let summary = run_app(c.app, &params, &cfg, &data, &SimOptions::default())?;
    if !summary.matches_reference {
        bail!(
            "{} result differs from the single-threaded reference",
            c.app
        );
    }
    let point = SweepPoint {
        app: c.app,
        alpha: c.alpha,
        m: cfg.m_pripe,
        x: cfg.x_secpe,
        seed: c.seed,
    };
    let post_plan = summary
        .passes
        .first()
        .and_then(|p| p.post_plan_throughput());
    eprintln!(
        "{} over {} tuples: {} cycles, {:.4} tuples/cycle{}, {} stall cycles, {} reschedules",
        c.app,
        summary.tuples,
        summary.cycles,
        summary.throughput,
        post_plan.map_or(String::new(), |t| format!(" ({t:.4} after the first plan)")),
        summary.stalls,
        summary.reschedules
    );
    write_csv(c.output()?, &[SweepRow::new(point, &summary)])?;
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let c = &args.common;
    let (cfg, mut params) = c.settings()?;
    let data = c.dataset(&mut params)?;
    let sample = match (args.sample_count, args.sample_fraction) {
        (_, Some(f)) => SampleSize::Fraction(f),
        (Some(n), None) => SampleSize::Count(n),
        (None, None) => SampleSize::default(),
    };
    let ap = AnalyzerParams {
        tolerance: args.tolerance,
        sample,
        seed: c.seed,
    };
    let mode = if args.online {
        SelectionMode::Online
    } else {
        SelectionMode::Offline
    };
    let route = router_for(c.app, &params, cfg.m_pripe, &data)?;
    let imp = select_implementation_by(&data, cfg.m_pripe, route, &ap, mode, cfg.bram_capacity_c)?;
    let mut out = c.output()?;
    writeln!(out, "x = {}", imp.x)?;
    writeln!(out, "capacity = {}", imp.capacity)?;
    if !imp.histogram.is_empty() {
        writeln!(out, "pe,samples")?;
        for (pe, n) in imp.histogram.iter().enumerate() {
            writeln!(out, "{pe},{n}")?;
        }
    }
    Ok(())
}

type Route = Box<dyn Fn(TupleRecord) -> usize>;

/// Primary destination function of application `kind`.
fn router_for(kind: AppKind, params: &AppParams, m: usize, data: &[TupleRecord]) -> Result<Route> {
    fn boxed<A: Application + 'static>(app: A) -> Route {
        Box::new(move |t| app.prepare(t).dst)
    }
    Ok(match kind {
        AppKind::Histo => boxed(Histogram::new(params.histo_bins, m, HistoHash::Radix)?),
        AppKind::Dp => boxed(DataPartitioning::new(
            params.dp_fanout,
            params.dp_buffer_line,
            m,
        )?),
        AppKind::Hll => boxed(HyperLogLog::new(params.hll_precision, params.hll_seed, m)?),
        AppKind::Hhd => boxed(HeavyHitters::new(
            params.hhd_rows,
            params.hhd_cols,
            params.hhd_phi,
            params.hhd_seed,
            m,
        )?),
        AppKind::Pr => {
            let vertices = params.pr_vertices.unwrap_or(vertex_count(data) as usize);
            let pr = PageRank::new(data, vertices, params.pr_damping, params.pr_iterations, m)?;
            boxed(pr.scatter_pass(&pr.initial_ranks()))
        }
    })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SKEWSIM_THREADS") {
        let n: usize =
            v.trim().parse().ok().filter(|&n| n > 0).with_context(|| {
                format!("SKEWSIM_THREADS must be a positive integer, got {v:?}")
            })?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let c = &args.common;
    let (base, params) = c.settings()?;
    let spec = SweepSpec {
        apps: args.apps.clone(),
        alphas: args.alphas.clone(),
        ms: args.ms.clone(),
        xs: args.xs.clone(),
        seeds: if args.seeds.is_empty() {
            vec![c.seed]
        } else {
            args.seeds.clone()
        },
        tuples: c.tuples,
        domain: c.domain,
        avg_degree: c.degree,
        base,
        params,
    };
    let points = spec.points();
    for p in &points {
        spec.config_for(p)
            .validate()
            .with_context(|| format!("sweep point m={} x={}", p.m, p.x))?;
    }
    let rows = thread_pool()?.install(|| {
        points
            .par_iter()
            .map(|p| {
                spec.run_point(p).with_context(|| {
                    format!(
                        "{} alpha={} m={} x={} seed={}",
                        p.app, p.alpha, p.m, p.x, p.seed
                    )
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_csv(c.output()?, &rows)?;
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let c = &args.common;
    match args.kind {
        ReportKind::Speedup => {
            let input = args
                .input
                .as_deref()
                .context("speedup report needs --input <sweep.csv>")?;
            let rows =
                read_csv(open(input)?).with_context(|| format!("reading {}", input.display()))?;
            write_speedup_csv(c.output()?, &speedup_table(&rows))?;
        }
        ReportKind::Heatmap => {
            if c.app == AppKind::Pr {
                bail!("heatmaps are generated from key streams; pick histo, dp, hll or hhd");
            }
            let (cfg, params) = c.settings()?;
            let matrix = workload_heatmap(
                c.app,
                &params,
                &cfg,
                &args.alphas,
                c.tuples,
                c.domain,
                c.seed,
            )?;
            write_heatmap_csv(c.output()?, &args.alphas, &matrix)?;
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Analyze(a) => analyze(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Report(a) => report(&a),
    }
}
