//! Acceptance gate: one line per criterion, nonzero exit if any fails.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skewsim::analyzer::{bram_capacity, pe_counts, select_secpe_count};
use skewsim::apps::{
    hll, Application, DataPartitioning, HeavyHitters, HistoHash, Histogram, HyperLogLog, PageRank,
};
use skewsim::datagen::{gen_evolving, gen_single_key, gen_zipf};
use skewsim::engine::{run_simulation, run_simulation_with, SimMetrics, SimOptions};
use skewsim::mapper::MappingState;
use skewsim::routing::build_decode_table;
use skewsim::{ArchConfig, TupleRecord};

const TUPLES: usize = 1 << 20;
const DOMAIN: u64 = 1 << 20;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cfg(m: usize, x: usize) -> ArchConfig {
    ArchConfig {
        m_pripe: m,
        x_secpe: x,
        ..ArchConfig::default()
    }
}

fn histo(m: usize) -> Histogram {
    Histogram::new(1 << 16, m, HistoHash::Radix).unwrap()
}

fn run<A: Application>(
    app: &A,
    cfg: &ArchConfig,
    data: &[TupleRecord],
) -> Result<SimMetrics, String> {
    let out = run_simulation(cfg, data, app).map_err(|e| e.to_string())?;
    if !app.same_result(&out.result, &app.reference(data)) {
        return Err(format!("{} result differs from the reference", app.kind()));
    }
    Ok(out.metrics)
}

fn skew_collapse() -> Outcome {
    let start = Instant::now();
    let app = histo(16);
    let uniform = run(
        &app,
        &cfg(16, 0),
        &gen_zipf(TUPLES, 0.0, DOMAIN, 1).unwrap(),
    )?;
    let hot = run(&app, &cfg(16, 0), &gen_single_key(TUPLES, 0x13))?;
    let secs = start.elapsed().as_secs_f64();
    let ratio = hot.throughput / uniform.throughput;
    let target = 1.0 / 16.0;
    check(
        (ratio - target).abs() <= 0.1 * target && secs < 10.0,
        format!(
            "uniform {:.3} t/c, single key {:.4} t/c, ratio {:.4} (target {:.4} +-10%), {:.1}s",
            uniform.throughput, hot.throughput, ratio, target, secs
        ),
    )
}

fn skew_obliviousness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for name in ["histo", "hll"] {
        let hll_app = HyperLogLog::new(14, 0, 16).unwrap();
        let histo_app = histo(16);
        let sim = |c: &ArchConfig, d: &[TupleRecord]| match name {
            "histo" => run(&histo_app, c, d),
            _ => run(&hll_app, c, d),
        };
        let base = sim(&cfg(16, 0), &gen_zipf(TUPLES, 0.0, DOMAIN, 7).unwrap())?.throughput;
        for alpha in [0.0, 1.0, 2.0, 3.0] {
            let m = sim(&cfg(16, 15), &gen_zipf(TUPLES, alpha, DOMAIN, 7).unwrap())?;
            let post = m.post_plan_throughput().ok_or("no plan installed")?;
            let dev = (post - base).abs() / base;
            worst = worst.max(dev);
            details.push(format!("{name}@{alpha}:{:.2}", post / base));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 0.15 && secs < 60.0,
        format!(
            "post-plan / baseline: {} (worst dev {:.3}), {:.1}s",
            details.join(" "),
            worst,
            secs
        ),
    )
}

fn monotone_robustness() -> Outcome {
    let app = histo(16);
    let data = gen_zipf(TUPLES, 3.0, DOMAIN, 7).unwrap();
    let mut tp = Vec::new();
    for x in [0, 1, 2, 4, 8, 15] {
        tp.push((x, run(&app, &cfg(16, x), &data)?.throughput));
    }
    let monotone = tp.windows(2).all(|w| w[1].1 >= w[0].1);
    let speedup = tp[5].1 / tp[0].1;
    let shown: Vec<_> = tp.iter().map(|(x, t)| format!("X={x}:{t:.3}")).collect();
    check(
        monotone && speedup >= 8.0,
        format!("{} speedup {:.2}x", shown.join(" "), speedup),
    )
}

fn more_primaries_do_not_help() -> Outcome {
    let data = gen_zipf(TUPLES, 3.0, DOMAIN, 7).unwrap();
    let m16 = run(&histo(16), &cfg(16, 0), &data)?.throughput;
    let m32 = run(&histo(32), &cfg(32, 0), &data)?.throughput;
    check(
        m32 <= 1.2 * m16,
        format!(
            "M=16 {:.4} t/c, M=32 {:.4} t/c, ratio {:.3}",
            m16,
            m32,
            m32 / m16
        ),
    )
}

fn helper_count_endpoints() -> Outcome {
    let uniform = select_secpe_count(&[1600; 16], 0.01);
    let mut single = vec![0; 16];
    single[9] = 25_600;
    let single = select_secpe_count(&single, 0.01);
    let pair = select_secpe_count(&[2, 2, 0, 0], 0.01);
    check(
        uniform == Ok(0) && single == Ok(15) && pair == Ok(2),
        format!("uniform {uniform:?}, single key {single:?}, [2,2,0,0] {pair:?}"),
    )
}

fn balanced_pipeline() -> Outcome {
    let got = pe_counts(1, 2, 64, 8);
    check(got == Ok((8, 16)), format!("(N, M) = {got:?}"))
}

fn capacity_model() -> Outcome {
    let c = 1u64 << 20;
    let full = bram_capacity(16, 0, c);
    let shared = bram_capacity(16, 15, c);
    check(
        full == c && shared == 16 * c / 31 && shared >= c / 2,
        format!("x=0 -> {full}, x=15 -> {shared} (C/2 = {})", c / 2),
    )
}

fn mapper_golden_trace() -> Outcome {
    let mut s = MappingState::new(4, 3).map_err(|e| e.to_string())?;
    for (sec, pri) in [(4, 2), (5, 2), (6, 0)] {
        s.apply_plan_pair(sec, pri).map_err(|e| e.to_string())?;
    }
    let row0: Vec<_> = (0..6).map(|_| s.redirect(0)).collect();
    let row2: Vec<_> = (0..6).map(|_| s.redirect(2)).collect();
    check(
        row0 == [0, 6, 0, 6, 0, 6] && row2 == [2, 4, 5, 2, 4, 5],
        format!("row 0 {row0:?}, row 2 {row2:?}"),
    )
}

#[derive(Debug, Clone)]
struct Case {
    cfg: ArchConfig,
    tuples: Vec<TupleRecord>,
    forced: BTreeSet<u64>,
    knob: u32,
}

fn case_strategy() -> impl Strategy<Value = Case> {
    let arch = (
        1usize..=4,
        prop::sample::select(vec![1usize, 2, 4, 8]),
        0usize..8,
        1u32..=2,
        1u32..=3,
        1usize..=8,
        0usize..=12,
    );
    let control = (
        1u64..=48,
        1u64..=48,
        prop::sample::select(vec![0.0, 0.5, 0.8, 0.95]),
        0u64..=64,
    );
    let data = (0usize..1200, 0.0f64..3.5, 1u64..=4096, any::<u64>());
    let epochs = prop::collection::btree_set(0u64..2500, 0..4);
    (arch, control, data, epochs, any::<u32>()).prop_map(
        |(
            (n, m, x, iip, iiq, batch, depth),
            (prof, win, thr, over),
            (size, alpha, domain, seed),
            forced,
            knob,
        )| Case {
            cfg: ArchConfig {
                n_prepe: n,
                m_pripe: m,
                x_secpe: x % m,
                ii_prepe: iip,
                ii_pripe: iiq,
                w_mem: 8 * batch,
                w_tuple: 8,
                channel_depth: n + depth,
                profiling_cycles: prof,
                monitor_window: win,
                throughput_threshold: thr,
                reschedule_overhead: over,
                bram_capacity_c: 1 << 20,
                seed,
            },
            tuples: gen_zipf(size, alpha, domain, seed).unwrap(),
            forced,
            knob,
        },
    )
}

fn opts(case: &Case) -> SimOptions {
    SimOptions {
        forced_epochs: case.forced.clone(),
        stall_limit: 20_000,
        ..SimOptions::default()
    }
}

fn equivalent<A: Application>(app: &A, case: &Case) -> Result<(), TestCaseError> {
    let out = run_simulation_with(&case.cfg, &case.tuples, app, &opts(case))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(
        app.same_result(&out.result, &app.reference(&case.tuples)),
        "{} diverged",
        app.kind()
    );
    Ok(())
}

fn oracle_equivalence() -> Outcome {
    let config = Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    };
    let mut done = Vec::new();
    for app in ["histo", "dp", "hll", "hhd", "pr"] {
        let rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
        let mut runner = TestRunner::new_with_rng(config.clone(), rng);
        let result = runner.run(&case_strategy(), |case| {
            let m = case.cfg.m_pripe;
            let k = case.knob;
            match app {
                "histo" => {
                    let hash = if k % 2 == 0 {
                        HistoHash::Radix
                    } else {
                        HistoHash::Murmur3 { seed: k }
                    };
                    equivalent(&Histogram::new(64, m, hash).unwrap(), &case)
                }
                "dp" => equivalent(
                    &DataPartitioning::new(16, 1 + (k % 4) as usize, m).unwrap(),
                    &case,
                ),
                "hll" => equivalent(&HyperLogLog::new(6 + k % 5, k, m).unwrap(), &case),
                "hhd" => {
                    let phi = 0.05 + (k % 10) as f64 * 0.05;
                    let hhd =
                        HeavyHitters::new(1 + (k % 3) as usize, 8 << (k % 4), phi, k, m).unwrap();
                    equivalent(&hhd, &case)
                }
                _ => {
                    let vertices = 1 + (k % 64) as u64;
                    let edges: Vec<_> = case
                        .tuples
                        .iter()
                        .map(|t| {
                            TupleRecord::new(
                                t.key % vertices,
                                t.value.wrapping_mul(0x9E37_79B9) % vertices,
                            )
                        })
                        .collect();
                    let pr =
                        PageRank::new(&edges, vertices as usize, 0.85, 1 + (k % 3) as usize, m)
                            .unwrap();
                    let (_, ranks) = pr
                        .simulate(&case.cfg, &edges, &opts(&case))
                        .map_err(|e| TestCaseError::fail(e.to_string()))?;
                    prop_assert_eq!(ranks, pr.reference_ranks(&edges));
                    Ok(())
                }
            }
        });
        match result {
            Ok(()) => done.push(format!("{app}:200")),
            Err(e) => return Err(format!("{app} failed: {e}")),
        }
    }
    Ok(format!(
        "{} randomized cases equal the reference",
        done.join(" ")
    ))
}

fn decoder_exhaustive() -> Outcome {
    let naive = |mask: u32| -> Vec<u8> { (0..32u8).filter(|&b| mask >> b & 1 == 1).collect() };
    let mut checked = 0u64;
    for n in 1..=8 {
        let table = build_decode_table(n).map_err(|e| e.to_string())?;
        for mask in 0..(1u32 << n) {
            let e = table.entry(mask);
            if e.count() != mask.count_ones() as usize || e.positions() != naive(mask) {
                return Err(format!("n={n} mask {mask:#b} decoded wrong"));
            }
            checked += 1;
        }
    }
    let table = build_decode_table(16).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..100_000 {
        let mask = rng.random_range(0..1u32 << 16);
        let e = table.entry(mask);
        if e.count() != mask.count_ones() as usize || e.positions() != naive(mask) {
            return Err(format!("n=16 mask {mask:#b} decoded wrong"));
        }
        checked += 1;
    }
    Ok(format!("{checked} masks match a bit-scan decoder"))
}

/// Destination of the hottest key of a Zipf stream under the histogram's routing.
fn hot_destination(seed: u64) -> usize {
    let data = gen_zipf(2000, 3.0, DOMAIN, seed).unwrap();
    let mut freq: HashMap<u64, usize> = HashMap::new();
    for t in &data {
        *freq.entry(t.key).or_default() += 1;
    }
    let hot = freq.into_iter().max_by_key(|&(k, c)| (c, k)).unwrap().0;
    histo(16).prepare(TupleRecord::new(hot, 0)).dst
}

fn evolving_skew() -> Outcome {
    let first = 7;
    let second = (8..)
        .find(|&s| hot_destination(s) != hot_destination(first))
        .unwrap();
    let interval = TUPLES;
    let data = gen_evolving(2 * interval, 3.0, DOMAIN, interval, &[first, second]).unwrap();
    let app = histo(16);

    // Reference: a fresh X=15 plan on the second distribution alone.
    let single = run(
        &app,
        &cfg(16, 15),
        &gen_zipf(interval, 3.0, DOMAIN, second).unwrap(),
    )?;
    let single_tp = single
        .post_plan_throughput()
        .ok_or("no plan in single-phase run")?;
    let collapsed = run(
        &app,
        &cfg(16, 0),
        &gen_zipf(interval, 3.0, DOMAIN, second).unwrap(),
    )?
    .throughput;

    let adaptive = run(&app, &cfg(16, 15), &data)?;
    let replan = adaptive.plans.get(1).ok_or_else(|| {
        format!(
            "no second plan, {} epochs",
            adaptive.reschedule_events.len()
        )
    })?;
    let recovered = adaptive
        .throughput_between(replan.installed_cycle, adaptive.fetch_done_cycle)
        .ok_or("no samples after the new plan")?;

    let frozen = run(
        &app,
        &ArchConfig {
            throughput_threshold: 0.0,
            ..cfg(16, 15)
        },
        &data,
    )?;
    let switch = frozen
        .cycle_when_fetched(interval as u64 + 1)
        .ok_or("stream never switched")?;
    let stuck = frozen
        .throughput_between(switch + 4 * 1024, frozen.total_cycles)
        .ok_or("no samples after the switch")?;

    let ok = recovered >= 0.8 * single_tp
        && frozen.reschedule_events.is_empty()
        && stuck <= 1.25 * collapsed;
    check(
        ok,
        format!(
            "epochs {}, recovered {:.3} vs single-phase {:.3} ({:.0}%); threshold 0: epochs {}, {:.3} t/c vs collapsed {:.3}",
            adaptive.reschedule_events.len(),
            recovered,
            single_tp,
            100.0 * recovered / single_tp,
            frozen.reschedule_events.len(),
            stuck,
            collapsed
        ),
    )
}

fn hll_accuracy() -> Outcome {
    let bound = 3.0 * 1.04 / 128.0;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keys = HashSet::new();
        while keys.len() < 100_000 {
            keys.insert(rng.random::<u64>());
        }
        let data: Vec<_> = keys.into_iter().map(|k| TupleRecord::new(k, 0)).collect();
        let app = HyperLogLog::new(14, seed as u32, 16).unwrap();
        let est = hll::estimate(&app.reference(&data));
        worst = worst.max((est - 100_000.0).abs() / 100_000.0);
    }
    check(
        worst <= bound,
        format!(
            "worst relative error {:.4} over 20 seeds (bound {:.4})",
            worst, bound
        ),
    )
}

fn count_min_one_sided() -> Outcome {
    let mut runs = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<_> = (0..40_000u64)
            .map(|i| {
                let key = if i % 2 == 0 {
                    0xABCD
                } else {
                    rng.random_range(0..200_000)
                };
                TupleRecord::new(key, i)
            })
            .collect();
        let app = HeavyHitters::new(4, 1024, 0.1, seed as u32, 16).unwrap();
        let out = run_simulation(&cfg(16, 15), &data, &app).map_err(|e| e.to_string())?;
        let mut truth: HashMap<u64, u64> = HashMap::new();
        for t in &data {
            *truth.entry(t.key).or_default() += 1;
        }
        if let Some((k, c)) = truth
            .iter()
            .find(|(k, c)| out.result.estimates.get(k) < Some(c))
        {
            return Err(format!(
                "seed {seed}: key {k} estimated below its count {c}"
            ));
        }
        if !out.result.reported.contains(&0xABCD) {
            return Err(format!("seed {seed}: the half-stream key was not reported"));
        }
        runs += 1;
    }
    Ok(format!(
        "{runs} simulated runs: no undercount, hot key always reported"
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("single hot key collapses throughput to 1/M", skew_collapse),
        (
            "X=M-1 is oblivious to skew after the first plan",
            skew_obliviousness,
        ),
        (
            "throughput is monotone in X with >= 8x at X=15",
            monotone_robustness,
        ),
        (
            "doubling primaries does not fix skew",
            more_primaries_do_not_help,
        ),
        ("helper-count selection endpoints", helper_count_endpoints),
        ("balanced pipeline PE counts", balanced_pipeline),
        ("buffer capacity model", capacity_model),
        ("mapper round-robin golden trace", mapper_golden_trace),
        ("simulated results equal the reference", oracle_equivalence),
        ("decode table exhaustive check", decoder_exhaustive),
        ("rescheduling recovers from evolving skew", evolving_skew),
        ("hyperloglog accuracy bound", hll_accuracy),
        ("count-min never undercounts", count_min_one_sided),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {:>2} {tag}: {name}: {detail} [{secs:.1}s]",
            i + 1
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
