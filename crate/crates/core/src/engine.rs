//! Cycle-stepped execution of the routing pipeline:
//! memory fetch -> preprocessing PEs -> mapper + router -> PE channels ->
//! primary/secondary PEs -> merger.
//!
//! Every cycle runs in two phases. Data-plane stages read the state left by
//! the previous cycle and stage their outputs (see [`Channel`]); a commit
//! then publishes them. Control-plane effects (plan installation, mapper
//! reset, profiling windows) are applied at the end of the cycle and become
//! visible in the next one. Stage evaluation order therefore never changes
//! the outcome.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::apps::Application;
use crate::channel::Channel;
use crate::config::{ArchConfig, ConfigError};
use crate::mapper::{MapperError, MappingState};
use crate::profiler::{
    generate_plan, Health, HistogramLanes, SchedulingPlan, ThroughputMonitor, WorkloadHistogram,
};
use crate::routing::{RouteOutcome, Router, RoutingError};
use crate::tuple::{PeMessage, RoutedTuple, TupleRecord};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Mapper(#[from] MapperError),
    #[error("application was built for {app} primary PEs but the config has {cfg}")]
    PrimaryMismatch { app: usize, cfg: usize },
    #[error("per-PE buffer needs {needed} units but the capacity model allows {available}")]
    BufferTooLarge { needed: usize, available: u64 },
    #[error("prepare produced destination {dst}, outside the {m} primary PEs")]
    BadDestination { dst: usize, m: usize },
    #[error("invariant violated at cycle {cycle}: {what}")]
    Invariant { cycle: u64, what: String },
    #[error("no progress for {cycles} cycles (at cycle {at})")]
    Deadlock { cycles: u64, at: u64 },
}

/// Test and diagnostics knobs that are not part of the architecture.
#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Record a per-cycle trace.
    pub trace: bool,
    /// Cycles at which a rescheduling epoch is started regardless of the monitor.
    pub forced_epochs: BTreeSet<u64>,
    /// Abort after this many consecutive cycles without data movement.
    pub stall_limit: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            trace: false,
            forced_epochs: BTreeSet::new(),
            stall_limit: 1_000_000,
        }
    }
}

/// Read position in an in-memory dataset.
#[derive(Debug, Clone)]
pub struct DatasetCursor<'a> {
    data: &'a [TupleRecord],
    pos: usize,
}

impl<'a> DatasetCursor<'a> {
    pub fn new(data: &'a [TupleRecord]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn is_exhausted(&self) -> bool {
        self.pos == self.data.len()
    }

    /// Up to `n` upcoming tuples, without consuming them.
    pub fn peek(&self, n: usize) -> &'a [TupleRecord] {
        &self.data[self.pos..(self.pos + n).min(self.data.len())]
    }

    pub fn advance(&mut self, n: usize) {
        self.pos = (self.pos + n).min(self.data.len());
    }
}

/// One memory read: `min(remaining, w_mem / w_tuple)` tuples in stream order.
pub fn fetch_batch<'a>(cursor: &mut DatasetCursor<'a>, cfg: &ArchConfig) -> &'a [TupleRecord] {
    let batch = cursor.peek(cfg.tuples_per_fetch());
    cursor.advance(batch.len());
    batch
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescheduleEvent {
    /// Cycle whose monitor verdict (or forced trigger) started the epoch.
    pub cycle: u64,
    /// The plan that was being retired.
    pub retired_plan: SchedulingPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRecord {
    /// First cycle in which every pair of the plan is active.
    pub installed_cycle: u64,
    pub plan: SchedulingPlan,
    pub histogram: WorkloadHistogram,
    /// Tuples processed by all PEs before `installed_cycle`.
    pub processed_before: u64,
}

/// Cumulative counters taken every `monitor_window` cycles (and at the end).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSample {
    pub cycle: u64,
    pub fetched: u64,
    pub routed: u64,
    pub processed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub total_cycles: u64,
    pub input_tuples: u64,
    /// Per PE, primaries first then secondaries.
    pub tuples_processed: Vec<u64>,
    /// Tuples routed per primary range (before mapping).
    pub range_workload: Vec<u64>,
    pub throughput: f64,
    pub stall_cycles: u64,
    pub reschedule_events: Vec<RescheduleEvent>,
    pub plans: Vec<PlanRecord>,
    pub samples: Vec<WindowSample>,
    /// Cycle in which the last tuple left memory.
    pub fetch_done_cycle: u64,
    pub peak_channel_occupancy: usize,
}

impl SimMetrics {
    /// Throughput from the moment the first plan is fully installed to the end.
    pub fn post_plan_throughput(&self) -> Option<f64> {
        let first = self.plans.first()?;
        let cycles = self.total_cycles.checked_sub(first.installed_cycle)?;
        if cycles == 0 {
            return None;
        }
        Some((self.input_tuples - first.processed_before) as f64 / cycles as f64)
    }

    /// Processing throughput between the first sample at or after `from` and
    /// the last sample at or before `to`.
    pub fn throughput_between(&self, from: u64, to: u64) -> Option<f64> {
        let a = self.samples.iter().find(|s| s.cycle >= from)?;
        let b = self.samples.iter().rev().find(|s| s.cycle <= to)?;
        if b.cycle <= a.cycle {
            return None;
        }
        Some((b.processed - a.processed) as f64 / (b.cycle - a.cycle) as f64)
    }

    /// First sample cycle at which at least `tuples` had been fetched.
    pub fn cycle_when_fetched(&self, tuples: u64) -> Option<u64> {
        self.samples
            .iter()
            .find(|s| s.fetched >= tuples)
            .map(|s| s.cycle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    /// No secondary PEs configured.
    Off,
    Profiling,
    Planning,
    Installing,
    Monitoring,
    Draining,
    Cooldown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceCycle {
    pub cycle: u64,
    pub phase: PhaseKind,
    pub mapper_identity: bool,
    pub max_routed_dst: Option<usize>,
    pub stalled: bool,
    /// Primaries that were free with a tuple waiting at the start of the cycle.
    pub pripe_ready: u32,
    /// Primaries that consumed a tuple this cycle.
    pub pripe_consumed: u32,
}

#[derive(Debug, Clone)]
pub struct SimOutput<O> {
    pub metrics: SimMetrics,
    pub result: O,
    pub trace: Vec<TraceCycle>,
}

/// What one call to [`Simulation::advance_cycle`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CycleEvents {
    pub fetched: usize,
    pub routed: usize,
    pub stalled: bool,
    pub consumed: usize,
    pub finished: bool,
}

#[derive(Debug, Clone)]
enum Phase {
    Off,
    Profiling {
        ends_at: u64,
    },
    Planning {
        ready_at: u64,
        plan: SchedulingPlan,
        hist: WorkloadHistogram,
    },
    Installing {
        plan: SchedulingPlan,
        hist: WorkloadHistogram,
    },
    Monitoring {
        plan: SchedulingPlan,
    },
    Draining {
        retired: SchedulingPlan,
    },
    Cooldown {
        until: u64,
    },
}

impl Phase {
    fn kind(&self) -> PhaseKind {
        match self {
            Phase::Off => PhaseKind::Off,
            Phase::Profiling { .. } => PhaseKind::Profiling,
            Phase::Planning { .. } => PhaseKind::Planning,
            Phase::Installing { .. } => PhaseKind::Installing,
            Phase::Monitoring { .. } => PhaseKind::Monitoring,
            Phase::Draining { .. } => PhaseKind::Draining,
            Phase::Cooldown { .. } => PhaseKind::Cooldown,
        }
    }
}

/// Full simulation state for one `(config, dataset, application)` run.
pub struct Simulation<'a, A: Application> {
    cfg: ArchConfig,
    app: &'a A,
    opts: SimOptions,
    cycle: u64,
    cursor: DatasetCursor<'a>,
    fetched: u64,

    prepe_in: Vec<Channel<TupleRecord>>,
    prepe_out: Vec<Channel<RoutedTuple>>,
    prepe_busy_until: Vec<u64>,

    router: Router,
    mapped: Vec<RoutedTuple>,
    mapper: MappingState,
    eos_sent: Vec<bool>,

    pe_channels: Vec<Channel<PeMessage>>,
    pe_busy_until: Vec<u64>,
    pe_done: Vec<bool>,
    states: Vec<A::State>,
    /// Merger's intermediate results, one per primary range.
    merged: Vec<A::State>,
    helper_row: Vec<Option<usize>>,

    phase: Phase,
    lanes: HistogramLanes,
    monitor: ThroughputMonitor,

    processed: Vec<u64>,
    processed_total: u64,
    routed_total: u64,
    range_workload: Vec<u64>,
    reschedule_events: Vec<RescheduleEvent>,
    plans: Vec<PlanRecord>,
    samples: Vec<WindowSample>,
    fetch_done_cycle: u64,
    peak_occupancy: usize,
    idle_cycles: u64,
    trace: Vec<TraceCycle>,
    finished: bool,
}

impl<'a, A: Application> Simulation<'a, A> {
    pub fn new(
        cfg: &ArchConfig,
        data: &'a [TupleRecord],
        app: &'a A,
        opts: SimOptions,
    ) -> Result<Self, SimError> {
        let cfg = cfg.clone().validate()?;
        let (n, m, x) = (cfg.n_prepe, cfg.m_pripe, cfg.x_secpe);
        if app.primaries() != m {
            return Err(SimError::PrimaryMismatch {
                app: app.primaries(),
                cfg: m,
            });
        }
        let available = cfg.bram_capacity_c / (m + x) as u64;
        if app.buffer_units() as u64 > available {
            return Err(SimError::BufferTooLarge {
                needed: app.buffer_units(),
                available,
            });
        }
        let total = m + x;
        let phase = if x == 0 {
            Phase::Off
        } else {
            Phase::Profiling {
                ends_at: cfg.profiling_cycles,
            }
        };
        Ok(Self {
            app,
            cycle: 0,
            cursor: DatasetCursor::new(data),
            fetched: 0,
            prepe_in: (0..n).map(|_| Channel::new(cfg.channel_depth)).collect(),
            prepe_out: (0..n).map(|_| Channel::new(cfg.channel_depth)).collect(),
            prepe_busy_until: vec![0; n],
            router: Router::new(n, total)?,
            mapped: Vec::with_capacity(n),
            mapper: MappingState::new(m, x)?,
            eos_sent: vec![false; total],
            pe_channels: (0..total)
                .map(|_| Channel::new(cfg.channel_depth))
                .collect(),
            pe_busy_until: vec![0; total],
            pe_done: vec![false; total],
            states: (0..total).map(|_| app.new_state()).collect(),
            merged: (0..m).map(|_| app.new_state()).collect(),
            helper_row: vec![None; x],
            phase,
            lanes: HistogramLanes::new(n, m),
            monitor: ThroughputMonitor::new(cfg.monitor_window, cfg.throughput_threshold),
            processed: vec![0; total],
            processed_total: 0,
            routed_total: 0,
            range_workload: vec![0; m],
            reschedule_events: Vec::new(),
            plans: Vec::new(),
            samples: Vec::new(),
            fetch_done_cycle: 0,
            peak_occupancy: 0,
            idle_cycles: 0,
            trace: Vec::new(),
            finished: false,
            opts,
            cfg,
        })
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn phase(&self) -> PhaseKind {
        self.phase.kind()
    }

    pub fn mapper(&self) -> &MappingState {
        &self.mapper
    }

    pub fn channel_len(&self, pe: usize) -> usize {
        self.pe_channels[pe].len()
    }

    /// Executes one cycle of every stage.
    pub fn advance_cycle(&mut self) -> Result<CycleEvents, SimError> {
        debug_assert!(!self.finished);
        let c = self.cycle;
        let m = self.cfg.m_pripe;
        let mut ev = CycleEvents::default();
        let phase_at_start = self.phase.kind();
        let mapper_identity = self.mapper.is_identity();

        // Snapshot: nothing can reach the router any more.
        let upstream_drained = self.cursor.is_exhausted()
            && self.prepe_in.iter().all(Channel::is_empty)
            && self.prepe_out.iter().all(Channel::is_empty);

        // Primary and secondary PEs.
        let mut pripe_ready = 0;
        let mut pripe_consumed = 0;
        let mut eos_consumed = 0;
        for pe in 0..self.pe_channels.len() {
            if self.pe_done[pe] || c < self.pe_busy_until[pe] {
                continue;
            }
            let ready = self.pe_channels[pe].visible_len() > 0;
            if pe < m && ready {
                pripe_ready += 1;
            }
            match self.pe_channels[pe].pop() {
                Some(PeMessage::Tuple(item)) => {
                    self.app.process(&mut self.states[pe], &item);
                    self.processed[pe] += 1;
                    self.processed_total += 1;
                    self.pe_busy_until[pe] = c + self.cfg.ii_pripe as u64;
                    ev.consumed += 1;
                    if pe < m {
                        pripe_consumed += 1;
                    }
                }
                Some(PeMessage::EndOfStream) => {
                    self.pe_done[pe] = true;
                    eos_consumed += 1;
                    if pe < m {
                        pripe_consumed += 1;
                    }
                }
                None => {}
            }
        }

        // Mapper + router.
        let mut max_routed_dst = None;
        let mut eos_pushed = 0;
        if self.router.pending.is_empty() {
            for lane in &mut self.prepe_out {
                if let Some(t) = lane.pop() {
                    self.router.pending.push(t);
                }
            }
        }
        if !self.router.pending.is_empty() {
            self.mapper
                .redirect_batch(&self.router.pending, &mut self.mapped);
            match self.router.route_cycle(&self.mapped, &mut self.pe_channels) {
                RouteOutcome::Accepted => {
                    self.mapper.advance_cursors(&self.router.pending);
                    for t in &self.router.pending {
                        self.range_workload[t.dst] += 1;
                    }
                    if matches!(self.phase, Phase::Profiling { .. }) {
                        self.lanes
                            .record_batch(self.router.pending.iter().map(|t| t.dst));
                    }
                    max_routed_dst = self.mapped.iter().map(|t| t.dst).max();
                    ev.routed = self.router.pending.len();
                    self.routed_total += ev.routed as u64;
                    self.router.pending.clear();
                }
                RouteOutcome::Stalled => ev.stalled = true,
            }
        } else if upstream_drained {
            for (pe, sent) in self.eos_sent.iter_mut().enumerate() {
                if !*sent
                    && self.pe_channels[pe]
                        .try_push(PeMessage::EndOfStream)
                        .is_ok()
                {
                    *sent = true;
                    eos_pushed += 1;
                }
            }
        }

        // Preprocessing PEs.
        let mut prepared = 0;
        for lane in 0..self.prepe_in.len() {
            if c < self.prepe_busy_until[lane] || self.prepe_out[lane].free_slots() == 0 {
                continue;
            }
            if let Some(t) = self.prepe_in[lane].pop() {
                let r = self.app.prepare(t);
                if r.dst >= m {
                    return Err(SimError::BadDestination { dst: r.dst, m });
                }
                let pushed = self.prepe_out[lane].try_push(r);
                debug_assert!(pushed.is_ok());
                self.prepe_busy_until[lane] = c + self.cfg.ii_prepe as u64;
                prepared += 1;
            }
        }

        // Memory fetch, spread round-robin over the preprocessing lanes.
        let lanes = self.prepe_in.len() as u64;
        let batch = self.cursor.peek(self.cfg.tuples_per_fetch());
        for &t in batch {
            let lane = (self.fetched % lanes) as usize;
            if self.prepe_in[lane].try_push(t).is_err() {
                break;
            }
            self.fetched += 1;
            ev.fetched += 1;
        }
        self.cursor.advance(ev.fetched);
        if ev.fetched > 0 && self.cursor.is_exhausted() {
            self.fetch_done_cycle = c;
        }

        // Commit.
        let depth = self.cfg.channel_depth;
        for len in self
            .prepe_in
            .iter_mut()
            .map(Channel::commit)
            .chain(self.prepe_out.iter_mut().map(Channel::commit))
            .chain(self.pe_channels.iter_mut().map(Channel::commit))
        {
            if len > depth {
                return Err(SimError::Invariant {
                    cycle: c,
                    what: format!("channel holds {len} items, capacity {depth}"),
                });
            }
            self.peak_occupancy = self.peak_occupancy.max(len);
        }

        self.control_plane(c, ev.routed)?;

        if self.opts.trace {
            self.trace.push(TraceCycle {
                cycle: c,
                phase: phase_at_start,
                mapper_identity,
                max_routed_dst,
                stalled: ev.stalled,
                pripe_ready,
                pripe_consumed,
            });
        }

        let moved = ev.fetched + prepared + ev.routed + ev.consumed + eos_consumed + eos_pushed;
        if moved == 0 {
            self.idle_cycles += 1;
            if self.idle_cycles >= self.opts.stall_limit {
                return Err(SimError::Deadlock {
                    cycles: self.idle_cycles,
                    at: c,
                });
            }
        } else {
            self.idle_cycles = 0;
        }

        self.cycle += 1;
        if self.cycle.is_multiple_of(self.cfg.monitor_window) {
            self.push_sample();
        }
        if self.pe_done.iter().all(|&d| d) {
            self.finished = true;
            ev.finished = true;
        }
        Ok(ev)
    }

    fn push_sample(&mut self) {
        self.samples.push(WindowSample {
            cycle: self.cycle,
            fetched: self.fetched,
            routed: self.routed_total,
            processed: self.processed_total,
        });
    }

    fn control_plane(&mut self, c: u64, routed: usize) -> Result<(), SimError> {
        let x = self.cfg.x_secpe;
        if x == 0 {
            return Ok(());
        }
        let next = c + 1;
        if self.opts.forced_epochs.contains(&c)
            && !matches!(self.phase, Phase::Draining { .. } | Phase::Cooldown { .. })
        {
            self.start_epoch(c);
        }
        let phase = std::mem::replace(&mut self.phase, Phase::Off);
        self.phase = match phase {
            Phase::Off => Phase::Off,
            Phase::Profiling { ends_at } if next >= ends_at => {
                let hist = self.lanes.merge(self.cfg.profiling_cycles);
                self.lanes.clear();
                let plan = generate_plan(&hist, x);
                // Plan generation is serial: one secondary per cycle.
                Phase::Planning {
                    ready_at: next + x as u64,
                    plan,
                    hist,
                }
            }
            Phase::Planning {
                ready_at,
                plan,
                hist,
            } if next >= ready_at => {
                self.mapper.enqueue_plan(&plan);
                for (h, &row) in plan.assignments().iter().enumerate() {
                    self.helper_row[h] = Some(row);
                }
                Phase::Installing { plan, hist }
            }
            Phase::Installing { plan, hist } => {
                self.mapper.install_next_pair()?;
                if self.mapper.pending_pairs() == 0 {
                    self.plans.push(PlanRecord {
                        installed_cycle: next,
                        plan: plan.clone(),
                        histogram: hist,
                        processed_before: self.processed_total,
                    });
                    self.monitor.restart();
                    Phase::Monitoring { plan }
                } else {
                    Phase::Installing { plan, hist }
                }
            }
            Phase::Monitoring { plan } => {
                let verdict = if self.cursor.is_exhausted() {
                    None
                } else {
                    self.monitor.tick(routed as u64)
                };
                if verdict == Some(Health::Degraded) && self.cfg.rescheduling_enabled() {
                    self.phase = Phase::Monitoring { plan };
                    self.start_epoch(c);
                    std::mem::replace(&mut self.phase, Phase::Off)
                } else {
                    Phase::Monitoring { plan }
                }
            }
            Phase::Draining { retired } => {
                if self.helpers_drained(next) {
                    self.fold_helpers();
                    Phase::Cooldown {
                        until: next + self.cfg.reschedule_overhead,
                    }
                } else {
                    Phase::Draining { retired }
                }
            }
            Phase::Cooldown { until } if next >= until => Phase::Profiling {
                ends_at: next + self.cfg.profiling_cycles,
            },
            other => other,
        };
        Ok(())
    }

    /// Stops routing to helpers; they drain, get merged, and are replanned.
    fn start_epoch(&mut self, c: u64) {
        let retired = match &self.phase {
            Phase::Monitoring { plan }
            | Phase::Installing { plan, .. }
            | Phase::Planning { plan, .. } => plan.clone(),
            _ => SchedulingPlan::default(),
        };
        self.mapper.reset();
        self.lanes.clear();
        self.reschedule_events.push(RescheduleEvent {
            cycle: c,
            retired_plan: retired.clone(),
        });
        self.phase = Phase::Draining { retired };
    }

    fn helpers_drained(&self, next: u64) -> bool {
        let m = self.cfg.m_pripe;
        (m..self.pe_channels.len())
            .all(|pe| self.pe_channels[pe].is_empty() && self.pe_busy_until[pe] <= next)
    }

    fn fold_helpers(&mut self) {
        let m = self.cfg.m_pripe;
        for h in 0..self.helper_row.len() {
            if let Some(row) = self.helper_row[h].take() {
                let state = std::mem::replace(&mut self.states[m + h], self.app.new_state());
                self.app.combine(&mut self.merged[row], state);
            }
        }
    }

    /// Runs to completion and performs the final merge.
    pub fn run(mut self) -> Result<SimOutput<A::Output>, SimError> {
        while !self.finished {
            self.advance_cycle()?;
        }
        self.finish()
    }

    fn finish(mut self) -> Result<SimOutput<A::Output>, SimError> {
        let m = self.cfg.m_pripe;
        let n = self.cursor.data.len() as u64;
        if !self.cycle.is_multiple_of(self.cfg.monitor_window) || self.samples.is_empty() {
            self.push_sample();
        }
        let sum: u64 = self.processed.iter().sum();
        if sum != n {
            return Err(SimError::Invariant {
                cycle: self.cycle,
                what: format!("processed {sum} tuples but the input has {n}"),
            });
        }

        let mut states = std::mem::take(&mut self.states);
        let helpers = states.split_off(m);
        let mut rows = std::mem::take(&mut self.merged);
        for (row, primary) in rows.iter_mut().zip(states) {
            self.app.combine(row, primary);
        }
        for (h, state) in helpers.into_iter().enumerate() {
            if let Some(row) = self.helper_row[h] {
                self.app.combine(&mut rows[row], state);
            }
        }
        let result = self.app.finalize(rows);

        let total_cycles = self.cycle;
        let metrics = SimMetrics {
            total_cycles,
            input_tuples: n,
            tuples_processed: self.processed,
            range_workload: self.range_workload,
            throughput: if total_cycles == 0 {
                0.0
            } else {
                n as f64 / total_cycles as f64
            },
            stall_cycles: self.router.stall_cycles(),
            reschedule_events: self.reschedule_events,
            plans: self.plans,
            samples: self.samples,
            fetch_done_cycle: self.fetch_done_cycle,
            peak_channel_occupancy: self.peak_occupancy,
        };
        Ok(SimOutput {
            metrics,
            result,
            trace: self.trace,
        })
    }
}

/// Simulates `app` over `data` until every tuple has been merged.
pub fn run_simulation<A: Application>(
    cfg: &ArchConfig,
    data: &[TupleRecord],
    app: &A,
) -> Result<SimOutput<A::Output>, SimError> {
    run_simulation_with(cfg, data, app, &SimOptions::default())
}

pub fn run_simulation_with<A: Application>(
    cfg: &ArchConfig,
    data: &[TupleRecord],
    app: &A,
    opts: &SimOptions,
) -> Result<SimOutput<A::Output>, SimError> {
    Simulation::new(cfg, data, app, opts.clone())?.run()
}
