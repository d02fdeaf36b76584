//! Deterministic tick loop driving assignment, balancing and liveness, plus
//! round-robin and uniform-random baseline strategies for comparison runs.
//!
//! Per tick, in fixed order: scenario events (failures, recoveries,
//! completions), implicit heartbeats from every non-failed server, dead
//! detection and migration, job arrivals, and — on every heartbeat-period
//! boundary — a rebalance cycle. Identical scenario and seed always produce
//! an identical trace.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assignment::{assign_job, compute_capability_orders};
use crate::balancer::rebalance_cycle;
use crate::liveness::{detect_dead, migrate_dead_jobs, record_heartbeat};
use crate::metrics::{MetricsReport, Recorder, TickStatus};
use crate::model::{
    AuditViolation, JobId, JobSpec, ModelError, PendingJob, PendingReason, ServerId,
    SystemConfig, SystemState, Tick,
};
use crate::scenario::{ErrorCode, ScenarioError};
use crate::trace::{TraceEvent, TraceKind};

/// A timed scenario event. Events must be ordered by tick; ties run in
/// listed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimEvent {
    JobArrival(Tick, JobSpec),
    ServerFail(Tick, ServerId),
    ServerRecover(Tick, ServerId),
    JobComplete(Tick, JobId),
}

impl SimEvent {
    pub fn tick(&self) -> Tick {
        match self {
            SimEvent::JobArrival(t, _)
            | SimEvent::ServerFail(t, _)
            | SimEvent::ServerRecover(t, _)
            | SimEvent::JobComplete(t, _) => *t,
        }
    }
}

/// A complete simulation input: topology, timed events, the run horizon
/// (ticks 0 through `last_tick` inclusive) and the seed for the random
/// baseline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub config: SystemConfig,
    pub events: Vec<SimEvent>,
    pub last_tick: Tick,
    pub seed: u64,
}

impl Scenario {
    /// Structural validation: ordered events, known ids, unique arrivals,
    /// completions strictly after arrivals, events within the horizon.
    pub fn validate(&self) -> Vec<ScenarioError> {
        let mut errors = Vec::new();
        if let Err(e) = self.config.validate() {
            errors.push(ScenarioError::unlined(ErrorCode::Value, e.to_string()));
        }
        let server_ids: BTreeSet<&ServerId> = self
            .config
            .clusters
            .iter()
            .flat_map(|c| c.servers.iter().map(|s| &s.server_id))
            .collect();
        let mut arrivals: std::collections::BTreeMap<&JobId, Tick> = Default::default();
        let mut prev_tick = 0;
        for event in &self.events {
            let tick = event.tick();
            if tick < prev_tick {
                errors.push(ScenarioError::unlined(
                    ErrorCode::EventOrder,
                    format!("event at tick {tick} listed after tick {prev_tick}"),
                ));
            }
            prev_tick = prev_tick.max(tick);
            if tick > self.last_tick {
                errors.push(ScenarioError::unlined(
                    ErrorCode::EventOrder,
                    format!("event at tick {tick} is past the horizon {}", self.last_tick),
                ));
            }
            match event {
                SimEvent::JobArrival(t, job) => {
                    if job.memory_req <= 0 || job.speed_req <= 0 {
                        errors.push(ScenarioError::unlined(
                            ErrorCode::Value,
                            format!("job {} has non-positive requirements", job.job_id),
                        ));
                    }
                    if arrivals.insert(&job.job_id, *t).is_some() {
                        errors.push(ScenarioError::unlined(
                            ErrorCode::DuplicateId,
                            format!("job {} arrives more than once", job.job_id),
                        ));
                    }
                }
                SimEvent::ServerFail(_, id) | SimEvent::ServerRecover(_, id) => {
                    if !server_ids.contains(id) {
                        errors.push(ScenarioError::unlined(
                            ErrorCode::UnknownId,
                            format!("unknown server {id}"),
                        ));
                    }
                }
                SimEvent::JobComplete(t, id) => match arrivals.get(id) {
                    None => errors.push(ScenarioError::unlined(
                        ErrorCode::UnknownId,
                        format!("completion of job {id} with no earlier arrival"),
                    )),
                    Some(arrival) if *arrival >= *t => errors.push(ScenarioError::unlined(
                        ErrorCode::EventOrder,
                        format!("job {id} completes at tick {t} but arrives at {arrival}"),
                    )),
                    Some(_) => {}
                },
            }
        }
        errors
    }
}

/// Placement strategy for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// The two-tier strategy: range routing, capability placement, load
    /// balancing and dead-machine migration.
    TwoTier,
    /// Baseline: rotate over the flat server list, ignoring capability and
    /// load. The seed picks the starting offset.
    RoundRobin,
    /// Baseline: uniform random choice over living servers, seeded.
    Random,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::TwoTier => "two-tier",
            Strategy::RoundRobin => "round-robin",
            Strategy::Random => "random",
        }
    }
}

/// Run controls: strategy, optional seed override, and the audit switch
/// (full invariant check after every tick).
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub strategy: Strategy,
    pub seed: Option<u64>,
    pub audit: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            strategy: Strategy::TwoTier,
            seed: None,
            audit: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario validation failed:\n{}", format_errors(.0))]
    Validation(Vec<ScenarioError>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("audit violation at tick {tick}: {violation}")]
    Audit {
        tick: Tick,
        violation: AuditViolation,
    },
}

fn format_errors(errors: &[ScenarioError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Everything a finished run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub state: SystemState,
    pub metrics: MetricsReport,
    pub trace: Vec<TraceEvent>,
}

enum StrategyRuntime {
    TwoTier,
    RoundRobin { pointer: usize },
    Random { rng: ChaCha8Rng },
}

/// A stepping simulation. `step` executes one tick; the state is inspectable
/// between ticks.
pub struct Simulation {
    state: SystemState,
    events: Vec<SimEvent>,
    next_event: usize,
    last_tick: Tick,
    next_tick: Tick,
    heartbeat_period: Tick,
    failed: BTreeSet<ServerId>,
    strategy: StrategyRuntime,
    audit: bool,
    recorder: Recorder,
}

impl Simulation {
    pub fn new(scenario: Scenario, options: RunOptions) -> Result<Self, SimError> {
        let errors = scenario.validate();
        if !errors.is_empty() {
            return Err(SimError::Validation(errors));
        }
        let seed = options.seed.unwrap_or(scenario.seed);
        let state = SystemState::new(scenario.config.clone())
            .map_err(|e| SimError::Validation(vec![ScenarioError::unlined(
                ErrorCode::Value,
                e.to_string(),
            )]))?;
        let server_count: usize = state.clusters.iter().map(|c| c.reviews.len()).sum();
        let strategy = match options.strategy {
            Strategy::TwoTier => StrategyRuntime::TwoTier,
            Strategy::RoundRobin => StrategyRuntime::RoundRobin {
                pointer: if server_count == 0 {
                    0
                } else {
                    (seed % server_count as u64) as usize
                },
            },
            Strategy::Random => StrategyRuntime::Random {
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
        };
        Ok(Simulation {
            state,
            heartbeat_period: scenario.config.heartbeat_period,
            events: scenario.events,
            next_event: 0,
            last_tick: scenario.last_tick,
            next_tick: 0,
            failed: BTreeSet::new(),
            strategy,
            audit: options.audit,
            recorder: Recorder::new(),
        })
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn recorder(&self) -> &Recorder {
        &self.recorder
    }

    pub fn finished(&self) -> bool {
        self.next_tick > self.last_tick
    }

    /// Executes the next tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        let tick = self.next_tick;

        // Scenario events first: failures, recoveries and completions take
        // effect before this tick's heartbeats; arrivals wait until after
        // dead detection.
        let mut arrivals: Vec<JobSpec> = Vec::new();
        while self.next_event < self.events.len() && self.events[self.next_event].tick() == tick {
            let event = self.events[self.next_event].clone();
            self.next_event += 1;
            match event {
                SimEvent::JobArrival(_, job) => arrivals.push(job),
                SimEvent::ServerFail(_, id) => {
                    self.failed.insert(id);
                }
                SimEvent::ServerRecover(_, id) => {
                    self.failed.remove(&id);
                }
                SimEvent::JobComplete(_, id) => {
                    self.state.complete_job(&id)?;
                    self.recorder
                        .emit(TraceEvent::new(tick, TraceKind::JobCompleted).field("job", &id));
                }
            }
        }

        // Implicit heartbeat from every server that is not failed.
        let ids: Vec<ServerId> = self
            .state
            .clusters
            .iter()
            .flat_map(|c| c.liveness.iter().map(|l| l.server_id.clone()))
            .collect();
        for id in ids {
            if !self.failed.contains(&id) {
                record_heartbeat(&mut self.state, &id, tick, &mut self.recorder)?;
            }
        }

        // Dead detection, then migration of each dead server's jobs.
        let dead = detect_dead(&mut self.state, tick, &mut self.recorder);
        for id in dead {
            match self.strategy {
                StrategyRuntime::TwoTier => {
                    migrate_dead_jobs(&mut self.state, &id, tick, &mut self.recorder)?;
                }
                _ => self.baseline_migrate(&id, tick)?,
            }
        }

        // Arrivals.
        if !arrivals.is_empty() {
            match self.strategy {
                StrategyRuntime::TwoTier => {
                    let orders = compute_capability_orders(&self.state, &mut self.recorder);
                    for job in arrivals {
                        assign_job(&mut self.state, job, &orders, tick, &mut self.recorder)?;
                    }
                }
                _ => {
                    for job in arrivals {
                        self.state.add_job(job.clone())?;
                        self.baseline_place(job, tick, None)?;
                    }
                }
            }
        }

        // Rebalance on every heartbeat-period boundary.
        if tick > 0 && tick % self.heartbeat_period == 0 {
            match self.strategy {
                StrategyRuntime::TwoTier => {
                    rebalance_cycle(&mut self.state, tick, &mut self.recorder)?;
                }
                _ => self.baseline_retry_pending(tick)?,
            }
        }

        self.state.refresh_load_summaries(tick);
        let (even, uneven, dead) = self.state.status_counts();
        self.recorder.metrics.status_histogram.push(TickStatus {
            tick,
            even,
            uneven,
            dead,
        });
        if self.audit {
            self.state
                .audit()
                .map_err(|violation| SimError::Audit { tick, violation })?;
        }
        self.next_tick += 1;
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while !self.finished() {
            self.step()?;
        }
        Ok(())
    }

    pub fn into_output(self) -> RunOutput {
        let Simulation {
            state,
            recorder: Recorder { trace, mut metrics },
            ..
        } = self;
        metrics.pending_end = state.pending.len() as u64;
        RunOutput {
            state,
            metrics,
            trace,
        }
    }

    /// Flat server list used by the baselines: clusters in range order,
    /// servers in declaration order, ignoring cluster boundaries.
    fn flat_servers(&self) -> Vec<(usize, usize)> {
        self.state
            .clusters
            .iter()
            .enumerate()
            .flat_map(|(ci, c)| (0..c.reviews.len()).map(move |si| (ci, si)))
            .collect()
    }

    /// Places a job with no capability or load checks, the way the static
    /// baselines do. `migrated_from` distinguishes migration from arrival
    /// for the trace.
    fn baseline_place(
        &mut self,
        job: JobSpec,
        tick: Tick,
        migrated_from: Option<&ServerId>,
    ) -> Result<(), SimError> {
        let flat = self.flat_servers();
        let target = match &mut self.strategy {
            StrategyRuntime::RoundRobin { pointer } => {
                let mut found = None;
                for offset in 0..flat.len() {
                    let idx = (*pointer + offset) % flat.len();
                    let (ci, si) = flat[idx];
                    if self.state.clusters[ci].liveness[si].alive {
                        found = Some(idx);
                        break;
                    }
                }
                found.map(|idx| {
                    *pointer = (idx + 1) % flat.len();
                    flat[idx]
                })
            }
            StrategyRuntime::Random { rng } => {
                let alive: Vec<(usize, usize)> = flat
                    .iter()
                    .copied()
                    .filter(|&(ci, si)| self.state.clusters[ci].liveness[si].alive)
                    .collect();
                if alive.is_empty() {
                    None
                } else {
                    Some(alive[rng.random_range(0..alive.len())])
                }
            }
            StrategyRuntime::TwoTier => unreachable!("baseline placement under two-tier"),
        };
        match target {
            Some((ci, si)) => {
                let entry = self.state.entry_mut(ci, si);
                entry.apply_assignment(&job)?;
                let server_id = entry.server_id.clone();
                let memory_left = entry.memory_left;
                let kind = match migrated_from {
                    Some(_) => TraceKind::JobMigrated,
                    None => TraceKind::ServerSelected,
                };
                let mut event = TraceEvent::new(tick, kind).field("job", &job.job_id);
                if let Some(from) = migrated_from {
                    event = event.field("from", from);
                    self.recorder.metrics.moves += 1;
                }
                event = event.field(
                    if migrated_from.is_some() { "to" } else { "server" },
                    &server_id,
                );
                self.recorder.emit(event);
                if memory_left < 0 {
                    self.recorder.emit(
                        TraceEvent::new(tick, TraceKind::OverCommit)
                            .field("job", &job.job_id)
                            .field("server", &server_id)
                            .field("memory_left", memory_left),
                    );
                }
            }
            None => {
                let (kind, reason) = match migrated_from {
                    Some(_) => (TraceKind::JobOrphanedPending, PendingReason::OriginDead),
                    None => (TraceKind::JobPending, PendingReason::NoServer),
                };
                let mut event = TraceEvent::new(tick, kind).field("job", &job.job_id);
                if migrated_from.is_none() {
                    event = event.field("reason", reason);
                }
                self.recorder.emit(event);
                self.state.pending.push(PendingJob {
                    job,
                    reason,
                    since_tick: tick,
                });
            }
        }
        Ok(())
    }

    fn baseline_migrate(&mut self, server_id: &ServerId, tick: Tick) -> Result<(), SimError> {
        let (ci, si) = self
            .state
            .find_server(server_id)
            .ok_or_else(|| ModelError::UnknownServer(server_id.clone()))?;
        let orphaned: Vec<JobSpec> = self.state.clusters[ci].reviews[si]
            .jobs_assigned
            .iter()
            .map(|id| self.state.jobs[id].clone())
            .collect();
        for job in &orphaned {
            self.state.entry_mut(ci, si).remove_assignment(job)?;
        }
        let from = server_id.clone();
        for job in orphaned {
            self.baseline_place(job, tick, Some(&from))?;
        }
        Ok(())
    }

    fn baseline_retry_pending(&mut self, tick: Tick) -> Result<(), SimError> {
        let pending = std::mem::take(&mut self.state.pending);
        for entry in pending {
            self.baseline_place(entry.job, tick, None)?;
        }
        Ok(())
    }
}

/// Runs a scenario under the two-tier strategy.
pub fn run(scenario: Scenario, options: RunOptions) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(scenario, options)?;
    sim.run_to_end()?;
    Ok(sim.into_output())
}

/// Runs a scenario under a baseline placement strategy.
pub fn run_baseline(
    scenario: Scenario,
    strategy: Strategy,
    mut options: RunOptions,
) -> Result<RunOutput, SimError> {
    options.strategy = strategy;
    run(scenario, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golden;
    use crate::model::LoadStatus;
    use crate::render::render_trace;

    fn arrivals_at_zero() -> Vec<SimEvent> {
        golden::jobs()
            .into_iter()
            .map(|j| SimEvent::JobArrival(0, j))
            .collect()
    }

    fn golden_scenario() -> Scenario {
        Scenario {
            config: golden::config(),
            events: arrivals_at_zero(),
            last_tick: 5,
            seed: 0,
        }
    }

    fn lefts(state: &SystemState) -> Vec<i64> {
        state
            .clusters
            .iter()
            .flat_map(|c| c.reviews.iter().map(|r| r.memory_left))
            .collect()
    }

    #[test]
    fn golden_scenario_steps_through_both_tables() {
        let mut sim = Simulation::new(
            golden_scenario(),
            RunOptions {
                audit: true,
                ..Default::default()
            },
        )
        .unwrap();
        sim.step().unwrap();
        // After tick 0: assignments done, no rebalance yet.
        assert_eq!(lefts(sim.state()), [-500, -600, 0, 0, 1500, 300]);
        sim.run_to_end().unwrap();
        assert_eq!(lefts(sim.state()), [0, 100, 0, 0, 300, 300]);
        assert!(sim
            .state()
            .clusters
            .iter()
            .flat_map(|c| c.reviews.iter())
            .all(|r| r.status == LoadStatus::Even));
    }

    #[test]
    fn empty_event_list_preserves_initial_state() {
        let scenario = Scenario {
            config: golden::config(),
            events: Vec::new(),
            last_tick: 12,
            seed: 0,
        };
        let output = run(scenario, RunOptions::default()).unwrap();
        for cluster in &output.state.clusters {
            for entry in &cluster.reviews {
                assert_eq!(entry.memory_left, entry.memory_capacity);
                assert!(entry.jobs_assigned.is_empty());
            }
        }
        assert_eq!(output.metrics.moves, 0);
    }

    #[test]
    fn validation_rejects_out_of_order_events() {
        let scenario = Scenario {
            config: golden::config(),
            events: vec![
                SimEvent::JobArrival(3, JobSpec::new("A", 100, 10)),
                SimEvent::JobArrival(1, JobSpec::new("B", 100, 10)),
            ],
            last_tick: 5,
            seed: 0,
        };
        match Simulation::new(scenario, RunOptions::default()) {
            Err(SimError::Validation(errors)) => {
                assert!(errors.iter().any(|e| e.code == ErrorCode::EventOrder));
            }
            Err(other) => panic!("expected validation failure, got {other}"),
            Ok(_) => panic!("expected validation failure"),
        }
    }

    #[test]
    fn round_robin_spreads_identical_jobs_evenly() {
        let events: Vec<SimEvent> = (0..12)
            .map(|i| SimEvent::JobArrival(0, JobSpec::new(format!("J{i}"), 100, 10)))
            .collect();
        let scenario = Scenario {
            config: golden::config(),
            events,
            last_tick: 0,
            seed: 0,
        };
        let output = run_baseline(scenario, Strategy::RoundRobin, RunOptions::default()).unwrap();
        for cluster in &output.state.clusters {
            for entry in &cluster.reviews {
                assert_eq!(entry.jobs_assigned.len(), 2);
            }
        }
    }

    #[test]
    fn random_baseline_is_deterministic_per_seed() {
        let scenario = golden_scenario();
        let opts = RunOptions {
            strategy: Strategy::Random,
            seed: Some(7),
            audit: true,
        };
        let a = run(scenario.clone(), opts).unwrap();
        let b = run(scenario, opts).unwrap();
        assert_eq!(render_trace(&a.trace), render_trace(&b.trace));
        assert_eq!(lefts(&a.state), lefts(&b.state));
    }

    #[test]
    fn round_robin_overloads_where_two_tier_does_not() {
        // Enumerating all six starting offsets: every rotation parks some
        // job on a server that cannot hold it, so the run ends with at
        // least one over-committed server; the two-tier run ends with none.
        let two_tier = run(golden_scenario(), RunOptions::default()).unwrap();
        let (_, uneven, _) = two_tier.state.status_counts();
        assert_eq!(uneven, 0);
        for offset in 0..6u64 {
            let output = run_baseline(
                golden_scenario(),
                Strategy::RoundRobin,
                RunOptions {
                    seed: Some(offset),
                    ..Default::default()
                },
            )
            .unwrap();
            let (_, uneven, _) = output.state.status_counts();
            assert!(uneven >= 1, "offset {offset} unexpectedly balanced");
        }
    }

    #[test]
    fn failure_and_recovery_cycle() {
        // WS2.3 takes J1 at tick 0, fails at tick 1 (last heartbeat 0),
        // is declared dead at tick 10, and its job has nowhere to go.
        let mut events = arrivals_at_zero();
        events.push(SimEvent::ServerFail(1, ServerId::new("WS2.3")));
        events.push(SimEvent::ServerRecover(12, ServerId::new("WS2.3")));
        let scenario = Scenario {
            config: golden::config(),
            events,
            last_tick: 15,
            seed: 0,
        };
        let output = run(
            scenario,
            RunOptions {
                audit: true,
                ..Default::default()
            },
        )
        .unwrap();
        let dead_event = output
            .trace
            .iter()
            .find(|e| e.kind == TraceKind::ServerDead)
            .expect("server_dead event");
        assert_eq!(dead_event.tick, 10);
        let revived = output
            .trace
            .iter()
            .find(|e| e.kind == TraceKind::ServerRevived)
            .expect("server_revived event");
        assert_eq!(revived.tick, 12);
        // J1 went to pending at death (nothing fits 1500) and is retried,
        // landing back on the revived WS2.3 at the tick-15 cycle.
        let (ci, si) = output.state.find_server(&ServerId::new("WS2.3")).unwrap();
        assert_eq!(
            output.state.entry(ci, si).jobs_assigned,
            vec![JobId::new("J1")]
        );
        output.state.audit().unwrap();
    }

    #[test]
    fn job_completion_releases_memory() {
        let mut events = arrivals_at_zero();
        events.push(SimEvent::JobComplete(2, JobId::new("J1")));
        let scenario = Scenario {
            config: golden::config(),
            events,
            last_tick: 5,
            seed: 0,
        };
        let output = run(
            scenario,
            RunOptions {
                audit: true,
                ..Default::default()
            },
        )
        .unwrap();
        let (ci, si) = output.state.find_server(&ServerId::new("WS2.3")).unwrap();
        assert_eq!(output.state.entry(ci, si).memory_left, 1800);
        assert!(!output.state.jobs.contains_key(&JobId::new("J1")));
    }
}
