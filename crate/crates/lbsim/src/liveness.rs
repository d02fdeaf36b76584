//! Heartbeat bookkeeping and dead-machine handling. A server that has not
//! heartbeated for two full periods is declared dead; its jobs are pulled
//! off the entry and re-placed through the balancer path, falling back to
//! the pending queue when no living server can take them.

use crate::balancer::{balance_job, JobMove, RebalanceReport, UnresolvedJob};
use crate::metrics::Recorder;
use crate::model::{
    JobSpec, ModelError, PendingJob, PendingReason, ServerId, SystemState, Tick,
};
use crate::trace::{TraceEvent, TraceKind};

/// Records a heartbeat for `server_id` at `tick`. A heartbeat from a server
/// previously declared dead revives it (empty: its jobs were migrated when
/// it died) and emits a `server_revived` event.
pub fn record_heartbeat(
    state: &mut SystemState,
    server_id: &ServerId,
    tick: Tick,
    recorder: &mut Recorder,
) -> Result<(), ModelError> {
    let (ci, si) = state
        .find_server(server_id)
        .ok_or_else(|| ModelError::UnknownServer(server_id.clone()))?;
    let record = &mut state.clusters[ci].liveness[si];
    let was_dead = !record.alive;
    record.last_heartbeat_tick = tick;
    record.alive = true;
    if was_dead {
        recorder.emit(
            TraceEvent::new(tick, TraceKind::ServerRevived).field("server", server_id),
        );
    }
    Ok(())
}

/// Staleness rule: dead once `now - last_heartbeat >= 2 * heartbeat_period`.
pub fn is_stale(last_heartbeat: Tick, now: Tick, dead_after: Tick) -> bool {
    now.saturating_sub(last_heartbeat) >= dead_after
}

/// Marks every newly stale server dead and returns them in server-id order.
/// Servers already marked dead are not reported again.
pub fn detect_dead(state: &mut SystemState, tick: Tick, recorder: &mut Recorder) -> Vec<ServerId> {
    let dead_after = state.config.dead_after;
    let mut newly_dead = Vec::new();
    for cluster in &mut state.clusters {
        for record in &mut cluster.liveness {
            if record.alive && is_stale(record.last_heartbeat_tick, tick, dead_after) {
                record.alive = false;
                newly_dead.push(record.server_id.clone());
            }
        }
    }
    newly_dead.sort();
    for server_id in &newly_dead {
        recorder.emit(TraceEvent::new(tick, TraceKind::ServerDead).field("server", server_id));
    }
    newly_dead
}

/// Moves every job off a dead server: each is re-placed through the balancer
/// path starting at the head of the dead server's own cluster (the dead
/// entry itself is excluded from all scans). Jobs no living server can take
/// go to the pending queue.
pub fn migrate_dead_jobs(
    state: &mut SystemState,
    server_id: &ServerId,
    tick: Tick,
    recorder: &mut Recorder,
) -> Result<RebalanceReport, ModelError> {
    let (ci, si) = state
        .find_server(server_id)
        .ok_or_else(|| ModelError::UnknownServer(server_id.clone()))?;
    debug_assert!(!state.clusters[ci].liveness[si].alive);
    let mut report = RebalanceReport::new(tick);

    let orphaned: Vec<JobSpec> = state.clusters[ci].reviews[si]
        .jobs_assigned
        .iter()
        .map(|job_id| state.jobs[job_id].clone())
        .collect();
    for job in &orphaned {
        state.entry_mut(ci, si).remove_assignment(job)?;
    }

    for job in orphaned {
        let result = balance_job(state, &job, ci, None, tick, recorder)?;
        report.comparisons += result.within_comparisons + result.cross_comparisons;
        match result.placed {
            Some(dest) => {
                recorder.emit(
                    TraceEvent::new(tick, TraceKind::JobMigrated)
                        .field("job", &job.job_id)
                        .field("from", server_id)
                        .field("to", &dest),
                );
                recorder.metrics.moves += 1;
                report.moves.push(JobMove {
                    job_id: job.job_id.clone(),
                    from: Some(server_id.clone()),
                    to: dest,
                });
            }
            None => {
                recorder.emit(
                    TraceEvent::new(tick, TraceKind::JobOrphanedPending)
                        .field("job", &job.job_id)
                        .field("from", server_id),
                );
                recorder.metrics.unresolved += 1;
                report.unresolved.push(UnresolvedJob {
                    job_id: job.job_id.clone(),
                    origin: None,
                });
                state.pending.push(PendingJob {
                    job,
                    reason: PendingReason::OriginDead,
                    since_tick: tick,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{assign_job, compute_capability_orders};
    use crate::balancer::{any_feasible_server, rebalance_cycle};
    use crate::golden;
    use crate::model::SystemState;

    /// Golden state after assignment and one rebalance cycle.
    fn balanced_state() -> (SystemState, Recorder) {
        let mut state = SystemState::new(golden::config()).unwrap();
        let mut recorder = Recorder::new();
        let orders = compute_capability_orders(&state, &mut recorder);
        for job in golden::jobs() {
            assign_job(&mut state, job, &orders, 0, &mut recorder).unwrap();
        }
        rebalance_cycle(&mut state, 5, &mut recorder).unwrap();
        (state, recorder)
    }

    #[test]
    fn staleness_boundary_is_two_periods() {
        // T = 5: alive at staleness 4, dead exactly at 10.
        assert!(!is_stale(10, 14, 10));
        assert!(is_stale(10, 20, 10));
        assert!(is_stale(10, 21, 10));
    }

    #[test]
    fn all_heartbeating_servers_stay_alive() {
        let mut state = SystemState::new(golden::config()).unwrap();
        let mut recorder = Recorder::new();
        for tick in 0..40 {
            let ids: Vec<ServerId> = state
                .clusters
                .iter()
                .flat_map(|c| c.liveness.iter().map(|l| l.server_id.clone()))
                .collect();
            for id in ids {
                record_heartbeat(&mut state, &id, tick, &mut recorder).unwrap();
            }
            assert!(detect_dead(&mut state, tick, &mut recorder).is_empty());
        }
    }

    #[test]
    fn silent_server_detected_once_at_threshold() {
        let mut state = SystemState::new(golden::config()).unwrap();
        let mut recorder = Recorder::new();
        let silent = ServerId::new("WS1.1");
        // Everyone heartbeats through tick 10; WS1.1 then goes silent.
        for tick in 0..=20u64 {
            let ids: Vec<ServerId> = state
                .clusters
                .iter()
                .flat_map(|c| c.liveness.iter().map(|l| l.server_id.clone()))
                .collect();
            for id in ids {
                if id == silent && tick > 10 {
                    continue;
                }
                record_heartbeat(&mut state, &id, tick, &mut recorder).unwrap();
            }
            let dead = detect_dead(&mut state, tick, &mut recorder);
            if tick < 20 {
                assert!(dead.is_empty(), "unexpected death at tick {tick}");
            } else {
                assert_eq!(dead, vec![silent.clone()]);
            }
        }
        // Already marked: not reported again.
        assert!(detect_dead(&mut state, 21, &mut recorder).is_empty());
    }

    #[test]
    fn simultaneous_failures_reported_in_id_order() {
        let mut state = SystemState::new(golden::config()).unwrap();
        let mut recorder = Recorder::new();
        for tick in 0..=9u64 {
            let ids: Vec<ServerId> = state
                .clusters
                .iter()
                .flat_map(|c| c.liveness.iter().map(|l| l.server_id.clone()))
                .collect();
            for id in ids {
                if (id == ServerId::new("WS2.1") || id == ServerId::new("WS1.3")) && tick > 2 {
                    continue;
                }
                record_heartbeat(&mut state, &id, tick, &mut recorder).unwrap();
            }
        }
        let dead = detect_dead(&mut state, 12, &mut recorder);
        assert_eq!(dead, vec![ServerId::new("WS1.3"), ServerId::new("WS2.1")]);
    }

    #[test]
    fn migrating_large_job_falls_to_pending() {
        // After balancing, WS2.3 holds J1 (1500); nothing has 1500 left.
        let (mut state, mut recorder) = balanced_state();
        let victim = ServerId::new("WS2.3");
        let (ci, si) = state.find_server(&victim).unwrap();
        state.clusters[ci].liveness[si].alive = false;
        let j1 = state.jobs[&"J1".into()].clone();
        assert!(!any_feasible_server(&state, &j1));
        let report = migrate_dead_jobs(&mut state, &victim, 20, &mut recorder).unwrap();
        assert!(report.moves.is_empty());
        assert_eq!(report.unresolved.len(), 1);
        assert_eq!(state.pending.len(), 1);
        assert_eq!(state.pending[0].job.job_id, j1.job_id);
        assert_eq!(state.pending[0].reason, PendingReason::OriginDead);
        assert_eq!(state.entry(ci, si).memory_left, 1800);
        state.audit().unwrap();
    }

    #[test]
    fn migrating_small_job_still_pending_when_no_room() {
        // WS1.1 holds J2 (500, 50); every living server is too full.
        let (mut state, mut recorder) = balanced_state();
        let victim = ServerId::new("WS1.1");
        let (ci, si) = state.find_server(&victim).unwrap();
        state.clusters[ci].liveness[si].alive = false;
        let j2 = state.jobs[&"J2".into()].clone();
        assert!(!any_feasible_server(&state, &j2));
        let report = migrate_dead_jobs(&mut state, &victim, 20, &mut recorder).unwrap();
        assert!(report.moves.is_empty());
        assert_eq!(state.pending.len(), 1);
        assert_eq!(state.pending[0].job.job_id, j2.job_id);
        state.audit().unwrap();
    }

    #[test]
    fn migrating_empty_dead_server_is_a_no_op() {
        let (mut state, mut recorder) = balanced_state();
        let victim = ServerId::new("WS2.2");
        let (ci, si) = state.find_server(&victim).unwrap();
        // Clear it first so it has nothing assigned, then kill it.
        for job_id in state.entry(ci, si).jobs_assigned.clone() {
            state.complete_job(&job_id).unwrap();
        }
        state.clusters[ci].liveness[si].alive = false;
        let report = migrate_dead_jobs(&mut state, &victim, 20, &mut recorder).unwrap();
        assert!(report.moves.is_empty());
        assert!(report.unresolved.is_empty());
    }

    #[test]
    fn revival_restores_service_but_not_jobs() {
        let (mut state, mut recorder) = balanced_state();
        let victim = ServerId::new("WS2.2");
        let (ci, si) = state.find_server(&victim).unwrap();
        state.clusters[ci].liveness[si].alive = false;
        migrate_dead_jobs(&mut state, &victim, 20, &mut recorder).unwrap();
        let jobs_after_death = state.entry(ci, si).jobs_assigned.clone();
        assert!(jobs_after_death.is_empty());

        record_heartbeat(&mut state, &victim, 25, &mut recorder).unwrap();
        assert!(state.clusters[ci].liveness[si].alive);
        assert!(state.entry(ci, si).jobs_assigned.is_empty());
        assert!(recorder
            .trace
            .iter()
            .any(|e| e.kind == TraceKind::ServerRevived));
        state.audit().unwrap();
    }
}
