//! Periodic load balancing: find over-committed servers, evict their most
//! recent jobs, and re-place each job using current remaining memory --
//! first within the origin cluster, then in the clusters after it.
//!
//! Unlike assignment, balancing checks `memory_left`, so placements made
//! here never over-commit the destination. Escalation never wraps back to
//! earlier clusters.

use std::collections::BTreeMap;

use crate::assignment::exchange_sort_counted;
use crate::metrics::{BalanceAttempt, Recorder};
use crate::model::{
    ClusterState, JobId, JobSpec, LoadStatus, ModelError, ReviewEntry, ServerId, SystemState,
    Tick,
};
use crate::trace::{TraceEvent, TraceKind};

/// Sorts entries ascending by remaining memory, ties by server id. Returns
/// the sorted entries and the exact pair-comparison count.
pub fn sort_by_load(entries: &[ReviewEntry]) -> (Vec<ReviewEntry>, u64) {
    let mut sorted = entries.to_vec();
    let comparisons =
        exchange_sort_counted(&mut sorted, |e| (e.memory_left, e.server_id.clone()));
    (sorted, comparisons)
}

/// Picks the jobs to evict from an over-committed entry: newest first, the
/// shortest prefix whose removal brings `memory_left` back to zero or above.
pub fn pick_evictions(entry: &ReviewEntry, jobs: &BTreeMap<JobId, JobSpec>) -> Vec<JobSpec> {
    let mut evictions = Vec::new();
    let mut reclaimed: i64 = 0;
    let deficit = -entry.memory_left;
    for job_id in entry.jobs_assigned.iter().rev() {
        if reclaimed >= deficit {
            break;
        }
        let job = jobs[job_id].clone();
        reclaimed += job.memory_req;
        evictions.push(job);
    }
    evictions
}

/// Living servers of a cluster ordered by current (memory_left, server_id).
/// A bookkeeping view, not a counted sort.
fn live_load_order(cluster: &ClusterState) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cluster.reviews.len())
        .filter(|&si| cluster.liveness[si].alive)
        .collect();
    order.sort_by(|&a, &b| {
        let ka = (cluster.reviews[a].memory_left, &cluster.reviews[a].server_id);
        let kb = (cluster.reviews[b].memory_left, &cluster.reviews[b].server_id);
        ka.cmp(&kb)
    });
    order
}

/// Outcome of one balance attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceResult {
    /// Destination server, or `None` when no living server can take the job.
    pub placed: Option<ServerId>,
    pub within_comparisons: u64,
    pub cross_comparisons: u64,
}

fn candidate_rejection(entry: &ReviewEntry, job: &JobSpec) -> Option<&'static str> {
    if entry.memory_left < job.memory_req {
        Some("memory_left")
    } else if entry.speed < job.speed_req {
        Some("speed")
    } else if entry.memory_capacity < job.memory_req {
        Some("capacity")
    } else {
        None
    }
}

/// Re-places one job. Scans the origin cluster's living servers in current
/// load order, starting at `scan_from`'s position (or the head of the
/// cluster), then every later cluster in ascending range order. A candidate
/// must have enough memory left, enough speed, and the nominal capacity for
/// the job. On success the job is applied to the destination.
pub fn balance_job(
    state: &mut SystemState,
    job: &JobSpec,
    origin_cluster: usize,
    scan_from: Option<&ServerId>,
    tick: Tick,
    recorder: &mut Recorder,
) -> Result<BalanceResult, ModelError> {
    let mut within = 0u64;
    let mut cross = 0u64;
    let mut destination: Option<(usize, usize)> = None;

    let order = live_load_order(&state.clusters[origin_cluster]);
    let start = scan_from
        .and_then(|id| {
            order
                .iter()
                .position(|&si| state.clusters[origin_cluster].reviews[si].server_id == *id)
        })
        .unwrap_or(0);
    for &si in &order[start..] {
        let entry = &state.clusters[origin_cluster].reviews[si];
        within += 1;
        match candidate_rejection(entry, job) {
            None => {
                destination = Some((origin_cluster, si));
                break;
            }
            Some(predicate) => {
                recorder.emit(
                    TraceEvent::new(tick, TraceKind::Rejection)
                        .field("job", &job.job_id)
                        .field("candidate", &entry.server_id)
                        .field("predicate", predicate),
                );
            }
        }
    }

    if destination.is_none() {
        'clusters: for cj in (origin_cluster + 1)..state.clusters.len() {
            for &si in &live_load_order(&state.clusters[cj]) {
                let entry = &state.clusters[cj].reviews[si];
                cross += 1;
                match candidate_rejection(entry, job) {
                    None => {
                        destination = Some((cj, si));
                        break 'clusters;
                    }
                    Some(predicate) => {
                        recorder.emit(
                            TraceEvent::new(tick, TraceKind::Rejection)
                                .field("job", &job.job_id)
                                .field("candidate", &entry.server_id)
                                .field("predicate", predicate),
                        );
                    }
                }
            }
        }
    }

    recorder.metrics.comparisons.balance_within += within;
    recorder.metrics.comparisons.balance_cross += cross;
    let placed = match destination {
        Some((ci, si)) => {
            state.entry_mut(ci, si).apply_assignment(job)?;
            Some(state.entry(ci, si).server_id.clone())
        }
        None => None,
    };
    recorder.metrics.balance_attempts.push(BalanceAttempt {
        job_id: job.job_id.clone(),
        origin_cluster,
        within_comparisons: within,
        cross_comparisons: cross,
        placed: placed.clone(),
    });
    Ok(BalanceResult {
        placed,
        within_comparisons: within,
        cross_comparisons: cross,
    })
}

/// One job relocation: `from` is `None` when the job came from the pending
/// queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobMove {
    pub job_id: JobId,
    pub from: Option<ServerId>,
    pub to: ServerId,
}

/// A job no server could take this cycle. It stays where it was: on its
/// origin server (still over-committed) or in the pending queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnresolvedJob {
    pub job_id: JobId,
    pub origin: Option<ServerId>,
}

/// What one rebalance cycle did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RebalanceReport {
    pub tick: Tick,
    pub moves: Vec<JobMove>,
    pub unresolved: Vec<UnresolvedJob>,
    pub comparisons: u64,
}

impl RebalanceReport {
    pub fn new(tick: Tick) -> Self {
        RebalanceReport {
            tick,
            moves: Vec::new(),
            unresolved: Vec::new(),
            comparisons: 0,
        }
    }
}

/// One full balancing pass: for each cluster in ascending range order, sort
/// by load, evict from each over-committed entry, and re-place every evicted
/// job; then retry the pending queue through the same path. Moves apply
/// immediately, so later placements see updated remaining memory.
///
/// A job whose first placement attempt fails stays in flight until the end
/// of the cycle and is retried after every origin has shed its overflow; a
/// later eviction may have opened the room it needs. Only jobs that still
/// fit nowhere after a full no-progress sweep are restored to their origin
/// and reported unresolved.
pub fn rebalance_cycle(
    state: &mut SystemState,
    tick: Tick,
    recorder: &mut Recorder,
) -> Result<RebalanceReport, ModelError> {
    let mut report = RebalanceReport::new(tick);
    let mut stranded: Vec<(JobSpec, usize, ServerId)> = Vec::new();

    for ci in 0..state.clusters.len() {
        let (sorted, comparisons) = sort_by_load(&state.clusters[ci].reviews);
        recorder.record_sort(sorted.len(), comparisons);
        let uneven: Vec<ServerId> = sorted
            .iter()
            .filter(|e| e.status == LoadStatus::Uneven)
            .map(|e| e.server_id.clone())
            .collect();

        for origin_id in uneven {
            let (oci, osi) = state
                .find_server(&origin_id)
                .ok_or_else(|| ModelError::UnknownServer(origin_id.clone()))?;
            debug_assert_eq!(oci, ci);
            if state.entry(ci, osi).status != LoadStatus::Uneven {
                continue;
            }
            let evictions = pick_evictions(state.entry(ci, osi), &state.jobs);
            for job in &evictions {
                state.entry_mut(ci, osi).remove_assignment(job)?;
            }
            for job in evictions {
                let result = balance_job(state, &job, ci, Some(&origin_id), tick, recorder)?;
                report.comparisons += result.within_comparisons + result.cross_comparisons;
                match result.placed {
                    Some(dest) if dest == origin_id => {
                        // Fit back on its own server after the batch eviction:
                        // not a move.
                    }
                    Some(dest) => {
                        record_move(&mut report, recorder, tick, &job.job_id, &origin_id, &dest);
                    }
                    None => stranded.push((job, ci, origin_id.clone())),
                }
            }
        }
    }

    let pending = std::mem::take(&mut state.pending);
    for entry in pending {
        let result = balance_job(state, &entry.job, 0, None, tick, recorder)?;
        report.comparisons += result.within_comparisons + result.cross_comparisons;
        match result.placed {
            Some(dest) => {
                recorder.emit(
                    TraceEvent::new(tick, TraceKind::Move)
                        .field("job", &entry.job.job_id)
                        .field("from", "pending")
                        .field("to", &dest),
                );
                recorder.metrics.moves += 1;
                report.moves.push(JobMove {
                    job_id: entry.job.job_id.clone(),
                    from: None,
                    to: dest,
                });
            }
            None => {
                recorder.emit(
                    TraceEvent::new(tick, TraceKind::Unresolved)
                        .field("job", &entry.job.job_id)
                        .field("origin", "pending"),
                );
                recorder.metrics.unresolved += 1;
                report.unresolved.push(UnresolvedJob {
                    job_id: entry.job.job_id.clone(),
                    origin: None,
                });
                state.pending.push(entry);
            }
        }
    }

    // Retry stranded jobs until a full sweep places none of them.
    loop {
        let mut progressed = false;
        let mut still = Vec::new();
        for (job, ci, origin_id) in stranded {
            let result = balance_job(state, &job, ci, Some(&origin_id), tick, recorder)?;
            report.comparisons += result.within_comparisons + result.cross_comparisons;
            match result.placed {
                Some(dest) => {
                    progressed = true;
                    if dest != origin_id {
                        record_move(&mut report, recorder, tick, &job.job_id, &origin_id, &dest);
                    }
                }
                None => still.push((job, ci, origin_id)),
            }
        }
        stranded = still;
        if !progressed || stranded.is_empty() {
            break;
        }
    }
    for (job, ci, origin_id) in stranded {
        let (_, osi) = state
            .find_server(&origin_id)
            .ok_or_else(|| ModelError::UnknownServer(origin_id.clone()))?;
        state.entry_mut(ci, osi).apply_assignment(&job)?;
        recorder.emit(
            TraceEvent::new(tick, TraceKind::Unresolved)
                .field("job", &job.job_id)
                .field("origin", &origin_id),
        );
        recorder.metrics.unresolved += 1;
        report.unresolved.push(UnresolvedJob {
            job_id: job.job_id.clone(),
            origin: Some(origin_id.clone()),
        });
    }

    state.refresh_load_summaries(tick);
    Ok(report)
}

fn record_move(
    report: &mut RebalanceReport,
    recorder: &mut Recorder,
    tick: Tick,
    job_id: &JobId,
    from: &ServerId,
    to: &ServerId,
) {
    recorder.emit(
        TraceEvent::new(tick, TraceKind::Move)
            .field("job", job_id)
            .field("from", from)
            .field("to", to),
    );
    recorder.metrics.moves += 1;
    report.moves.push(JobMove {
        job_id: job_id.clone(),
        from: Some(from.clone()),
        to: to.clone(),
    });
}

/// Brute-force feasibility check used as the balancing oracle: true when
/// some living server satisfies all three placement predicates for the job
/// right now. Independent of the greedy scan above.
pub fn any_feasible_server(state: &SystemState, job: &JobSpec) -> bool {
    state.clusters.iter().any(|cluster| {
        cluster.reviews.iter().enumerate().any(|(si, entry)| {
            cluster.liveness[si].alive
                && entry.memory_left >= job.memory_req
                && entry.speed >= job.speed_req
                && entry.memory_capacity >= job.memory_req
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{assign_job, compute_capability_orders};
    use crate::golden;
    use crate::model::{ClusterId, ServerSpec, SystemConfig, SystemState};
    use crate::model::ClusterSpec;
    use proptest::prelude::*;

    fn entry(id: &str, capacity: i64, speed: i64) -> ReviewEntry {
        ReviewEntry::new(&ServerSpec {
            server_id: ServerId::new(id),
            cluster_id: ClusterId::new("C1"),
            memory_capacity: capacity,
            speed,
        })
    }

    /// Golden state right after the seven-job assignment.
    fn assigned_state() -> (SystemState, Recorder) {
        let mut state = SystemState::new(golden::config()).unwrap();
        let mut recorder = Recorder::new();
        let orders = compute_capability_orders(&state, &mut recorder);
        for job in golden::jobs() {
            assign_job(&mut state, job, &orders, 0, &mut recorder).unwrap();
        }
        (state, recorder)
    }

    #[test]
    fn sort_by_load_orders_by_memory_left() {
        let (state, _) = assigned_state();
        let (sorted, _) = sort_by_load(&state.clusters[0].reviews);
        let ids: Vec<&str> = sorted.iter().map(|e| e.server_id.as_str()).collect();
        assert_eq!(ids, ["WS1.2", "WS1.1", "WS1.3"]);
    }

    #[test]
    fn sort_by_load_ties_break_on_server_id() {
        let entries = vec![entry("B", 500, 60), entry("A", 500, 60)];
        let (sorted, _) = sort_by_load(&entries);
        let ids: Vec<&str> = sorted.iter().map(|e| e.server_id.as_str()).collect();
        assert_eq!(ids, ["A", "B"]);
    }

    #[test]
    fn sort_by_load_empty() {
        let (sorted, comparisons) = sort_by_load(&[]);
        assert!(sorted.is_empty());
        assert_eq!(comparisons, 0);
    }

    #[test]
    fn pick_evictions_takes_newest_first() {
        let (state, _) = assigned_state();
        let (ci, si) = state.find_server(&ServerId::new("WS1.1")).unwrap();
        let picked = pick_evictions(state.entry(ci, si), &state.jobs);
        let ids: Vec<&str> = picked.iter().map(|j| j.job_id.as_str()).collect();
        assert_eq!(ids, ["J7"]);
        let (ci, si) = state.find_server(&ServerId::new("WS1.2")).unwrap();
        let picked = pick_evictions(state.entry(ci, si), &state.jobs);
        let ids: Vec<&str> = picked.iter().map(|j| j.job_id.as_str()).collect();
        assert_eq!(ids, ["J6"]);
    }

    #[test]
    fn pick_evictions_single_job() {
        let mut e = entry("WS", 500, 60);
        let job = JobSpec::new("J", 900, 10);
        e.apply_assignment(&job).unwrap();
        let mut jobs = BTreeMap::new();
        jobs.insert(job.job_id.clone(), job.clone());
        let picked = pick_evictions(&e, &jobs);
        assert_eq!(picked, vec![job]);
    }

    #[test]
    fn pick_evictions_minimal_prefix() {
        // -10 deficit; newest job (8) is not enough, so two go.
        let mut e = entry("WS", 100, 60);
        let jobs_list = [
            JobSpec::new("A", 97, 1),
            JobSpec::new("B", 5, 1),
            JobSpec::new("C", 8, 1),
        ];
        let mut jobs = BTreeMap::new();
        for j in &jobs_list {
            e.apply_assignment(j).unwrap();
            jobs.insert(j.job_id.clone(), j.clone());
        }
        assert_eq!(e.memory_left, -10);
        let picked = pick_evictions(&e, &jobs);
        let ids: Vec<&str> = picked.iter().map(|j| j.job_id.as_str()).collect();
        assert_eq!(ids, ["C", "B"]);
    }

    #[test]
    fn balance_job_escalates_to_next_cluster() {
        let (mut state, mut recorder) = assigned_state();
        // Evict J6 from WS1.2 the way the cycle would, then re-place it.
        let j6 = state.jobs[&JobId::new("J6")].clone();
        let origin = ServerId::new("WS1.2");
        let (ci, si) = state.find_server(&origin).unwrap();
        state.entry_mut(ci, si).remove_assignment(&j6).unwrap();
        let result = balance_job(&mut state, &j6, 0, Some(&origin), 5, &mut recorder).unwrap();
        assert_eq!(result.placed, Some(ServerId::new("WS2.2")));

        // J7 follows and lands on WS2.2 as well, after WS2.1 and WS2.3 reject.
        let j7 = state.jobs[&JobId::new("J7")].clone();
        let origin = ServerId::new("WS1.1");
        let (ci, si) = state.find_server(&origin).unwrap();
        state.entry_mut(ci, si).remove_assignment(&j7).unwrap();
        let result = balance_job(&mut state, &j7, 0, Some(&origin), 5, &mut recorder).unwrap();
        assert_eq!(result.placed, Some(ServerId::new("WS2.2")));
        let (ci, si) = state.find_server(&ServerId::new("WS2.2")).unwrap();
        assert_eq!(state.entry(ci, si).memory_left, 300);
    }

    #[test]
    fn balance_job_unplaceable_when_nothing_fits() {
        let (mut state, mut recorder) = assigned_state();
        let huge = JobSpec::new("JX", 1900, 10);
        state.add_job(huge.clone()).unwrap();
        assert!(!any_feasible_server(&state, &huge));
        let result = balance_job(&mut state, &huge, 0, None, 5, &mut recorder).unwrap();
        assert_eq!(result.placed, None);
    }

    #[test]
    fn cycle_resolves_golden_overflow() {
        let (mut state, mut recorder) = assigned_state();
        let report = rebalance_cycle(&mut state, 5, &mut recorder).unwrap();
        let moves: Vec<(&str, &str, &str)> = report
            .moves
            .iter()
            .map(|m| {
                (
                    m.job_id.as_str(),
                    m.from.as_ref().map(|s| s.as_str()).unwrap_or("pending"),
                    m.to.as_str(),
                )
            })
            .collect();
        assert_eq!(
            moves,
            [("J6", "WS1.2", "WS2.2"), ("J7", "WS1.1", "WS2.2")]
        );
        assert!(report.unresolved.is_empty());
        let lefts: Vec<i64> = state
            .clusters
            .iter()
            .flat_map(|c| c.reviews.iter().map(|r| r.memory_left))
            .collect();
        assert_eq!(lefts, [0, 100, 0, 0, 300, 300]);
        assert!(state
            .clusters
            .iter()
            .flat_map(|c| c.reviews.iter())
            .all(|r| r.status == LoadStatus::Even));
        let (ci, si) = state.find_server(&ServerId::new("WS2.2")).unwrap();
        assert_eq!(
            state.entry(ci, si).jobs_assigned,
            vec![JobId::new("J6"), JobId::new("J7")]
        );
        state.audit().unwrap();
    }

    #[test]
    fn cycle_is_identity_on_balanced_state() {
        let mut state = SystemState::new(golden::config()).unwrap();
        let mut recorder = Recorder::new();
        let before = state.clone();
        let report = rebalance_cycle(&mut state, 5, &mut recorder).unwrap();
        assert!(report.moves.is_empty());
        assert!(report.unresolved.is_empty());
        for (ca, cb) in state.clusters.iter().zip(before.clusters.iter()) {
            assert_eq!(ca.reviews, cb.reviews);
        }
    }

    #[test]
    fn cycle_reports_unresolved_overflow() {
        // One tiny cluster, over-committed; nothing can absorb the overflow.
        let config = SystemConfig::new(
            5,
            vec![ClusterSpec {
                cluster_id: ClusterId::new("C1"),
                memory_low: 0,
                memory_high: 1000,
                servers: vec![
                    ServerSpec {
                        server_id: ServerId::new("A"),
                        cluster_id: ClusterId::new("C1"),
                        memory_capacity: 1000,
                        speed: 100,
                    },
                    ServerSpec {
                        server_id: ServerId::new("B"),
                        cluster_id: ClusterId::new("C1"),
                        memory_capacity: 500,
                        speed: 100,
                    },
                ],
            }],
        )
        .unwrap();
        let mut state = SystemState::new(config).unwrap();
        let mut recorder = Recorder::new();
        let orders = compute_capability_orders(&state, &mut recorder);
        for job in [
            JobSpec::new("J1", 900, 10),
            JobSpec::new("J2", 400, 10),
            JobSpec::new("J3", 800, 10),
        ] {
            assign_job(&mut state, job, &orders, 0, &mut recorder).unwrap();
        }
        // B holds J2 (100 left); A holds J1+J3 at -700.
        let report = rebalance_cycle(&mut state, 5, &mut recorder).unwrap();
        assert_eq!(report.unresolved.len(), 1);
        let unresolved = &report.unresolved[0];
        assert_eq!(unresolved.job_id, JobId::new("J3"));
        assert_eq!(unresolved.origin, Some(ServerId::new("A")));
        // The oracle agrees: no living server can take J3 now.
        let j3 = state.jobs[&JobId::new("J3")].clone();
        assert!(!any_feasible_server(&state, &j3));
        let (ci, si) = state.find_server(&ServerId::new("A")).unwrap();
        assert_eq!(state.entry(ci, si).status, LoadStatus::Uneven);
        state.audit().unwrap();
    }

    fn overflow_magnitude(state: &SystemState) -> i64 {
        state
            .clusters
            .iter()
            .flat_map(|c| c.reviews.iter())
            .map(|r| r.memory_left.min(0))
            .sum::<i64>()
            .abs()
    }

    proptest! {
        #[test]
        fn cycle_properties_hold_on_random_states(
            seed_mems in proptest::collection::vec(1i64..1500, 1..24),
            seed_speeds in proptest::collection::vec(1i64..120, 1..24),
        ) {
            let mut state = SystemState::new(golden::config()).unwrap();
            let mut recorder = Recorder::new();
            let orders = compute_capability_orders(&state, &mut recorder);
            for (i, (m, s)) in seed_mems.iter().zip(seed_speeds.iter().cycle()).enumerate() {
                assign_job(
                    &mut state,
                    JobSpec::new(format!("J{i}"), *m, *s),
                    &orders,
                    0,
                    &mut recorder,
                )
                .unwrap();
            }
            let before_overflow = overflow_magnitude(&state);
            let before_attempts = recorder.metrics.balance_attempts.len();
            let report = rebalance_cycle(&mut state, 5, &mut recorder).unwrap();
            state.audit().unwrap();

            // Overflow magnitude never grows across a cycle.
            prop_assert!(overflow_magnitude(&state) <= before_overflow);

            // Every destination satisfied the three predicates when chosen,
            // so no move may leave a destination over-committed.
            for mv in &report.moves {
                let (ci, si) = state.find_server(&mv.to).unwrap();
                prop_assert!(state.entry(ci, si).memory_left >= 0);
            }

            // Unresolved jobs really had no feasible target (post-state check:
            // restores put origins back to their pre-eviction load).
            for u in &report.unresolved {
                let job = state.jobs[&u.job_id].clone();
                prop_assert!(!any_feasible_server(&state, &job));
            }

            // Comparison bounds per attempt.
            let n = state.clusters.len() as u64;
            for attempt in &recorder.metrics.balance_attempts[before_attempts..] {
                let m = state.clusters[attempt.origin_cluster].reviews.len() as u64;
                prop_assert!(attempt.within_comparisons <= m);
                let remaining = n - attempt.origin_cluster as u64 - 1;
                let m_max = state
                    .clusters
                    .iter()
                    .map(|c| c.reviews.len() as u64)
                    .max()
                    .unwrap_or(0);
                prop_assert!(attempt.cross_comparisons <= remaining * m_max);
            }

            // A second cycle on a fully even, pending-free state is a no-op.
            if report.unresolved.is_empty() && state.pending.is_empty() {
                let snapshot: Vec<Vec<ReviewEntry>> =
                    state.clusters.iter().map(|c| c.reviews.clone()).collect();
                let again = rebalance_cycle(&mut state, 10, &mut recorder).unwrap();
                prop_assert!(again.moves.is_empty());
                for (cluster, reviews) in state.clusters.iter().zip(snapshot.iter()) {
                    prop_assert_eq!(&cluster.reviews, reviews);
                }
            }
        }
    }
}
