//! Job assignment: route a job to the first cluster whose memory range
//! covers it, then to the first capable server in capability-sorted order.
//!
//! Assignment checks nominal capability (the ability matrix), not current
//! load, so a busy server can be over-committed on purpose; the balancer
//! corrects that at the next cycle using `memory_left`.

use crate::metrics::{AssignmentOutcome, Recorder};
use crate::model::{
    ClusterSpec, JobSpec, ModelError, PendingJob, PendingReason, ReviewEntry, SystemState, Tick,
};
use crate::trace::{TraceEvent, TraceKind};

/// Pairwise exchange sort, ascending by `key`, counting one comparison per
/// (i, j) pair. Equal keys are never swapped, so the sort is stable, and the
/// count is always exactly len*(len-1)/2.
pub fn exchange_sort_counted<T, K: Ord>(items: &mut [T], key: impl Fn(&T) -> K) -> u64 {
    let mut comparisons = 0u64;
    for i in 0..items.len() {
        for j in (i + 1)..items.len() {
            comparisons += 1;
            if key(&items[i]) > key(&items[j]) {
                items.swap(i, j);
            }
        }
    }
    comparisons
}

/// Sorts one cluster's entries ascending by memory capacity, ties ascending
/// by speed, stable for full ties. Returns the sorted entries and the exact
/// pair-comparison count.
pub fn sort_servers(entries: &[ReviewEntry]) -> (Vec<ReviewEntry>, u64) {
    let mut sorted = entries.to_vec();
    let comparisons = exchange_sort_counted(&mut sorted, |e| (e.memory_capacity, e.speed));
    (sorted, comparisons)
}

/// Result of routing a job to a cluster by memory range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterMatch {
    Matched {
        cluster_index: usize,
        comparisons: u64,
    },
    NoCluster {
        comparisons: u64,
    },
}

/// Returns the first cluster whose inclusive memory range covers the job's
/// requirement. Clusters must already be in ascending range order; at a
/// shared boundary the earlier cluster wins.
pub fn match_cluster(job: &JobSpec, clusters: &[ClusterSpec]) -> ClusterMatch {
    let mut comparisons = 0u64;
    for (index, cluster) in clusters.iter().enumerate() {
        comparisons += 1;
        if job.memory_req >= cluster.memory_low && job.memory_req <= cluster.memory_high {
            return ClusterMatch::Matched {
                cluster_index: index,
                comparisons,
            };
        }
    }
    ClusterMatch::NoCluster { comparisons }
}

/// Result of scanning a cluster for a nominally capable server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerSelect {
    Selected {
        server_index: usize,
        comparisons: u64,
    },
    NoServer {
        comparisons: u64,
    },
}

/// Scans the cluster's living servers in capability order and returns the
/// first whose nominal memory capacity and speed cover the job. Current
/// load is deliberately ignored here.
pub fn select_server(
    job: &JobSpec,
    reviews: &[ReviewEntry],
    alive: impl Fn(usize) -> bool,
    order: &[usize],
) -> ServerSelect {
    let mut comparisons = 0u64;
    for &si in order {
        if !alive(si) {
            continue;
        }
        let entry = &reviews[si];
        comparisons += 1;
        if entry.memory_capacity >= job.memory_req && entry.speed >= job.speed_req {
            return ServerSelect::Selected {
                server_index: si,
                comparisons,
            };
        }
    }
    ServerSelect::NoServer { comparisons }
}

/// Computes every cluster's capability scan order with one counted sort per
/// cluster. Meant to run once per batch of arrivals.
pub fn compute_capability_orders(state: &SystemState, recorder: &mut Recorder) -> Vec<Vec<usize>> {
    state
        .clusters
        .iter()
        .map(|cluster| {
            let mut order: Vec<usize> = (0..cluster.reviews.len()).collect();
            let comparisons = exchange_sort_counted(&mut order, |&si| {
                (
                    cluster.reviews[si].memory_capacity,
                    cluster.reviews[si].speed,
                )
            });
            recorder.record_sort(cluster.reviews.len(), comparisons);
            order
        })
        .collect()
}

/// Outcome of one job's assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssignResult {
    Assigned(AssignmentOutcome),
    Pending(PendingReason),
}

/// Routes one newly arrived job: cluster by range, server by nominal
/// capability, then charges the review entry. Unservable jobs land in the
/// pending queue and are retried at every rebalance cycle.
pub fn assign_job(
    state: &mut SystemState,
    job: JobSpec,
    orders: &[Vec<usize>],
    tick: Tick,
    recorder: &mut Recorder,
) -> Result<AssignResult, ModelError> {
    state.add_job(job.clone())?;
    let specs: Vec<ClusterSpec> = state.clusters.iter().map(|c| c.spec.clone()).collect();
    let (cluster_index, comparisons_cluster) = match match_cluster(&job, &specs) {
        ClusterMatch::Matched {
            cluster_index,
            comparisons,
        } => (cluster_index, comparisons),
        ClusterMatch::NoCluster { comparisons } => {
            recorder.metrics.comparisons.assignment_cluster += comparisons;
            recorder.emit(
                TraceEvent::new(tick, TraceKind::JobPending)
                    .field("job", &job.job_id)
                    .field("reason", PendingReason::NoCluster),
            );
            state.pending.push(PendingJob {
                job,
                reason: PendingReason::NoCluster,
                since_tick: tick,
            });
            return Ok(AssignResult::Pending(PendingReason::NoCluster));
        }
    };
    recorder.metrics.comparisons.assignment_cluster += comparisons_cluster;
    let cluster_id = state.clusters[cluster_index].spec.cluster_id.clone();
    recorder.emit(
        TraceEvent::new(tick, TraceKind::ClusterMatched)
            .field("job", &job.job_id)
            .field("cluster", &cluster_id)
            .field("comparisons", comparisons_cluster),
    );

    let cluster = &state.clusters[cluster_index];
    let selection = select_server(
        &job,
        &cluster.reviews,
        |si| cluster.liveness[si].alive,
        &orders[cluster_index],
    );
    let (server_index, comparisons_server) = match selection {
        ServerSelect::Selected {
            server_index,
            comparisons,
        } => (server_index, comparisons),
        ServerSelect::NoServer { comparisons } => {
            recorder.metrics.comparisons.assignment_server += comparisons;
            recorder.emit(
                TraceEvent::new(tick, TraceKind::JobPending)
                    .field("job", &job.job_id)
                    .field("reason", PendingReason::NoServer),
            );
            state.pending.push(PendingJob {
                job,
                reason: PendingReason::NoServer,
                since_tick: tick,
            });
            return Ok(AssignResult::Pending(PendingReason::NoServer));
        }
    };
    recorder.metrics.comparisons.assignment_server += comparisons_server;

    let entry = state.entry_mut(cluster_index, server_index);
    entry.apply_assignment(&job)?;
    let server_id = entry.server_id.clone();
    let memory_left = entry.memory_left;
    recorder.emit(
        TraceEvent::new(tick, TraceKind::ServerSelected)
            .field("job", &job.job_id)
            .field("server", &server_id)
            .field("comparisons", comparisons_server),
    );
    if memory_left < 0 {
        recorder.emit(
            TraceEvent::new(tick, TraceKind::OverCommit)
                .field("job", &job.job_id)
                .field("server", &server_id)
                .field("memory_left", memory_left),
        );
    }
    let outcome = AssignmentOutcome {
        job_id: job.job_id,
        cluster_id,
        server_id,
        comparisons_cluster,
        comparisons_server,
    };
    recorder.metrics.assignments.push(outcome.clone());
    Ok(AssignResult::Assigned(outcome))
}
