//! Comparison-count instrumentation. Every capability or load predicate the
//! placement and balancing paths evaluate is tallied, split by phase, so the
//! counts can be checked against the closed-form bounds:
//! sorting a cluster of m servers costs exactly m(m-1)/2 pair evaluations,
//! one job's server scan costs at most the matched cluster's size, and a
//! balanced job costs at most m within its cluster plus (n-i)*m across the
//! clusters after it.

use crate::model::{JobId, ServerId, Tick};
use crate::trace::TraceEvent;

/// Per-phase predicate-evaluation tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ComparisonCounters {
    /// Pair evaluations made by counted sorts.
    pub sorting: u64,
    /// Cluster memory-range tests during job assignment.
    pub assignment_cluster: u64,
    /// Server capability tests during job assignment.
    pub assignment_server: u64,
    /// Candidate tests inside the origin cluster during balancing.
    pub balance_within: u64,
    /// Candidate tests in clusters after the origin during balancing.
    pub balance_cross: u64,
}

impl ComparisonCounters {
    pub fn total(&self) -> u64 {
        self.sorting
            + self.assignment_cluster
            + self.assignment_server
            + self.balance_within
            + self.balance_cross
    }
}

/// One counted sort: how many entries, how many pair evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SortInvocation {
    pub entries: usize,
    pub comparisons: u64,
}

/// Routing outcome for one assigned job, with its comparison tallies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentOutcome {
    pub job_id: JobId,
    pub cluster_id: crate::model::ClusterId,
    pub server_id: ServerId,
    pub comparisons_cluster: u64,
    pub comparisons_server: u64,
}

/// One balance attempt for an evicted, orphaned, or pending job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceAttempt {
    pub job_id: JobId,
    /// Zero-based index of the cluster the scan started from.
    pub origin_cluster: usize,
    pub within_comparisons: u64,
    pub cross_comparisons: u64,
    pub placed: Option<ServerId>,
}

/// Server status counts at the end of one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickStatus {
    pub tick: Tick,
    pub even: usize,
    pub uneven: usize,
    pub dead: usize,
}

/// Aggregated instrumentation for one run.
#[derive(Debug, Clone, Default)]
pub struct MetricsReport {
    pub comparisons: ComparisonCounters,
    pub sort_invocations: Vec<SortInvocation>,
    pub assignments: Vec<AssignmentOutcome>,
    pub balance_attempts: Vec<BalanceAttempt>,
    pub moves: u64,
    pub unresolved: u64,
    pub pending_end: u64,
    pub status_histogram: Vec<TickStatus>,
}

/// Shared sink the operations write trace events and metrics into.
#[derive(Debug, Default)]
pub struct Recorder {
    pub trace: Vec<TraceEvent>,
    pub metrics: MetricsReport,
}

impl Recorder {
    pub fn new() -> Self {
        Recorder::default()
    }

    pub fn emit(&mut self, event: TraceEvent) {
        self.trace.push(event);
    }

    pub fn record_sort(&mut self, entries: usize, comparisons: u64) {
        self.metrics.comparisons.sorting += comparisons;
        self.metrics.sort_invocations.push(SortInvocation {
            entries,
            comparisons,
        });
    }
}
