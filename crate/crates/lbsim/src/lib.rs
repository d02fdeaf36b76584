//! Deterministic tick-based simulator for a two-tier heterogeneous
//! web-server load-balancing scheme.
//!
//! Servers are grouped into clusters by memory range. A controller routes
//! each job to the cluster covering its memory demand and to the first
//! nominally capable server there, deliberately ignoring current load;
//! a periodic balancing cycle then evicts overflow from over-committed
//! servers and re-places it by remaining memory, first within the cluster
//! and then in the clusters after it. Heartbeat staleness marks servers
//! dead after two missed periods and their jobs are migrated through the
//! same balancing path. Round-robin and random baselines run the same
//! event loop for comparison.
//!
//! Every capability and load comparison the two-tier strategy makes is
//! counted, per phase, so a run's cost can be checked against the
//! closed-form bounds; see [`metrics`].

pub mod assignment;
pub mod balancer;
pub mod golden;
pub mod liveness;
pub mod metrics;
pub mod model;
pub mod render;
pub mod scenario;
pub mod simulator;
pub mod trace;

pub use assignment::{assign_job, match_cluster, select_server, sort_servers, AssignResult};
pub use balancer::{
    balance_job, pick_evictions, rebalance_cycle, sort_by_load, RebalanceReport,
};
pub use liveness::{detect_dead, migrate_dead_jobs, record_heartbeat};
pub use metrics::{ComparisonCounters, MetricsReport, Recorder};
pub use model::{
    ClusterId, ClusterSpec, JobId, JobSpec, LoadStatus, ReviewEntry, ServerId, ServerSpec,
    SystemConfig, SystemState,
};
pub use render::{render_metrics, render_review_matrix, render_trace};
pub use scenario::{parse_scenario, render_scenario, ScenarioError};
pub use simulator::{
    run, run_baseline, RunOptions, RunOutput, Scenario, SimEvent, Simulation, Strategy,
};
pub use trace::{TraceEvent, TraceKind};
