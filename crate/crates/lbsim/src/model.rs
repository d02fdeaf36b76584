//! Domain types shared by assignment, balancing and liveness: job and
//! server capability records, per-server review entries, per-cluster load
//! summaries, and the mutation primitives that keep them consistent.
//!
//! Memory is a consumable, subtractive resource tracked in `memory_left`
//! (signed: over-commit drives it negative). Processing speed is a
//! threshold capability and is never consumed.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Simulation time, in ticks.
pub type Tick = u64;

/// Memory units. Signed because `memory_left` goes negative under over-commit.
pub type Mem = i64;

/// Processing-speed units.
pub type Speed = i64;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobId(String);

impl JobId {
    pub fn new(id: impl Into<String>) -> Self {
        JobId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for JobId {
    fn from(s: &str) -> Self {
        JobId::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServerId(String);

impl ServerId {
    pub fn new(id: impl Into<String>) -> Self {
        ServerId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ServerId {
    fn from(s: &str) -> Self {
        ServerId::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId(String);

impl ClusterId {
    pub fn new(id: impl Into<String>) -> Self {
        ClusterId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClusterId {
    fn from(s: &str) -> Self {
        ClusterId::new(s)
    }
}

/// A request's resource demand: memory (consumed) and processing speed
/// (threshold, never consumed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSpec {
    pub job_id: JobId,
    pub memory_req: Mem,
    pub speed_req: Speed,
}

impl JobSpec {
    pub fn new(job_id: impl Into<String>, memory_req: Mem, speed_req: Speed) -> Self {
        JobSpec {
            job_id: JobId::new(job_id),
            memory_req,
            speed_req,
        }
    }
}

/// Static capability record for one web server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerSpec {
    pub server_id: ServerId,
    pub cluster_id: ClusterId,
    pub memory_capacity: Mem,
    pub speed: Speed,
}

/// A cluster: an inclusive memory range plus its member servers in
/// declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSpec {
    pub cluster_id: ClusterId,
    pub memory_low: Mem,
    pub memory_high: Mem,
    pub servers: Vec<ServerSpec>,
}

/// EVEN means the server's remaining memory is non-negative; UNEVEN means
/// it has been over-committed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadStatus {
    Even,
    Uneven,
}

impl LoadStatus {
    pub fn from_memory_left(memory_left: Mem) -> Self {
        if memory_left < 0 {
            LoadStatus::Uneven
        } else {
            LoadStatus::Even
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LoadStatus::Even => "EVEN",
            LoadStatus::Uneven => "UNEVEN",
        }
    }
}

impl fmt::Display for LoadStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Live state of one server: remaining memory, assigned jobs in assignment
/// order, and the EVEN/UNEVEN verdict derived from `memory_left`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewEntry {
    pub server_id: ServerId,
    pub memory_capacity: Mem,
    pub speed: Speed,
    pub memory_left: Mem,
    pub jobs_assigned: Vec<JobId>,
    pub status: LoadStatus,
}

impl ReviewEntry {
    pub fn new(spec: &ServerSpec) -> Self {
        ReviewEntry {
            server_id: spec.server_id.clone(),
            memory_capacity: spec.memory_capacity,
            speed: spec.speed,
            memory_left: spec.memory_capacity,
            jobs_assigned: Vec::new(),
            status: LoadStatus::Even,
        }
    }

    /// Appends `job` and charges its memory. Status is recomputed; going
    /// negative is allowed (that is what rebalancing later corrects).
    pub fn apply_assignment(&mut self, job: &JobSpec) -> Result<(), ModelError> {
        if self.jobs_assigned.contains(&job.job_id) {
            return Err(ModelError::DuplicateJob {
                job_id: job.job_id.clone(),
                server_id: self.server_id.clone(),
            });
        }
        self.jobs_assigned.push(job.job_id.clone());
        self.memory_left -= job.memory_req;
        self.status = LoadStatus::from_memory_left(self.memory_left);
        Ok(())
    }

    /// Removes `job` and refunds its memory. Inverse of [`apply_assignment`]:
    /// apply-then-remove restores the original entry.
    ///
    /// [`apply_assignment`]: ReviewEntry::apply_assignment
    pub fn remove_assignment(&mut self, job: &JobSpec) -> Result<(), ModelError> {
        let pos = self
            .jobs_assigned
            .iter()
            .position(|id| *id == job.job_id)
            .ok_or_else(|| ModelError::JobNotAssigned {
                job_id: job.job_id.clone(),
                server_id: self.server_id.clone(),
            })?;
        self.jobs_assigned.remove(pos);
        self.memory_left += job.memory_req;
        self.status = LoadStatus::from_memory_left(self.memory_left);
        Ok(())
    }
}

/// Per-cluster load digest kept by the controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadSummary {
    pub cluster_id: ClusterId,
    pub total_memory_left: Mem,
    pub uneven_count: usize,
    pub last_update_tick: Tick,
}

/// System-wide configuration: the heartbeat period T (load refresh and
/// rebalance cadence) and the cluster topology. A server is dead after
/// two missed cycles, so `dead_after` is always `2 * heartbeat_period`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemConfig {
    pub heartbeat_period: Tick,
    pub dead_after: Tick,
    pub clusters: Vec<ClusterSpec>,
}

impl SystemConfig {
    pub fn new(heartbeat_period: Tick, clusters: Vec<ClusterSpec>) -> Result<Self, ConfigError> {
        let config = SystemConfig {
            heartbeat_period,
            dead_after: 2 * heartbeat_period,
            clusters,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks the structural invariants: positive capabilities, unique ids,
    /// servers inside their cluster's range, and cluster ranges ascending
    /// and non-overlapping (shared boundary values allowed).
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.heartbeat_period < 1 {
            return Err(ConfigError::InvalidHeartbeat);
        }
        if self.dead_after != 2 * self.heartbeat_period {
            return Err(ConfigError::InvalidDeadAfter);
        }
        if self.clusters.is_empty() {
            return Err(ConfigError::NoClusters);
        }
        let mut cluster_ids = BTreeMap::new();
        let mut server_ids = BTreeMap::new();
        let mut prev_high: Option<Mem> = None;
        for cluster in &self.clusters {
            if cluster_ids
                .insert(cluster.cluster_id.clone(), ())
                .is_some()
            {
                return Err(ConfigError::DuplicateCluster(cluster.cluster_id.clone()));
            }
            if cluster.memory_low < 0 || cluster.memory_low >= cluster.memory_high {
                return Err(ConfigError::InvalidRange(cluster.cluster_id.clone()));
            }
            if let Some(high) = prev_high {
                if cluster.memory_low < high {
                    return Err(ConfigError::OverlappingRanges(cluster.cluster_id.clone()));
                }
            }
            prev_high = Some(cluster.memory_high);
            for server in &cluster.servers {
                if server_ids.insert(server.server_id.clone(), ()).is_some() {
                    return Err(ConfigError::DuplicateServer(server.server_id.clone()));
                }
                if server.cluster_id != cluster.cluster_id {
                    return Err(ConfigError::ServerClusterMismatch(server.server_id.clone()));
                }
                if server.memory_capacity <= 0 || server.speed <= 0 {
                    return Err(ConfigError::InvalidCapability(server.server_id.clone()));
                }
                if server.memory_capacity < cluster.memory_low
                    || server.memory_capacity > cluster.memory_high
                {
                    return Err(ConfigError::ServerOutOfRange {
                        server_id: server.server_id.clone(),
                        cluster_id: cluster.cluster_id.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("heartbeat period must be at least 1 tick")]
    InvalidHeartbeat,
    #[error("dead_after must equal twice the heartbeat period")]
    InvalidDeadAfter,
    #[error("no clusters defined")]
    NoClusters,
    #[error("duplicate cluster id {0}")]
    DuplicateCluster(ClusterId),
    #[error("duplicate server id {0}")]
    DuplicateServer(ServerId),
    #[error("cluster {0} has an invalid memory range")]
    InvalidRange(ClusterId),
    #[error("cluster {0} overlaps the range of an earlier cluster")]
    OverlappingRanges(ClusterId),
    #[error("server {0} declares a different owning cluster")]
    ServerClusterMismatch(ServerId),
    #[error("server {0} has non-positive memory or speed")]
    InvalidCapability(ServerId),
    #[error("server {server_id} memory capacity outside cluster {cluster_id} range")]
    ServerOutOfRange {
        server_id: ServerId,
        cluster_id: ClusterId,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("job {job_id} already assigned to server {server_id}")]
    DuplicateJob { job_id: JobId, server_id: ServerId },
    #[error("job {job_id} not assigned to server {server_id}")]
    JobNotAssigned { job_id: JobId, server_id: ServerId },
    #[error("job {0} already present in the system")]
    DuplicateJobArrival(JobId),
    #[error("unknown server {0}")]
    UnknownServer(ServerId),
    #[error("unknown job {0}")]
    UnknownJob(JobId),
}

/// Why a job is sitting in the pending queue instead of on a server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PendingReason {
    /// No cluster's memory range covers the job.
    NoCluster,
    /// A cluster matched but none of its living servers has the nominal
    /// capability for the job.
    NoServer,
    /// The job's server died and no living server could absorb it.
    OriginDead,
}

impl PendingReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            PendingReason::NoCluster => "no_cluster",
            PendingReason::NoServer => "no_server",
            PendingReason::OriginDead => "origin_dead",
        }
    }
}

impl fmt::Display for PendingReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A job waiting in the controller's queue, retried every rebalance cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingJob {
    pub job: JobSpec,
    pub reason: PendingReason,
    pub since_tick: Tick,
}

/// Heartbeat bookkeeping for one server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LivenessRecord {
    pub server_id: ServerId,
    pub last_heartbeat_tick: Tick,
    pub alive: bool,
}

/// Live state of one cluster: capability specs, review entries and
/// liveness records in parallel (declaration order), plus the load digest.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub spec: ClusterSpec,
    pub reviews: Vec<ReviewEntry>,
    pub liveness: Vec<LivenessRecord>,
    pub load: LoadSummary,
}

impl ClusterState {
    fn new(spec: ClusterSpec) -> Self {
        let reviews: Vec<ReviewEntry> = spec.servers.iter().map(ReviewEntry::new).collect();
        let liveness = spec
            .servers
            .iter()
            .map(|s| LivenessRecord {
                server_id: s.server_id.clone(),
                last_heartbeat_tick: 0,
                alive: true,
            })
            .collect();
        let load = LoadSummary {
            cluster_id: spec.cluster_id.clone(),
            total_memory_left: reviews.iter().map(|r| r.memory_left).sum(),
            uneven_count: 0,
            last_update_tick: 0,
        };
        ClusterState {
            spec,
            reviews,
            liveness,
            load,
        }
    }
}

/// The whole system owned by one simulation instance: clusters in ascending
/// memory-range order, the pending queue, and the table of arrived jobs.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub config: SystemConfig,
    pub clusters: Vec<ClusterState>,
    pub pending: Vec<PendingJob>,
    /// All arrived, not-yet-completed jobs, keyed by id.
    pub jobs: BTreeMap<JobId, JobSpec>,
}

impl SystemState {
    pub fn new(config: SystemConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let clusters = config.clusters.iter().cloned().map(ClusterState::new).collect();
        Ok(SystemState {
            config,
            clusters,
            pending: Vec::new(),
            jobs: BTreeMap::new(),
        })
    }

    /// Locates a server as (cluster index, server index).
    pub fn find_server(&self, server_id: &ServerId) -> Option<(usize, usize)> {
        for (ci, cluster) in self.clusters.iter().enumerate() {
            for (si, entry) in cluster.reviews.iter().enumerate() {
                if entry.server_id == *server_id {
                    return Some((ci, si));
                }
            }
        }
        None
    }

    pub fn entry(&self, ci: usize, si: usize) -> &ReviewEntry {
        &self.clusters[ci].reviews[si]
    }

    pub fn entry_mut(&mut self, ci: usize, si: usize) -> &mut ReviewEntry {
        &mut self.clusters[ci].reviews[si]
    }

    pub fn is_alive(&self, ci: usize, si: usize) -> bool {
        self.clusters[ci].liveness[si].alive
    }

    /// Registers a newly arrived job in the job table.
    pub fn add_job(&mut self, job: JobSpec) -> Result<(), ModelError> {
        if self.jobs.contains_key(&job.job_id) {
            return Err(ModelError::DuplicateJobArrival(job.job_id));
        }
        self.jobs.insert(job.job_id.clone(), job);
        Ok(())
    }

    /// Drops a completed job from wherever it lives: a review entry or the
    /// pending queue, plus the job table.
    pub fn complete_job(&mut self, job_id: &JobId) -> Result<(), ModelError> {
        let job = self
            .jobs
            .get(job_id)
            .cloned()
            .ok_or_else(|| ModelError::UnknownJob(job_id.clone()))?;
        let mut found = false;
        'outer: for cluster in &mut self.clusters {
            for entry in &mut cluster.reviews {
                if entry.jobs_assigned.contains(job_id) {
                    entry.remove_assignment(&job)?;
                    found = true;
                    break 'outer;
                }
            }
        }
        if !found {
            if let Some(pos) = self.pending.iter().position(|p| p.job.job_id == *job_id) {
                self.pending.remove(pos);
                found = true;
            }
        }
        if !found {
            return Err(ModelError::UnknownJob(job_id.clone()));
        }
        self.jobs.remove(job_id);
        Ok(())
    }

    /// Recomputes every cluster's load summary as of `tick`.
    pub fn refresh_load_summaries(&mut self, tick: Tick) {
        for cluster in &mut self.clusters {
            cluster.load.total_memory_left = cluster.reviews.iter().map(|r| r.memory_left).sum();
            cluster.load.uneven_count = cluster
                .reviews
                .iter()
                .filter(|r| r.status == LoadStatus::Uneven)
                .count();
            cluster.load.last_update_tick = tick;
        }
    }

    /// Counts servers by status: (even, uneven, dead).
    pub fn status_counts(&self) -> (usize, usize, usize) {
        let mut even = 0;
        let mut uneven = 0;
        let mut dead = 0;
        for cluster in &self.clusters {
            for (si, entry) in cluster.reviews.iter().enumerate() {
                if !cluster.liveness[si].alive {
                    dead += 1;
                } else if entry.status == LoadStatus::Uneven {
                    uneven += 1;
                } else {
                    even += 1;
                }
            }
        }
        (even, uneven, dead)
    }

    /// Full consistency audit: memory conservation per entry, status
    /// consistency, and system-wide job uniqueness against the job table.
    pub fn audit(&self) -> Result<(), AuditViolation> {
        let mut seen: BTreeMap<JobId, String> = BTreeMap::new();
        for cluster in &self.clusters {
            for entry in &cluster.reviews {
                let mut charged: Mem = 0;
                for job_id in &entry.jobs_assigned {
                    let job = self
                        .jobs
                        .get(job_id)
                        .ok_or_else(|| AuditViolation::PhantomJob {
                            job_id: job_id.clone(),
                            location: entry.server_id.to_string(),
                        })?;
                    charged += job.memory_req;
                    if let Some(prev) =
                        seen.insert(job_id.clone(), entry.server_id.to_string())
                    {
                        return Err(AuditViolation::DuplicateJob {
                            job_id: job_id.clone(),
                            first: prev,
                            second: entry.server_id.to_string(),
                        });
                    }
                }
                let expected = entry.memory_capacity - charged;
                if entry.memory_left != expected {
                    return Err(AuditViolation::Conservation {
                        server_id: entry.server_id.clone(),
                        expected,
                        actual: entry.memory_left,
                    });
                }
                if entry.status != LoadStatus::from_memory_left(entry.memory_left) {
                    return Err(AuditViolation::Status {
                        server_id: entry.server_id.clone(),
                    });
                }
            }
        }
        for pending in &self.pending {
            let job_id = &pending.job.job_id;
            if !self.jobs.contains_key(job_id) {
                return Err(AuditViolation::PhantomJob {
                    job_id: job_id.clone(),
                    location: "pending".to_string(),
                });
            }
            if let Some(prev) = seen.insert(job_id.clone(), "pending".to_string()) {
                return Err(AuditViolation::DuplicateJob {
                    job_id: job_id.clone(),
                    first: prev,
                    second: "pending".to_string(),
                });
            }
        }
        for job_id in self.jobs.keys() {
            if !seen.contains_key(job_id) {
                return Err(AuditViolation::LostJob {
                    job_id: job_id.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditViolation {
    #[error("server {server_id}: memory_left {actual} but conservation requires {expected}")]
    Conservation {
        server_id: ServerId,
        expected: Mem,
        actual: Mem,
    },
    #[error("server {server_id}: status inconsistent with memory_left")]
    Status { server_id: ServerId },
    #[error("job {job_id} appears in both {first} and {second}")]
    DuplicateJob {
        job_id: JobId,
        first: String,
        second: String,
    },
    #[error("job {job_id} recorded at {location} but missing from the job table")]
    PhantomJob { job_id: JobId, location: String },
    #[error("job {job_id} arrived but is on no server and not pending")]
    LostJob { job_id: JobId },
}
