//! The bundled reference scenario — seven jobs over two clusters of three
//! web servers — and the expected review-matrix snapshots at its three
//! checkpoints: before any assignment, after the tick-0 assignments, and
//! after the tick-5 rebalance cycle. `check()` replays the scenario and
//! diffs each snapshot.

use crate::model::{
    ClusterId, ClusterSpec, JobSpec, ServerId, ServerSpec, SystemConfig, SystemState,
};
use crate::render::render_review_matrix;
use crate::scenario::parse_scenario;
use crate::simulator::{RunOptions, Simulation};

/// Text of the shipped `scenarios/paper_tables.scn`.
pub const SCENARIO_TEXT: &str = include_str!("../../../scenarios/paper_tables.scn");

/// Review matrix before any job arrives.
pub const TABLE_INITIAL: &str = "\
Cluster C1 (range 0-1000)
WS_ID  MEMORY  PROCESSING_SPEED  MEMORY_LEFT  JOBS_ASSIGNED  STATUS
WS1.1  500     60                500                         EVEN
WS1.2  700     70                700                         EVEN
WS1.3  1000    100               1000                        EVEN

Cluster C2 (range 1000-2000)
WS_ID  MEMORY  PROCESSING_SPEED  MEMORY_LEFT  JOBS_ASSIGNED  STATUS
WS2.1  1200    50                1200                        EVEN
WS2.2  1500    70                1500                        EVEN
WS2.3  1800    80                1800                        EVEN
";

/// Review matrix after the seven tick-0 assignments, before rebalancing.
pub const TABLE_AFTER_ASSIGNMENT: &str = "\
Cluster C1 (range 0-1000)
WS_ID  MEMORY  PROCESSING_SPEED  MEMORY_LEFT  JOBS_ASSIGNED  STATUS
WS1.1  500     60                -500         J2+J7          UNEVEN
WS1.2  700     70                -600         J5+J6          UNEVEN
WS1.3  1000    100               0            J3             EVEN

Cluster C2 (range 1000-2000)
WS_ID  MEMORY  PROCESSING_SPEED  MEMORY_LEFT  JOBS_ASSIGNED  STATUS
WS2.1  1200    50                0            J4             EVEN
WS2.2  1500    70                1500                        EVEN
WS2.3  1800    80                300          J1             EVEN
";

/// Review matrix after the tick-5 rebalance cycle: J6 and J7 moved to
/// WS2.2 and every server is EVEN again.
pub const TABLE_AFTER_REBALANCE: &str = "\
Cluster C1 (range 0-1000)
WS_ID  MEMORY  PROCESSING_SPEED  MEMORY_LEFT  JOBS_ASSIGNED  STATUS
WS1.1  500     60                0            J2             EVEN
WS1.2  700     70                100          J5             EVEN
WS1.3  1000    100               0            J3             EVEN

Cluster C2 (range 1000-2000)
WS_ID  MEMORY  PROCESSING_SPEED  MEMORY_LEFT  JOBS_ASSIGNED  STATUS
WS2.1  1200    50                0            J4             EVEN
WS2.2  1500    70                300          J6+J7          EVEN
WS2.3  1800    80                300          J1             EVEN
";

fn server(id: &str, cluster: &str, memory: i64, speed: i64) -> ServerSpec {
    ServerSpec {
        server_id: ServerId::new(id),
        cluster_id: ClusterId::new(cluster),
        memory_capacity: memory,
        speed,
    }
}

/// The reference topology: cluster C1 covering memory 0-1000, cluster C2
/// covering 1000-2000, three servers each, heartbeat period 5.
pub fn config() -> SystemConfig {
    SystemConfig::new(
        5,
        vec![
            ClusterSpec {
                cluster_id: ClusterId::new("C1"),
                memory_low: 0,
                memory_high: 1000,
                servers: vec![
                    server("WS1.1", "C1", 500, 60),
                    server("WS1.2", "C1", 700, 70),
                    server("WS1.3", "C1", 1000, 100),
                ],
            },
            ClusterSpec {
                cluster_id: ClusterId::new("C2"),
                memory_low: 1000,
                memory_high: 2000,
                servers: vec![
                    server("WS2.1", "C2", 1200, 50),
                    server("WS2.2", "C2", 1500, 70),
                    server("WS2.3", "C2", 1800, 80),
                ],
            },
        ],
    )
    .expect("reference topology is valid")
}

/// The seven reference jobs in arrival order.
pub fn jobs() -> Vec<JobSpec> {
    vec![
        JobSpec::new("J1", 1500, 80),
        JobSpec::new("J2", 500, 50),
        JobSpec::new("J3", 1000, 90),
        JobSpec::new("J4", 1200, 40),
        JobSpec::new("J5", 600, 50),
        JobSpec::new("J6", 700, 60),
        JobSpec::new("J7", 500, 60),
    ]
}

/// One snapshot mismatch: which checkpoint, what was expected, what came out.
#[derive(Debug, Clone)]
pub struct GoldenMismatch {
    pub checkpoint: &'static str,
    pub expected: String,
    pub actual: String,
}

/// Replays the bundled scenario and compares the review matrix at each of
/// the three checkpoints. Returns every mismatch found.
pub fn check() -> Result<(), Vec<GoldenMismatch>> {
    let mut mismatches = Vec::new();
    let mut record = |checkpoint: &'static str, expected: &str, actual: String| {
        if expected != actual {
            mismatches.push(GoldenMismatch {
                checkpoint,
                expected: expected.to_string(),
                actual,
            });
        }
    };

    let scenario = match parse_scenario(SCENARIO_TEXT) {
        Ok(s) => s,
        Err(errors) => {
            return Err(vec![GoldenMismatch {
                checkpoint: "scenario",
                expected: "a parseable bundled scenario".to_string(),
                actual: errors
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("\n"),
            }]);
        }
    };

    let initial = SystemState::new(scenario.config.clone()).expect("validated config");
    record("initial", TABLE_INITIAL, render_review_matrix(&initial));

    let mut sim = match Simulation::new(
        scenario,
        RunOptions {
            audit: true,
            ..RunOptions::default()
        },
    ) {
        Ok(sim) => sim,
        Err(e) => {
            return Err(vec![GoldenMismatch {
                checkpoint: "simulation",
                expected: "a runnable bundled scenario".to_string(),
                actual: e.to_string(),
            }]);
        }
    };
    if let Err(e) = sim.step() {
        return Err(vec![GoldenMismatch {
            checkpoint: "after-assignment",
            expected: "tick 0 to execute".to_string(),
            actual: e.to_string(),
        }]);
    }
    record(
        "after-assignment",
        TABLE_AFTER_ASSIGNMENT,
        render_review_matrix(sim.state()),
    );
    if let Err(e) = sim.run_to_end() {
        return Err(vec![GoldenMismatch {
            checkpoint: "after-rebalance",
            expected: "ticks 1-5 to execute".to_string(),
            actual: e.to_string(),
        }]);
    }
    record(
        "after-rebalance",
        TABLE_AFTER_REBALANCE,
        render_review_matrix(sim.state()),
    );

    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(mismatches)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_matches_builders() {
        let scenario = parse_scenario(SCENARIO_TEXT).unwrap();
        assert_eq!(scenario.config, config());
        let arrivals: Vec<JobSpec> = scenario
            .events
            .iter()
            .map(|e| match e {
                crate::simulator::SimEvent::JobArrival(0, job) => job.clone(),
                other => panic!("unexpected event {other:?}"),
            })
            .collect();
        assert_eq!(arrivals, jobs());
    }

    #[test]
    fn all_three_checkpoints_match() {
        check().unwrap();
    }
}
