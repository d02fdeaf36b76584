//! The `.scn` scenario file format: a line-oriented text format declaring
//! the run horizon, heartbeat period, seed, topology and timed events.
//!
//! Grammar (one directive per line, `#` starts a comment, blank lines
//! ignored; ids use `[A-Za-z0-9._-]`; topology must be declared before the
//! events that reference it):
//!
//! ```text
//! ticks <last-tick>
//! heartbeat <period>
//! seed <u64>                                  # optional, default 0
//! cluster <id> range <low> <high>             # ascending, non-overlapping
//! server <id> cluster <cid> memory <m> speed <s>
//! at <tick> arrive <job> memory <m> speed <s>
//! at <tick> fail <server>
//! at <tick> recover <server>
//! at <tick> complete <job>
//! ```
//!
//! Event ticks must be non-decreasing. Parsing collects every error it can
//! find, each tagged with a line number and a stable error code.

use std::collections::BTreeMap;
use std::fmt;

use crate::model::{
    ClusterId, ClusterSpec, JobId, JobSpec, Mem, ServerId, ServerSpec, SystemConfig, Tick,
};
use crate::simulator::{Scenario, SimEvent};

/// Stable error codes for scenario validation failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    Syntax,
    DuplicateId,
    UnknownId,
    Range,
    Value,
    EventOrder,
    Missing,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::Syntax => "E_SYNTAX",
            ErrorCode::DuplicateId => "E_DUP_ID",
            ErrorCode::UnknownId => "E_UNKNOWN_ID",
            ErrorCode::Range => "E_RANGE",
            ErrorCode::Value => "E_VALUE",
            ErrorCode::EventOrder => "E_EVENT_ORDER",
            ErrorCode::Missing => "E_MISSING",
        }
    }
}

/// One validation failure, with the offending line when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioError {
    pub line: Option<usize>,
    pub code: ErrorCode,
    pub message: String,
}

impl ScenarioError {
    pub fn lined(line: usize, code: ErrorCode, message: impl Into<String>) -> Self {
        ScenarioError {
            line: Some(line),
            code,
            message: message.into(),
        }
    }

    pub fn unlined(code: ErrorCode, message: impl Into<String>) -> Self {
        ScenarioError {
            line: None,
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.code.as_str(), self.message),
            None => write!(f, "{}: {}", self.code.as_str(), self.message),
        }
    }
}

fn valid_id(token: &str) -> bool {
    !token.is_empty()
        && token
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-')
}

struct Parser {
    errors: Vec<ScenarioError>,
    last_tick: Option<Tick>,
    heartbeat: Option<Tick>,
    seed: Option<u64>,
    clusters: Vec<ClusterSpec>,
    events: Vec<SimEvent>,
    job_arrivals: BTreeMap<JobId, Tick>,
    prev_event_tick: Tick,
}

/// Parses scenario text, returning either the scenario or every error found.
pub fn parse_scenario(text: &str) -> Result<Scenario, Vec<ScenarioError>> {
    let mut p = Parser {
        errors: Vec::new(),
        last_tick: None,
        heartbeat: None,
        seed: None,
        clusters: Vec::new(),
        events: Vec::new(),
        job_arrivals: BTreeMap::new(),
        prev_event_tick: 0,
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        match tokens[0] {
            "ticks" => p.parse_ticks(line_no, &tokens),
            "heartbeat" => p.parse_heartbeat(line_no, &tokens),
            "seed" => p.parse_seed(line_no, &tokens),
            "cluster" => p.parse_cluster(line_no, &tokens),
            "server" => p.parse_server(line_no, &tokens),
            "at" => p.parse_event(line_no, &tokens),
            other => p.errors.push(ScenarioError::lined(
                line_no,
                ErrorCode::Syntax,
                format!("unknown directive '{other}'"),
            )),
        }
    }

    p.finish()
}

impl Parser {
    fn int<T: std::str::FromStr>(&mut self, line: usize, token: &str, what: &str) -> Option<T> {
        match token.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(ScenarioError::lined(
                    line,
                    ErrorCode::Syntax,
                    format!("cannot parse {what} from '{token}'"),
                ));
                None
            }
        }
    }

    fn id(&mut self, line: usize, token: &str, what: &str) -> Option<String> {
        if valid_id(token) {
            Some(token.to_string())
        } else {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::Syntax,
                format!("invalid {what} id '{token}'"),
            ));
            None
        }
    }

    fn expect_shape(&mut self, line: usize, tokens: &[&str], shape: &str, len: usize) -> bool {
        if tokens.len() == len {
            true
        } else {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::Syntax,
                format!("expected '{shape}'"),
            ));
            false
        }
    }

    fn expect_keyword(&mut self, line: usize, token: &str, keyword: &str) -> bool {
        if token == keyword {
            true
        } else {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::Syntax,
                format!("expected keyword '{keyword}', found '{token}'"),
            ));
            false
        }
    }

    fn parse_ticks(&mut self, line: usize, tokens: &[&str]) {
        if !self.expect_shape(line, tokens, "ticks <last-tick>", 2) {
            return;
        }
        if self.last_tick.is_some() {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::DuplicateId,
                "duplicate 'ticks' directive",
            ));
            return;
        }
        self.last_tick = self.int(line, tokens[1], "tick count");
    }

    fn parse_heartbeat(&mut self, line: usize, tokens: &[&str]) {
        if !self.expect_shape(line, tokens, "heartbeat <period>", 2) {
            return;
        }
        if self.heartbeat.is_some() {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::DuplicateId,
                "duplicate 'heartbeat' directive",
            ));
            return;
        }
        match self.int::<Tick>(line, tokens[1], "heartbeat period") {
            Some(0) => self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::Value,
                "heartbeat period must be at least 1",
            )),
            Some(t) => self.heartbeat = Some(t),
            None => {}
        }
    }

    fn parse_seed(&mut self, line: usize, tokens: &[&str]) {
        if !self.expect_shape(line, tokens, "seed <u64>", 2) {
            return;
        }
        if self.seed.is_some() {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::DuplicateId,
                "duplicate 'seed' directive",
            ));
            return;
        }
        self.seed = self.int(line, tokens[1], "seed");
    }

    fn parse_cluster(&mut self, line: usize, tokens: &[&str]) {
        if !self.expect_shape(line, tokens, "cluster <id> range <low> <high>", 5) {
            return;
        }
        let Some(id) = self.id(line, tokens[1], "cluster") else {
            return;
        };
        if !self.expect_keyword(line, tokens[2], "range") {
            return;
        }
        let (Some(low), Some(high)) = (
            self.int::<Mem>(line, tokens[3], "range low"),
            self.int::<Mem>(line, tokens[4], "range high"),
        ) else {
            return;
        };
        let cluster_id = ClusterId::new(id);
        if self.clusters.iter().any(|c| c.cluster_id == cluster_id) {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::DuplicateId,
                format!("duplicate cluster id {cluster_id}"),
            ));
            return;
        }
        if low < 0 || low >= high {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::Range,
                format!("cluster {cluster_id} range [{low}, {high}] is invalid"),
            ));
            return;
        }
        if let Some(prev) = self.clusters.last() {
            if low < prev.memory_high {
                self.errors.push(ScenarioError::lined(
                    line,
                    ErrorCode::Range,
                    format!(
                        "cluster {cluster_id} range [{low}, {high}] must start at or above {} (clusters are declared in ascending range order)",
                        prev.memory_high
                    ),
                ));
                return;
            }
        }
        self.clusters.push(ClusterSpec {
            cluster_id,
            memory_low: low,
            memory_high: high,
            servers: Vec::new(),
        });
    }

    fn parse_server(&mut self, line: usize, tokens: &[&str]) {
        if !self.expect_shape(
            line,
            tokens,
            "server <id> cluster <cid> memory <m> speed <s>",
            8,
        ) {
            return;
        }
        let Some(id) = self.id(line, tokens[1], "server") else {
            return;
        };
        if !self.expect_keyword(line, tokens[2], "cluster") {
            return;
        }
        let Some(cluster_id) = self.id(line, tokens[3], "cluster") else {
            return;
        };
        if !self.expect_keyword(line, tokens[4], "memory")
            || !self.expect_keyword(line, tokens[6], "speed")
        {
            return;
        }
        let (Some(memory), Some(speed)) = (
            self.int::<Mem>(line, tokens[5], "memory"),
            self.int::<Mem>(line, tokens[7], "speed"),
        ) else {
            return;
        };
        let server_id = ServerId::new(id);
        let cluster_id = ClusterId::new(cluster_id);
        if self
            .clusters
            .iter()
            .flat_map(|c| c.servers.iter())
            .any(|s| s.server_id == server_id)
        {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::DuplicateId,
                format!("duplicate server id {server_id}"),
            ));
            return;
        }
        if memory <= 0 || speed <= 0 {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::Value,
                format!("server {server_id} memory and speed must be positive"),
            ));
            return;
        }
        let Some(cluster) = self
            .clusters
            .iter_mut()
            .find(|c| c.cluster_id == cluster_id)
        else {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::UnknownId,
                format!("server {server_id} references unknown cluster {cluster_id} (clusters must be declared first)"),
            ));
            return;
        };
        if memory < cluster.memory_low || memory > cluster.memory_high {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::Range,
                format!(
                    "server {server_id} memory {memory} outside cluster {cluster_id} range [{}, {}]",
                    cluster.memory_low, cluster.memory_high
                ),
            ));
            return;
        }
        cluster.servers.push(ServerSpec {
            server_id,
            cluster_id,
            memory_capacity: memory,
            speed,
        });
    }

    fn parse_event(&mut self, line: usize, tokens: &[&str]) {
        if tokens.len() < 3 {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::Syntax,
                "expected 'at <tick> <arrive|fail|recover|complete> ...'",
            ));
            return;
        }
        let Some(tick) = self.int::<Tick>(line, tokens[1], "tick") else {
            return;
        };
        if tick < self.prev_event_tick {
            self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::EventOrder,
                format!(
                    "event at tick {tick} listed after an event at tick {}",
                    self.prev_event_tick
                ),
            ));
            return;
        }
        self.prev_event_tick = tick;
        match tokens[2] {
            "arrive" => {
                if !self.expect_shape(
                    line,
                    tokens,
                    "at <tick> arrive <job> memory <m> speed <s>",
                    8,
                ) {
                    return;
                }
                let Some(id) = self.id(line, tokens[3], "job") else {
                    return;
                };
                if !self.expect_keyword(line, tokens[4], "memory")
                    || !self.expect_keyword(line, tokens[6], "speed")
                {
                    return;
                }
                let (Some(memory), Some(speed)) = (
                    self.int::<Mem>(line, tokens[5], "memory"),
                    self.int::<Mem>(line, tokens[7], "speed"),
                ) else {
                    return;
                };
                let job_id = JobId::new(id);
                if self.job_arrivals.contains_key(&job_id) {
                    self.errors.push(ScenarioError::lined(
                        line,
                        ErrorCode::DuplicateId,
                        format!("duplicate job id {job_id}"),
                    ));
                    return;
                }
                if memory <= 0 || speed <= 0 {
                    self.errors.push(ScenarioError::lined(
                        line,
                        ErrorCode::Value,
                        format!("job {job_id} memory and speed must be positive"),
                    ));
                    return;
                }
                self.job_arrivals.insert(job_id.clone(), tick);
                self.events.push(SimEvent::JobArrival(
                    tick,
                    JobSpec {
                        job_id,
                        memory_req: memory,
                        speed_req: speed,
                    },
                ));
            }
            "fail" | "recover" => {
                if !self.expect_shape(line, tokens, "at <tick> fail|recover <server>", 4) {
                    return;
                }
                let Some(id) = self.id(line, tokens[3], "server") else {
                    return;
                };
                let server_id = ServerId::new(id);
                if !self
                    .clusters
                    .iter()
                    .flat_map(|c| c.servers.iter())
                    .any(|s| s.server_id == server_id)
                {
                    self.errors.push(ScenarioError::lined(
                        line,
                        ErrorCode::UnknownId,
                        format!("unknown server {server_id} (servers must be declared first)"),
                    ));
                    return;
                }
                self.events.push(if tokens[2] == "fail" {
                    SimEvent::ServerFail(tick, server_id)
                } else {
                    SimEvent::ServerRecover(tick, server_id)
                });
            }
            "complete" => {
                if !self.expect_shape(line, tokens, "at <tick> complete <job>", 4) {
                    return;
                }
                let Some(id) = self.id(line, tokens[3], "job") else {
                    return;
                };
                let job_id = JobId::new(id);
                match self.job_arrivals.get(&job_id) {
                    None => {
                        self.errors.push(ScenarioError::lined(
                            line,
                            ErrorCode::UnknownId,
                            format!("completion of unknown job {job_id}"),
                        ));
                        return;
                    }
                    Some(arrival) if *arrival >= tick => {
                        self.errors.push(ScenarioError::lined(
                            line,
                            ErrorCode::EventOrder,
                            format!(
                                "job {job_id} completes at tick {tick} but arrives at {arrival}"
                            ),
                        ));
                        return;
                    }
                    Some(_) => {}
                }
                self.events.push(SimEvent::JobComplete(tick, job_id));
            }
            other => self.errors.push(ScenarioError::lined(
                line,
                ErrorCode::Syntax,
                format!("unknown event kind '{other}'"),
            )),
        }
    }

    fn finish(mut self) -> Result<Scenario, Vec<ScenarioError>> {
        if self.clusters.is_empty() {
            self.errors.push(ScenarioError::unlined(
                ErrorCode::Missing,
                "no clusters defined",
            ));
        }
        if self.last_tick.is_none() {
            self.errors.push(ScenarioError::unlined(
                ErrorCode::Missing,
                "missing 'ticks' directive",
            ));
        }
        if self.heartbeat.is_none() {
            self.errors.push(ScenarioError::unlined(
                ErrorCode::Missing,
                "missing 'heartbeat' directive",
            ));
        }
        if let Some(last_tick) = self.last_tick {
            for event in &self.events {
                if event.tick() > last_tick {
                    self.errors.push(ScenarioError::unlined(
                        ErrorCode::EventOrder,
                        format!(
                            "event at tick {} is past the horizon {last_tick}",
                            event.tick()
                        ),
                    ));
                }
            }
        }
        if !self.errors.is_empty() {
            return Err(self.errors);
        }
        let config = SystemConfig::new(self.heartbeat.unwrap(), self.clusters)
            .map_err(|e| vec![ScenarioError::unlined(ErrorCode::Value, e.to_string())])?;
        Ok(Scenario {
            config,
            events: self.events,
            last_tick: self.last_tick.unwrap(),
            seed: self.seed.unwrap_or(0),
        })
    }
}

/// Renders a scenario in canonical form; parsing the result yields an equal
/// scenario.
pub fn render_scenario(scenario: &Scenario) -> String {
    let mut out = String::new();
    out.push_str(&format!("ticks {}\n", scenario.last_tick));
    out.push_str(&format!("heartbeat {}\n", scenario.config.heartbeat_period));
    out.push_str(&format!("seed {}\n", scenario.seed));
    for cluster in &scenario.config.clusters {
        out.push('\n');
        out.push_str(&format!(
            "cluster {} range {} {}\n",
            cluster.cluster_id, cluster.memory_low, cluster.memory_high
        ));
        for server in &cluster.servers {
            out.push_str(&format!(
                "server {} cluster {} memory {} speed {}\n",
                server.server_id, server.cluster_id, server.memory_capacity, server.speed
            ));
        }
    }
    if !scenario.events.is_empty() {
        out.push('\n');
    }
    for event in &scenario.events {
        match event {
            SimEvent::JobArrival(t, job) => out.push_str(&format!(
                "at {t} arrive {} memory {} speed {}\n",
                job.job_id, job.memory_req, job.speed_req
            )),
            SimEvent::ServerFail(t, id) => out.push_str(&format!("at {t} fail {id}\n")),
            SimEvent::ServerRecover(t, id) => out.push_str(&format!("at {t} recover {id}\n")),
            SimEvent::JobComplete(t, id) => out.push_str(&format!("at {t} complete {id}\n")),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golden;
    use proptest::prelude::*;

    #[test]
    fn parses_the_shipped_reference_scenario() {
        let scenario = parse_scenario(golden::SCENARIO_TEXT).unwrap();
        assert_eq!(scenario.config, golden::config());
        assert_eq!(scenario.last_tick, 5);
        assert_eq!(scenario.seed, 0);
        assert_eq!(scenario.events.len(), 7);
        assert_eq!(
            scenario.events[0],
            SimEvent::JobArrival(0, JobSpec::new("J1", 1500, 80))
        );
    }

    #[test]
    fn empty_file_reports_missing_sections() {
        let errors = parse_scenario("").unwrap_err();
        assert!(errors
            .iter()
            .any(|e| e.code == ErrorCode::Missing && e.message.contains("no clusters")));
    }

    #[test]
    fn server_outside_cluster_range_is_an_error() {
        let text = "ticks 5\nheartbeat 5\ncluster C1 range 0 1000\nserver W cluster C1 memory 1500 speed 60\n";
        let errors = parse_scenario(text).unwrap_err();
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].code, ErrorCode::Range);
        assert_eq!(errors[0].line, Some(4));
    }

    #[test]
    fn duplicate_ids_are_errors() {
        let text = "ticks 5\nheartbeat 5\ncluster C1 range 0 1000\nserver W cluster C1 memory 500 speed 60\nserver W cluster C1 memory 600 speed 60\n";
        let errors = parse_scenario(text).unwrap_err();
        assert!(errors.iter().any(|e| e.code == ErrorCode::DuplicateId));
    }

    #[test]
    fn out_of_order_events_are_errors() {
        let text = "ticks 5\nheartbeat 5\ncluster C1 range 0 1000\nserver W cluster C1 memory 500 speed 60\nat 3 arrive A memory 100 speed 10\nat 1 arrive B memory 100 speed 10\n";
        let errors = parse_scenario(text).unwrap_err();
        assert!(errors.iter().any(|e| e.code == ErrorCode::EventOrder));
    }

    #[test]
    fn unknown_server_in_event_is_an_error() {
        let text = "ticks 5\nheartbeat 5\ncluster C1 range 0 1000\nat 0 fail W9\n";
        let errors = parse_scenario(text).unwrap_err();
        assert!(errors.iter().any(|e| e.code == ErrorCode::UnknownId));
    }

    #[test]
    fn malformed_integers_are_syntax_errors() {
        let text = "ticks five\nheartbeat 5\ncluster C1 range 0 1000\n";
        let errors = parse_scenario(text).unwrap_err();
        assert!(errors.iter().any(|e| e.code == ErrorCode::Syntax));
    }

    #[test]
    fn completion_must_follow_arrival() {
        let text = "ticks 5\nheartbeat 5\ncluster C1 range 0 1000\nserver W cluster C1 memory 500 speed 60\nat 2 arrive A memory 100 speed 10\nat 2 complete A\n";
        let errors = parse_scenario(text).unwrap_err();
        assert!(errors.iter().any(|e| e.code == ErrorCode::EventOrder));
    }

    #[test]
    fn reference_scenario_round_trips() {
        let scenario = parse_scenario(golden::SCENARIO_TEXT).unwrap();
        let rendered = render_scenario(&scenario);
        let reparsed = parse_scenario(&rendered).unwrap();
        assert_eq!(scenario, reparsed);
    }

    proptest! {
        #[test]
        fn generated_scenarios_round_trip(
            heartbeat in 1u64..10,
            widths in proptest::collection::vec((1i64..500, 0usize..4), 1..4),
            job_count in 0usize..8,
        ) {
            // Contiguous ascending ranges with a few servers each.
            let mut clusters = Vec::new();
            let mut low = 0i64;
            for (ci, (width, server_count)) in widths.iter().enumerate() {
                let high = low + width;
                let cluster_id = ClusterId::new(format!("C{ci}"));
                let servers = (0..*server_count)
                    .map(|si| ServerSpec {
                        server_id: ServerId::new(format!("S{ci}.{si}")),
                        cluster_id: cluster_id.clone(),
                        memory_capacity: high,
                        speed: 10 + si as i64,
                    })
                    .collect();
                clusters.push(ClusterSpec {
                    cluster_id,
                    memory_low: low,
                    memory_high: high,
                    servers,
                });
                low = high;
            }
            let events: Vec<SimEvent> = (0..job_count)
                .map(|i| SimEvent::JobArrival(i as u64, JobSpec::new(format!("J{i}"), 1 + i as i64, 5)))
                .collect();
            let scenario = Scenario {
                config: SystemConfig::new(heartbeat, clusters).unwrap(),
                last_tick: job_count as u64 + 5,
                seed: 42,
                events,
            };
            let reparsed = parse_scenario(&render_scenario(&scenario)).unwrap();
            prop_assert_eq!(scenario, reparsed);
        }
    }
}
