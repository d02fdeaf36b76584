//! Trace events: one line per event, fields in a fixed order so reruns of
//! the same scenario are byte-identical.

use std::fmt;

use crate::model::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    ClusterMatched,
    ServerSelected,
    OverCommit,
    JobPending,
    Move,
    Rejection,
    Unresolved,
    ServerDead,
    JobMigrated,
    JobOrphanedPending,
    ServerRevived,
    JobCompleted,
}

impl TraceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceKind::ClusterMatched => "cluster_matched",
            TraceKind::ServerSelected => "server_selected",
            TraceKind::OverCommit => "over_commit",
            TraceKind::JobPending => "job_pending",
            TraceKind::Move => "move",
            TraceKind::Rejection => "rejection",
            TraceKind::Unresolved => "unresolved",
            TraceKind::ServerDead => "server_dead",
            TraceKind::JobMigrated => "job_migrated",
            TraceKind::JobOrphanedPending => "job_orphaned_pending",
            TraceKind::ServerRevived => "server_revived",
            TraceKind::JobCompleted => "job_completed",
        }
    }
}

/// One timed event with ordered key-value details.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub tick: Tick,
    pub kind: TraceKind,
    pub fields: Vec<(&'static str, String)>,
}

impl TraceEvent {
    pub fn new(tick: Tick, kind: TraceKind) -> Self {
        TraceEvent {
            tick,
            kind,
            fields: Vec::new(),
        }
    }

    pub fn field(mut self, key: &'static str, value: impl fmt::Display) -> Self {
        self.fields.push((key, value.to_string()));
        self
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick={} event={}", self.tick, self.kind.as_str())?;
        for (key, value) in &self.fields {
            write!(f, " {key}={value}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_fields_in_insertion_order() {
        let ev = TraceEvent::new(3, TraceKind::Move)
            .field("job", "J7")
            .field("from", "WS1.1")
            .field("to", "WS2.2");
        assert_eq!(ev.to_string(), "tick=3 event=move job=J7 from=WS1.1 to=WS2.2");
    }
}
