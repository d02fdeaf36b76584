//! Text output: per-cluster review-matrix tables, the one-line-per-event
//! trace, and the metrics summary. All pure functions of their inputs, so
//! identical runs render identical bytes.

use crate::metrics::MetricsReport;
use crate::model::SystemState;
use crate::trace::TraceEvent;

const REVIEW_HEADERS: [&str; 6] = [
    "WS_ID",
    "MEMORY",
    "PROCESSING_SPEED",
    "MEMORY_LEFT",
    "JOBS_ASSIGNED",
    "STATUS",
];

/// Table layout controls. `min_column_width` is cosmetic only.
#[derive(Debug, Clone, Copy, Default)]
pub struct TableOptions {
    pub min_column_width: usize,
}

/// Renders one table per cluster: columns WS_ID, MEMORY, PROCESSING_SPEED,
/// MEMORY_LEFT, JOBS_ASSIGNED (ids joined with `+`), STATUS.
pub fn render_review_matrix(state: &SystemState) -> String {
    render_review_matrix_with(state, TableOptions::default())
}

pub fn render_review_matrix_with(state: &SystemState, options: TableOptions) -> String {
    let mut out = String::new();
    for (index, cluster) in state.clusters.iter().enumerate() {
        if index > 0 {
            out.push('\n');
        }
        out.push_str(&format!(
            "Cluster {} (range {}-{})\n",
            cluster.spec.cluster_id, cluster.spec.memory_low, cluster.spec.memory_high
        ));
        let rows: Vec<[String; 6]> = cluster
            .reviews
            .iter()
            .map(|entry| {
                let jobs = entry
                    .jobs_assigned
                    .iter()
                    .map(|id| id.as_str())
                    .collect::<Vec<_>>()
                    .join("+");
                [
                    entry.server_id.to_string(),
                    entry.memory_capacity.to_string(),
                    entry.speed.to_string(),
                    entry.memory_left.to_string(),
                    jobs,
                    entry.status.to_string(),
                ]
            })
            .collect();
        let mut widths: [usize; 6] = REVIEW_HEADERS.map(|h| h.len().max(options.min_column_width));
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row.iter()) {
                *w = (*w).max(cell.len());
            }
        }
        let header_cells: Vec<String> = REVIEW_HEADERS
            .iter()
            .zip(widths.iter())
            .map(|(h, w)| format!("{h:<w$}"))
            .collect();
        out.push_str(header_cells.join("  ").trim_end());
        out.push('\n');
        for row in &rows {
            let cells: Vec<String> = row
                .iter()
                .zip(widths.iter())
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
    }
    out
}

/// One event per line, in emission order.
pub fn render_trace(trace: &[TraceEvent]) -> String {
    let mut out = String::new();
    for event in trace {
        out.push_str(&event.to_string());
        out.push('\n');
    }
    out
}

/// Flat `key=value` summary followed by the per-tick status histogram.
pub fn render_metrics(metrics: &MetricsReport) -> String {
    let mut out = String::new();
    let c = &metrics.comparisons;
    out.push_str(&format!("sorting_comparisons={}\n", c.sorting));
    out.push_str(&format!("sort_invocations={}\n", metrics.sort_invocations.len()));
    out.push_str(&format!(
        "assignment_cluster_comparisons={}\n",
        c.assignment_cluster
    ));
    out.push_str(&format!(
        "assignment_server_comparisons={}\n",
        c.assignment_server
    ));
    out.push_str(&format!("balance_within_comparisons={}\n", c.balance_within));
    out.push_str(&format!("balance_cross_comparisons={}\n", c.balance_cross));
    out.push_str(&format!("jobs_assigned={}\n", metrics.assignments.len()));
    out.push_str(&format!("balance_attempts={}\n", metrics.balance_attempts.len()));
    out.push_str(&format!("moves={}\n", metrics.moves));
    out.push_str(&format!("unresolved={}\n", metrics.unresolved));
    out.push_str(&format!("pending_end={}\n", metrics.pending_end));
    for status in &metrics.status_histogram {
        out.push_str(&format!(
            "tick={} even={} uneven={} dead={}\n",
            status.tick, status.even, status.uneven, status.dead
        ));
    }
    out
}
