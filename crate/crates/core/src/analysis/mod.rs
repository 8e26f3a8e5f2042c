//! Reports over finished runs: evaluation statistics, link flows, day-over-day metrics
//! and congestion snapshots.

mod reports;
mod snapshot;
mod stats;

use thiserror::Error;

pub use reports::{compare_days, daily_link_volumes, link_flow_report, peak_onset, CompareOptions, DaySeries, LinkFlowReport, Metric, RunData};
pub use snapshot::{level_color, parse_snapshot_time, render_png, snapshot_at, snapshot_export, LinkSnapshot, SnapshotFormat, SnapshotRequest};
pub use stats::{binomial_upper_tail, eval_stats, EvalCounts, EvalOptions, EvalStats, TieHandling};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no decisive outcomes")]
    NoDecisiveOutcomes,
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("unknown link {link}; valid links: {}", .valid.join(", "))]
    UnknownLink { link: String, valid: Vec<String> },
    #[error("unknown metric `{0}` (mean_arrival_delay, punctual_count or peak_onset)")]
    UnknownMetric(String),
    #[error("time {0} is outside the day (00:00-23:59)")]
    TimeOutOfRange(String),
    #[error("day {day} is outside the run ({days} days)")]
    DayOutOfRange { day: u32, days: u32 },
    #[error("no run found at {0}")]
    MissingRun(String),
    #[error("{0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
}
