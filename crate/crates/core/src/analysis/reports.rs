use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::net::{CongestionLevel, NetworkGraph};
use crate::sim::{RunInfo, RunLog};
use crate::{Tick, MINUTES_PER_DAY};

/// Logs and metadata of a finished (or checkpointed) run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub info: RunInfo,
    pub log: RunLog,
    pub graph: NetworkGraph,
}

impl RunData {
    /// Reads `run.json` and the log files from `dir`.
    pub fn load(dir: &Path) -> Result<Self, AnalysisError> {
        if !dir.join(crate::sim::RUN_FILE).exists() {
            return Err(AnalysisError::MissingRun(dir.display().to_string()));
        }
        let info = RunInfo::read(dir)?;
        let log = RunLog::read_dir(dir)?;
        let graph = match &info.network {
            Some(p) => NetworkGraph::from_path(p)?,
            None => NetworkGraph::nguyen_dupuis(),
        };
        let graph = match info.road_capacity {
            Some(c) => graph.with_road_capacity(c),
            None => graph,
        };
        Ok(RunData { info, log, graph })
    }

    /// Snapshot of a world's logs, for in-process reports.
    pub fn from_world(w: &crate::sim::World) -> Self {
        RunData { info: w.run_info(None), log: w.log().clone(), graph: w.graph().clone() }
    }

    pub fn days(&self) -> u32 {
        self.info.days
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkFlowReport {
    pub link: String,
    pub day: u32,
    /// Link entries during the day.
    pub entries: usize,
    /// Distinct agents that entered the link.
    pub agents: usize,
}

pub fn link_flow_report(log: &RunLog, graph: &NetworkGraph, link: &str, day: u32) -> Result<LinkFlowReport, AnalysisError> {
    if graph.link_idx(link).is_none() {
        return Err(AnalysisError::UnknownLink {
            link: link.to_string(),
            valid: graph.links().iter().map(|l| l.id.clone()).collect(),
        });
    }
    let mut agents = BTreeSet::new();
    let mut entries = 0;
    for (t, agent, l) in log.link_entries() {
        if l == link && t / MINUTES_PER_DAY == day {
            entries += 1;
            agents.insert(agent);
        }
    }
    Ok(LinkFlowReport { link: link.to_string(), day, entries, agents: agents.len() })
}

/// Entries per link for one day, every link of the network included.
pub fn daily_link_volumes(log: &RunLog, graph: &NetworkGraph, day: u32) -> BTreeMap<String, usize> {
    let mut out: BTreeMap<String, usize> = graph.links().iter().map(|l| (l.id.clone(), 0)).collect();
    for (t, _, l) in log.link_entries() {
        if t / MINUTES_PER_DAY == day {
            *out.entry(l.to_string()).or_default() += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Mean minutes past the due time over trips that had one (early arrivals count 0).
    MeanArrivalDelay,
    /// Work arrivals at or before the work start.
    PunctualCount,
    /// First minute of the day at which the non-free share of road links reaches the
    /// threshold.
    PeakOnset,
}

impl std::str::FromStr for Metric {
    type Err = AnalysisError;
    fn from_str(s: &str) -> Result<Self, AnalysisError> {
        match s {
            "mean_arrival_delay" => Ok(Metric::MeanArrivalDelay),
            "punctual_count" => Ok(Metric::PunctualCount),
            "peak_onset" => Ok(Metric::PeakOnset),
            other => Err(AnalysisError::UnknownMetric(other.to_string())),
        }
    }
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::MeanArrivalDelay => "mean_arrival_delay",
            Metric::PunctualCount => "punctual_count",
            Metric::PeakOnset => "peak_onset",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// Share of road links that must be non-free for the peak to have begun.
    pub peak_threshold: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { peak_threshold: 0.25 }
    }
}

/// One value per day; `None` when the metric is undefined that day (no due trips, or no
/// peak).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySeries {
    pub metric: Metric,
    pub values: Vec<Option<f64>>,
}

fn day_of(t: chrono::NaiveDateTime, start: chrono::NaiveDate) -> i64 {
    (t.date() - start).num_days()
}

pub fn compare_days(run: &RunData, metric: Metric, opts: &CompareOptions) -> DaySeries {
    let days = run.days();
    let start = run.info.start_date;
    let values = (0..days)
        .map(|d| match metric {
            Metric::MeanArrivalDelay => {
                let lates: Vec<f64> = run
                    .log
                    .trips
                    .iter()
                    .filter(|t| t.due.is_some() && day_of(t.depart, start) == i64::from(d))
                    .map(|t| match (t.arrive, t.due) {
                        (Some(a), Some(due)) => (a - due).num_minutes().max(0) as f64,
                        // An unfinished trip is late by at least until midnight.
                        (None, Some(due)) => (start + chrono::Days::new(u64::from(d) + 1)).and_hms_opt(0, 0, 0).map(|m| (m - due).num_minutes().max(0) as f64).unwrap_or(0.0),
                        _ => 0.0,
                    })
                    .collect();
                (!lates.is_empty()).then(|| lates.iter().sum::<f64>() / lates.len() as f64)
            }
            Metric::PunctualCount => Some(
                run.log
                    .trips
                    .iter()
                    .filter(|t| t.purpose == crate::gateway::TripPurpose::Work && day_of(t.depart, start) == i64::from(d))
                    .filter(|t| matches!((t.arrive, t.due), (Some(a), Some(due)) if a <= due))
                    .count() as f64,
            ),
            Metric::PeakOnset => peak_onset(&run.log, &run.graph, d, opts.peak_threshold).map(f64::from),
        })
        .collect();
    DaySeries { metric, values }
}

/// Earliest minute of `day` at which at least `threshold` of road links are non-free.
pub fn peak_onset(log: &RunLog, graph: &NetworkGraph, day: u32, threshold: f64) -> Option<u32> {
    let roads = graph.road_link_indices().count();
    if roads == 0 {
        return None;
    }
    let lo: Tick = day * MINUTES_PER_DAY;
    let hi: Tick = lo + MINUTES_PER_DAY;
    let mut busy: BTreeMap<Tick, usize> = BTreeMap::new();
    for r in log.traffic.iter().filter(|r| (lo..hi).contains(&r.tick) && r.level != CongestionLevel::Free) {
        *busy.entry(r.tick).or_default() += 1;
    }
    busy.into_iter().find(|(_, n)| *n as f64 / roads as f64 >= threshold).map(|(t, _)| t - lo)
}
