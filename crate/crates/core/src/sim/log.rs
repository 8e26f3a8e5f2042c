use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::gateway::TripPurpose;
use crate::net::{CongestionLevel, TravelMode};
use crate::{Tick, MINUTES_PER_DAY};

pub const TRIPS_FILE: &str = "trips.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const TRAFFIC_FILE: &str = "traffic.csv";
pub const RUN_FILE: &str = "run.json";

/// One completed or interrupted trip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripRow {
    pub agent: String,
    pub origin: String,
    pub destination: String,
    pub depart: NaiveDateTime,
    /// Empty when the trip was cut short by the end of the day.
    pub arrive: Option<NaiveDateTime>,
    pub mode: TravelMode,
    /// Links actually entered, `;`-separated.
    pub path: String,
    /// Minutes beyond the free-flow time of the links entered.
    pub delay: Option<i64>,
    pub purpose: TripPurpose,
    pub due: Option<NaiveDateTime>,
    /// Arrival minus due time; negative when early.
    pub lateness: Option<i64>,
}

impl TripRow {
    pub fn links(&self) -> impl Iterator<Item = &str> {
        self.path.split(';').filter(|s| !s.is_empty())
    }
}

/// Line-delimited JSON records of what happened during a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    LinkEnter { tick: Tick, agent: String, link: String, wait: u32 },
    Revision { tick: Tick, agent: String, trigger: String, decision: String, applied: bool, rationale: String },
    Chat { tick: Tick, initiator: String, partner: String, topic: String, summary: String },
    Teleport { tick: Tick, agent: String, from: String },
    Scenario { tick: Tick, active: bool, description: String },
    Reflection { tick: Tick, agent: String, content: String },
}

impl LogEvent {
    pub fn tick(&self) -> Tick {
        match self {
            LogEvent::LinkEnter { tick, .. }
            | LogEvent::Revision { tick, .. }
            | LogEvent::Chat { tick, .. }
            | LogEvent::Teleport { tick, .. }
            | LogEvent::Scenario { tick, .. }
            | LogEvent::Reflection { tick, .. } => *tick,
        }
    }
}

/// Road-link state at one tick. Only links with vehicles on or queued for them are
/// logged; absent links are empty and free.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficRow {
    pub tick: Tick,
    pub link: String,
    pub occupancy: usize,
    pub queue: usize,
    pub capacity: Option<u32>,
    pub wait: u32,
    pub level: CongestionLevel,
}

/// Run metadata written next to the logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub name: String,
    pub start_date: NaiveDate,
    pub days: u32,
    pub seed: u64,
    pub config_digest: String,
    pub ticks: Tick,
    pub final_hash: Option<String>,
    pub road_links: Vec<String>,
    /// Network document used; the bundled network when absent.
    #[serde(default)]
    pub network: Option<std::path::PathBuf>,
    #[serde(default)]
    pub road_capacity: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub trips: Vec<TripRow>,
    pub events: Vec<LogEvent>,
    pub traffic: Vec<TrafficRow>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SimError {
    SimError::Io(format!("{}: {e}", path.display()))
}

impl RunLog {
    pub fn link_entries(&self) -> impl Iterator<Item = (Tick, &str, &str)> {
        self.events.iter().filter_map(|e| match e {
            LogEvent::LinkEnter { tick, agent, link, .. } => Some((*tick, agent.as_str(), link.as_str())),
            _ => None,
        })
    }

    /// Entries onto `link` during day `day` (0-based).
    pub fn daily_volume(&self, link: &str, day: u32) -> usize {
        self.link_entries().filter(|(t, _, l)| *l == link && t / MINUTES_PER_DAY == day).count()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let p = dir.join(TRIPS_FILE);
        let mut w = csv::Writer::from_path(&p).map_err(|e| io_err(&p, e))?;
        for t in &self.trips {
            w.serialize(t).map_err(|e| io_err(&p, e))?;
        }
        w.flush().map_err(|e| io_err(&p, e))?;

        let p = dir.join(EVENTS_FILE);
        let mut out = BufWriter::new(File::create(&p).map_err(|e| io_err(&p, e))?);
        for e in &self.events {
            serde_json::to_writer(&mut out, e).map_err(|e| io_err(&p, e))?;
            out.write_all(b"\n").map_err(|e| io_err(&p, e))?;
        }
        out.flush().map_err(|e| io_err(&p, e))?;

        let p = dir.join(TRAFFIC_FILE);
        let mut w = csv::Writer::from_path(&p).map_err(|e| io_err(&p, e))?;
        for r in &self.traffic {
            w.serialize(r).map_err(|e| io_err(&p, e))?;
        }
        w.flush().map_err(|e| io_err(&p, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self, SimError> {
        let p = dir.join(TRIPS_FILE);
        let mut r = csv::Reader::from_path(&p).map_err(|e| io_err(&p, e))?;
        let trips = r.deserialize().collect::<Result<Vec<TripRow>, _>>().map_err(|e| io_err(&p, e))?;

        let p = dir.join(EVENTS_FILE);
        let f = File::open(&p).map_err(|e| io_err(&p, e))?;
        let mut events = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| io_err(&p, e))?;
            if !line.trim().is_empty() {
                events.push(serde_json::from_str(&line).map_err(|e| io_err(&p, e))?);
            }
        }

        let p = dir.join(TRAFFIC_FILE);
        let mut r = csv::Reader::from_path(&p).map_err(|e| io_err(&p, e))?;
        let traffic = r.deserialize().collect::<Result<Vec<TrafficRow>, _>>().map_err(|e| io_err(&p, e))?;
        Ok(RunLog { trips, events, traffic })
    }
}

impl RunInfo {
    pub fn write(&self, dir: &Path) -> Result<(), SimError> {
        let p = dir.join(RUN_FILE);
        let text = serde_json::to_string_pretty(self).expect("run info serializes");
        std::fs::write(&p, text).map_err(|e| io_err(&p, e))
    }

    pub fn read(dir: &Path) -> Result<Self, SimError> {
        let p = dir.join(RUN_FILE);
        let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(&p, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logs_round_trip_through_files() {
        let d = NaiveDate::from_ymd_opt(2025, 3, 3).unwrap();
        let log = RunLog {
            trips: vec![TripRow {
                agent: "A".into(),
                origin: "Uptown apartment".into(),
                destination: "Office".into(),
                depart: d.and_hms_opt(7, 0, 0).unwrap(),
                arrive: None,
                mode: TravelMode::Drive,
                path: "Ave_1_link_1;Ave_1_link_2".into(),
                delay: None,
                purpose: TripPurpose::Work,
                due: Some(d.and_hms_opt(8, 0, 0).unwrap()),
                lateness: None,
            }],
            events: vec![LogEvent::LinkEnter { tick: 1500, agent: "A".into(), link: "Ave_1_link_1".into(), wait: 2 }],
            traffic: vec![TrafficRow {
                tick: 1500,
                link: "Ave_1_link_1".into(),
                occupancy: 2,
                queue: 1,
                capacity: Some(2),
                wait: 4,
                level: CongestionLevel::Light,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        log.write_dir(dir.path()).unwrap();
        assert_eq!(RunLog::read_dir(dir.path()).unwrap(), log);
        assert_eq!(log.daily_volume("Ave_1_link_1", 1), 1);
        assert_eq!(log.daily_volume("Ave_1_link_1", 0), 0);
        assert_eq!(log.trips[0].links().count(), 2);
    }
}
