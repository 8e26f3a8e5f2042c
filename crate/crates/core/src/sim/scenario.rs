use std::sync::LazyLock;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::clock::ClockTime;
use crate::net::{LinkKind, NetworkGraph};
use crate::{Tick, MINUTES_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Broadcast,
    CapacityChange,
}

/// A scheduled change to the world: a message every agent perceives, or a temporary
/// road capacity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub kind: EventKind,
    /// Road link id for capacity changes, `all` for broadcasts.
    #[serde(default = "all_agents")]
    pub target: String,
    #[serde(default)]
    pub capacity: Option<u32>,
    #[serde(default)]
    pub message: Option<String>,
    pub date: NaiveDate,
    pub start: ClockTime,
    pub end: ClockTime,
}

fn all_agents() -> String {
    "all".into()
}

impl ScenarioEvent {
    pub fn capacity_change(link: &str, capacity: u32, date: NaiveDate, start: ClockTime, end: ClockTime) -> Self {
        ScenarioEvent { kind: EventKind::CapacityChange, target: link.into(), capacity: Some(capacity), message: None, date, start, end }
    }

    pub fn broadcast(message: &str, date: NaiveDate, start: ClockTime, end: ClockTime) -> Self {
        ScenarioEvent { kind: EventKind::Broadcast, target: all_agents(), capacity: None, message: Some(message.into()), date, start, end }
    }

    pub fn validate(&self, graph: &NetworkGraph) -> Result<(), SimError> {
        if self.end <= self.start {
            return Err(SimError::Scenario(format!("event window {}-{} is empty", self.start, self.end)));
        }
        match self.kind {
            EventKind::CapacityChange => {
                let Some(i) = graph.link_idx(&self.target) else {
                    return Err(SimError::UnknownLink { link: self.target.clone(), valid: road_link_ids(graph) });
                };
                if graph.link(i).kind != LinkKind::Road {
                    return Err(SimError::Scenario(format!("{} is not a road link; only road capacities can change", self.target)));
                }
                match self.capacity {
                    Some(c) if c >= 1 => Ok(()),
                    Some(_) => Err(SimError::Scenario("new capacity must be at least 1".into())),
                    None => Err(SimError::Scenario("capacity_change needs a capacity".into())),
                }
            }
            EventKind::Broadcast => match &self.message {
                Some(m) if !m.trim().is_empty() => Ok(()),
                _ => Err(SimError::Scenario("broadcast needs a message".into())),
            },
        }
    }

    /// Active tick range `[from, to)` relative to the run start.
    pub fn window(&self, run_start: NaiveDate) -> (i64, i64) {
        let day = (self.date - run_start).num_days() * i64::from(MINUTES_PER_DAY);
        (day + i64::from(self.start.minutes()), day + i64::from(self.end.minutes()))
    }

    pub fn is_active(&self, run_start: NaiveDate, tick: Tick) -> bool {
        let (a, b) = self.window(run_start);
        (a..b).contains(&i64::from(tick))
    }

    /// One-line description used in perceptions and confirmations.
    pub fn describe(&self) -> String {
        match self.kind {
            EventKind::CapacityChange => format!(
                "Capacity of {} reduced to {} on {} from {} to {}.",
                self.target,
                self.capacity.unwrap_or(0),
                self.date,
                self.start,
                self.end
            ),
            EventKind::Broadcast => format!("{} ({} {}-{})", self.message.as_deref().unwrap_or(""), self.date, self.start, self.end),
        }
    }
}

pub fn road_link_ids(graph: &NetworkGraph) -> Vec<String> {
    graph.road_link_indices().map(|i| graph.link(i).id.clone()).collect()
}

static CLOSE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:close|block)\s+(?P<link>\S+)\s+(?P<from>\d{1,2}:\d{2})\s*-\s*(?P<to>\d{1,2}:\d{2})(?:\s+(?:on\s+)?(?P<day>\S+))?\s*$").unwrap()
});
static REDUCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:reduce|set)\s+(?P<link>\S+)\s+(?:capacity\s+)?to\s+(?P<cap>\d+)\s+(?P<from>\d{1,2}:\d{2})\s*-\s*(?P<to>\d{1,2}:\d{2})(?:\s+(?:on\s+)?(?P<day>\S+))?\s*$").unwrap()
});
static BROADCAST: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)^\s*(?:broadcast|announce)\s+"?(?P<msg>.+?)"?(?:\s+(?P<from>\d{1,2}:\d{2})\s*-\s*(?P<to>\d{1,2}:\d{2}))?(?:\s+on\s+(?P<day>\S+))?\s*$"#).unwrap()
});

fn parse_day(s: Option<&str>, today: NaiveDate) -> Result<NaiveDate, SimError> {
    let Some(s) = s else { return Ok(today) };
    let lower = s.to_lowercase();
    match lower.as_str() {
        "today" => return Ok(today),
        "tomorrow" => return Ok(today + Days::new(1)),
        _ => {}
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d);
    }
    let wd: Weekday = lower.parse().map_err(|_| SimError::Scenario(format!("unrecognised day `{s}`")))?;
    let ahead = (7 + wd.num_days_from_monday() - today.weekday().num_days_from_monday()) % 7;
    Ok(today + Days::new(u64::from(ahead)))
}

fn parse_time(s: &str) -> Result<ClockTime, SimError> {
    s.parse().map_err(|e: crate::clock::ClockParseError| SimError::Scenario(e.to_string()))
}

/// Pattern-rule reading of an operator's scenario text. `close L 7:30-8:30 Tuesday`
/// drops the link to the minimum capacity of 1; `reduce L to N 7:30-8:30 [day]` sets N;
/// `broadcast MESSAGE [HH:MM-HH:MM] [on day]` reaches every agent. Weekdays resolve to
/// the next such day on or after `today`.
pub fn parse_event_text(text: &str, graph: &NetworkGraph, today: NaiveDate) -> Result<ScenarioEvent, SimError> {
    let ev = if let Some(c) = CLOSE.captures(text) {
        ScenarioEvent::capacity_change(&c["link"], 1, parse_day(c.name("day").map(|m| m.as_str()), today)?, parse_time(&c["from"])?, parse_time(&c["to"])?)
    } else if let Some(c) = REDUCE.captures(text) {
        let cap = c["cap"].parse().map_err(|_| SimError::Scenario(format!("bad capacity `{}`", &c["cap"])))?;
        ScenarioEvent::capacity_change(&c["link"], cap, parse_day(c.name("day").map(|m| m.as_str()), today)?, parse_time(&c["from"])?, parse_time(&c["to"])?)
    } else if let Some(c) = BROADCAST.captures(text) {
        let (from, to) = match (c.name("from"), c.name("to")) {
            (Some(a), Some(b)) => (parse_time(a.as_str())?, parse_time(b.as_str())?),
            _ => (ClockTime::hm(0, 0), ClockTime::from_minutes(MINUTES_PER_DAY).unwrap()),
        };
        ScenarioEvent::broadcast(c["msg"].trim(), parse_day(c.name("day").map(|m| m.as_str()), today)?, from, to)
    } else {
        return Err(SimError::Scenario(format!(
            "cannot read `{}`; try `close LINK HH:MM-HH:MM DAY`, `reduce LINK to N HH:MM-HH:MM DAY` or `broadcast MESSAGE`",
            text.trim()
        )));
    };
    ev.validate(graph)?;
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monday() -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 3, 10).unwrap()
    }

    #[test]
    fn close_text_becomes_capacity_change() {
        let g = NetworkGraph::nguyen_dupuis();
        let e = parse_event_text("close Ave_2_link_2 7:30-8:30 Tuesday", &g, monday()).unwrap();
        assert_eq!(e.kind, EventKind::CapacityChange);
        assert_eq!(e.target, "Ave_2_link_2");
        assert_eq!(e.capacity, Some(1));
        assert_eq!(e.date, NaiveDate::from_ymd_opt(2025, 3, 11).unwrap());
        assert_eq!((e.start, e.end), (ClockTime::hm(7, 30), ClockTime::hm(8, 30)));
    }

    #[test]
    fn unknown_link_lists_valid_ids() {
        let g = NetworkGraph::nguyen_dupuis();
        let err = parse_event_text("close Ave_9_link_1 7:30-8:30", &g, monday()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Ave_9_link_1") && msg.contains("Ave_2_link_2"), "{msg}");
    }

    #[test]
    fn metro_links_cannot_change_capacity() {
        let g = NetworkGraph::nguyen_dupuis();
        let e = ScenarioEvent::capacity_change("Metro_1_link_1", 1, monday(), ClockTime::hm(7, 0), ClockTime::hm(8, 0));
        assert!(matches!(e.validate(&g), Err(SimError::Scenario(_))));
        let zero = ScenarioEvent::capacity_change("Ave_2_link_2", 0, monday(), ClockTime::hm(7, 0), ClockTime::hm(8, 0));
        assert!(zero.validate(&g).is_err());
    }

    #[test]
    fn broadcast_and_reduce_forms() {
        let g = NetworkGraph::nguyen_dupuis();
        let b = parse_event_text("broadcast New museum exhibition opens today", &g, monday()).unwrap();
        assert_eq!(b.kind, EventKind::Broadcast);
        assert_eq!(b.message.as_deref(), Some("New museum exhibition opens today"));
        assert!(b.is_active(monday(), 600));
        let r = parse_event_text("reduce St_1_link_1 to 1 17:00-18:00 2025-03-12", &g, monday()).unwrap();
        assert_eq!(r.capacity, Some(1));
        assert_eq!(r.window(monday()), (2 * 1440 + 17 * 60, 2 * 1440 + 18 * 60));
        assert!(parse_event_text("make traffic worse", &g, monday()).is_err());
    }
}
