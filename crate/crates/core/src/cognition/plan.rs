use std::fmt;

use chrono::NaiveDateTime;
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::clock::ClockTime;
use crate::net::TravelMode;

/// How a leg's route is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PathSpec {
    /// Real-time shortest path at departure.
    #[default]
    Shortest,
    None,
    /// Link ids, street names (`Ave_2`) or line names (`Metro_1`), in travel order.
    Explicit(Vec<String>),
}

impl PathSpec {
    pub fn parse(s: &str) -> PathSpec {
        let t = s.trim().trim_matches(|c| c == '[' || c == ']').trim();
        let lower = t.to_ascii_lowercase();
        if lower == "none" || t.is_empty() {
            return PathSpec::None;
        }
        if lower.contains("shortest") {
            return PathSpec::Shortest;
        }
        let items: Vec<String> = t
            .split([',', ';'])
            .map(|x| x.trim().trim_matches(|c| c == '\'' || c == '"').trim().to_string())
            .filter(|x| !x.is_empty())
            .collect();
        if items.is_empty() {
            PathSpec::None
        } else {
            PathSpec::Explicit(items)
        }
    }
}

impl fmt::Display for PathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathSpec::Shortest => f.write_str("shortest"),
            PathSpec::None => f.write_str("none"),
            PathSpec::Explicit(v) => f.write_str(&v.join(", ")),
        }
    }
}

/// One scheduled activity: travel to `facility` (departing at `departure`) and stay
/// `duration` minutes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanEntry {
    pub facility: String,
    pub departure: Option<ClockTime>,
    pub duration: Option<u32>,
    pub mode: TravelMode,
    pub path: PathSpec,
    pub description: String,
}

impl PlanEntry {
    pub fn new(facility: impl Into<String>, departure: Option<ClockTime>, duration: Option<u32>, mode: TravelMode, path: PathSpec, description: impl Into<String>) -> Self {
        PlanEntry { facility: facility.into(), departure, duration, mode, path, description: description.into() }
    }

    /// Whether this entry involves travel.
    pub fn travels(&self) -> bool {
        self.mode != TravelMode::None
    }
}

impl Serialize for PlanEntry {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(6))?;
        seq.serialize_element(&self.facility)?;
        match self.departure {
            Some(t) => seq.serialize_element(&t.to_string())?,
            None => seq.serialize_element("none")?,
        }
        match self.duration {
            Some(d) => seq.serialize_element(&d)?,
            None => seq.serialize_element("none")?,
        }
        seq.serialize_element(self.mode.as_str())?;
        seq.serialize_element(&self.path.to_string())?;
        seq.serialize_element(&self.description)?;
        seq.end()
    }
}

impl<'de> Deserialize<'de> for PlanEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = PlanEntry;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a 6-element plan entry array")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<PlanEntry, A::Error> {
                let mut next = |i: usize| -> Result<serde_json::Value, A::Error> {
                    seq.next_element::<serde_json::Value>()?.ok_or_else(|| de::Error::invalid_length(i, &self))
                };
                let facility = as_text(next(0)?);
                let departure = match as_text(next(1)?).as_str() {
                    "none" | "" => None,
                    t => Some(t.parse::<ClockTime>().map_err(de::Error::custom)?),
                };
                let duration = match next(2)? {
                    serde_json::Value::Number(n) => Some(n.as_u64().ok_or_else(|| de::Error::custom("bad duration"))? as u32),
                    other => match as_text(other).as_str() {
                        "none" | "" => None,
                        t => Some(t.parse::<u32>().map_err(de::Error::custom)?),
                    },
                };
                let mode_text = as_text(next(3)?);
                let mode = TravelMode::parse(&mode_text).ok_or_else(|| de::Error::custom(format!("unknown mode {mode_text}")))?;
                let path = PathSpec::parse(&as_text(next(4)?));
                let description = as_text(next(5)?);
                Ok(PlanEntry { facility, departure, duration, mode, path, description })
            }
        }
        d.deserialize_seq(V)
    }
}

fn as_text(v: serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.trim().to_string(),
        serde_json::Value::Null => "none".to_string(),
        serde_json::Value::Array(items) => items.into_iter().map(as_text).collect::<Vec<_>>().join(", "),
        other => other.to_string(),
    }
}

/// Ordered day schedule.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActivityPlan {
    pub entries: Vec<PlanEntry>,
}

impl ActivityPlan {
    pub fn new(entries: Vec<PlanEntry>) -> Self {
        ActivityPlan { entries }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Facility names visited after the home start, excluding the final return.
    pub fn errand_facilities(&self, home: &str, work: Option<&str>) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.facility != home && Some(e.facility.as_str()) != work)
            .map(|e| e.facility.clone())
            .collect()
    }
}

impl fmt::Display for ActivityPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    PathUpdate,
    DepartureAdjust,
    PartialReplace,
    FullReplace,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Continue => "continue",
            Decision::PathUpdate => "path_update",
            Decision::DepartureAdjust => "departure_adjust",
            Decision::PartialReplace => "partial_replace",
            Decision::FullReplace => "full_replace",
        }
    }
}

/// What a revision changes; the variant fixes the payload shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum RevisionAction {
    Continue,
    /// New path for the current (or next) trip.
    PathUpdate { path: PathSpec },
    /// New departure time for the next entry.
    DepartureAdjust { departure: ClockTime },
    /// Replaces every entry after the current one.
    PartialReplace { entries: Vec<PlanEntry> },
    FullReplace { plan: ActivityPlan },
}

impl RevisionAction {
    pub fn decision(&self) -> Decision {
        match self {
            RevisionAction::Continue => Decision::Continue,
            RevisionAction::PathUpdate { .. } => Decision::PathUpdate,
            RevisionAction::DepartureAdjust { .. } => Decision::DepartureAdjust,
            RevisionAction::PartialReplace { .. } => Decision::PartialReplace,
            RevisionAction::FullReplace { .. } => Decision::FullReplace,
        }
    }
}

impl Serialize for PathSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PathSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        Ok(PathSpec::parse(&as_text(v)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRevision {
    pub at: NaiveDateTime,
    pub trigger: String,
    #[serde(flatten)]
    pub action: RevisionAction,
    pub rationale: String,
}

impl PlanRevision {
    pub fn decision(&self) -> Decision {
        self.action.decision()
    }

    /// One line of revision history as shown to later revisions.
    pub fn history_line(&self) -> String {
        let detail = match &self.action {
            RevisionAction::Continue => String::new(),
            RevisionAction::PathUpdate { path } => format!(" path -> {path}"),
            RevisionAction::DepartureAdjust { departure } => format!(" departure -> {departure}"),
            RevisionAction::PartialReplace { entries } => {
                format!(" future plan -> {}", serde_json::to_string(entries).unwrap_or_default())
            }
            RevisionAction::FullReplace { plan } => format!(" plan -> {plan}"),
        };
        format!("[{}] {} ({}){}: {}", self.at.format("%H:%M"), self.decision().as_str(), self.trigger, detail, self.rationale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE_PLAN: &str = r#"[["Office", "14:10", 120, "drive", "Ave_2_link_3, St_4_link_1", "Arrive at Office."],
        ["Gym", "17:45", 60, "transit", "Metro_1", "Train."],
        ["Uptown apartment", "19:30", "none", "transit", "Metro_2", "Home."]]"#;

    #[test]
    fn six_field_arrays_roundtrip() {
        let plan = ActivityPlan::from_json(SAMPLE_PLAN).unwrap();
        assert_eq!(plan.entries.len(), 3);
        assert_eq!(plan.entries[0].departure, Some(ClockTime::hm(14, 10)));
        assert_eq!(plan.entries[0].duration, Some(120));
        assert_eq!(plan.entries[0].path, PathSpec::Explicit(vec!["Ave_2_link_3".into(), "St_4_link_1".into()]));
        assert_eq!(plan.entries[2].duration, None);
        let back = ActivityPlan::from_json(&plan.to_json()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn tolerant_fields() {
        let e: PlanEntry = serde_json::from_str(r#"["Midtown apartment", "06:00", "20", "none", "none", "Wake up."]"#).unwrap();
        assert_eq!(e.duration, Some(20));
        assert_eq!(e.path, PathSpec::None);
        assert_eq!(PathSpec::parse("real-time shortest"), PathSpec::Shortest);
        assert!(serde_json::from_str::<PlanEntry>(r#"["Gym", "25:00", 1, "drive", "shortest", ""]"#).is_err());
    }

    #[test]
    fn revision_payload_shape() {
        let r = PlanRevision {
            at: chrono::NaiveDate::from_ymd_opt(2025, 3, 13).unwrap().and_hms_opt(7, 1, 0).unwrap(),
            trigger: "waiting_at_node".into(),
            action: RevisionAction::PathUpdate { path: PathSpec::parse("St_2_link_1, Ave_2_link_2") },
            rationale: "avoid queue".into(),
        };
        let j = serde_json::to_string(&r).unwrap();
        assert!(j.contains("\"decision\":\"path_update\""));
        let back: PlanRevision = serde_json::from_str(&j).unwrap();
        assert_eq!(back, r);
        assert!(r.history_line().contains("St_2_link_1"));
    }
}
