//! Structured task inputs and typed task outputs.
//!
//! Cognition fills a context alongside the rendered prompt. The scripted stub reads the
//! context; a remote model reads the prompt. Both answer with JSON matching the output
//! type of the task.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clock::ClockTime;
use crate::cognition::{ActivityPlan, AgentProfile, PlanEntry};
use crate::memory::ConceptKind;
use crate::net::TravelMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanContext {
    pub profile: AgentProfile,
    pub date: NaiveDate,
    pub prev_longterm: String,
    pub prev_daily: String,
    pub household_vehicles: u32,
    /// Outcome of a household car negotiation: `Some(true)` keeps the car today.
    pub car_claim: Option<bool>,
    pub recent_chats: Vec<String>,
    pub broadcasts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum AgentLocation {
    Facility { name: String, arrived: ClockTime },
    Queued { node: String, link: String, waited: u32 },
    OnLink { link: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionContext {
    pub profile: AgentProfile,
    pub date: NaiveDate,
    pub now: ClockTime,
    pub trigger: String,
    pub plan: ActivityPlan,
    /// Entry being performed or travelled to.
    pub current_index: usize,
    pub location: AgentLocation,
    pub mode: TravelMode,
    pub destination: Option<String>,
    /// Not-yet-completed links of the current trip, current link first.
    pub remaining_path: Vec<String>,
    /// Node a new path would start from.
    pub decision_node: Option<String>,
    /// Expected entry wait (minutes) on every road link with a nonzero wait.
    pub link_waits: BTreeMap<String, u32>,
    /// Minutes past the next entry's planned departure, at activity transitions.
    pub overstay: u32,
    pub broadcasts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripRecord {
    pub destination: String,
    pub purpose: TripPurpose,
    pub depart: ClockTime,
    pub arrive: Option<ClockTime>,
    /// When the agent meant to be there (work start or meetup time).
    pub due: Option<ClockTime>,
    pub mode: TravelMode,
    pub links: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripPurpose {
    Work,
    Errand,
    Home,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaitRecord {
    pub link: String,
    pub at: ClockTime,
    pub minutes: u32,
}

/// What happened to one agent during one day.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DayLog {
    pub trips: Vec<TripRecord>,
    pub waits: Vec<WaitRecord>,
    /// Queues left by rerouting, with the expected wait at the time.
    #[serde(default)]
    pub avoided: Vec<WaitRecord>,
    /// Links seen running at reduced capacity.
    #[serde(default)]
    pub incidents: Vec<String>,
    pub missed: Vec<String>,
    pub completed_errands: Vec<String>,
    pub teleported: bool,
}

impl DayLog {
    pub fn is_empty(&self) -> bool {
        self.trips.is_empty() && self.waits.is_empty() && self.avoided.is_empty() && self.incidents.is_empty() && self.missed.is_empty() && !self.teleported
    }

    pub fn add_incident(&mut self, link: &str) {
        if !self.incidents.iter().any(|l| l == link) {
            self.incidents.push(link.to_string());
        }
    }

    pub fn add_missed(&mut self, facility: &str) {
        if !self.missed.iter().any(|m| m == facility) {
            self.missed.push(facility.to_string());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionContext {
    pub profile: AgentProfile,
    pub date: NaiveDate,
    pub day_log: DayLog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialContact {
    pub name: String,
    pub household_member: bool,
    pub licensed_driver: bool,
    #[serde(default)]
    pub prefers_transit: bool,
    pub work_facility: Option<String>,
    pub work_end: Option<ClockTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatInitiateContext {
    pub profile: AgentProfile,
    pub date: NaiveDate,
    pub now: ClockTime,
    pub contacts: Vec<SocialContact>,
    pub household_vehicles: u32,
    /// `partner|topic` pairs already discussed today.
    pub discussed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatContext {
    pub profile: AgentProfile,
    pub partner: String,
    pub topic: String,
    pub date: NaiveDate,
    pub transcript: Vec<ChatTurn>,
    /// Facts the stub uses to settle car-use and meetup chats.
    pub facts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceContext {
    pub kind: ConceptKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathInfoContext {
    pub path_string: String,
}

/// Interview question routed through the chat-response task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterviewContext {
    pub profile: AgentProfile,
    pub question: String,
    pub retrieved: Vec<String>,
    pub plan: Option<ActivityPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    pub longterm_reflection: String,
    pub plan: ActivityPlan,
    #[serde(default)]
    pub concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionOutput {
    pub decision: String,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub departure: Option<String>,
    #[serde(default)]
    pub entries: Option<Vec<PlanEntry>>,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionOutput {
    pub reflection: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatInitiateOutput {
    pub initiate: bool,
    #[serde(default)]
    pub partner: Option<String>,
    #[serde(default)]
    pub topic: Option<String>,
    #[serde(default)]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponseOutput {
    pub message: String,
    #[serde(default)]
    pub end: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSummaryOutput {
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceOutput {
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathInfoOutput {
    pub links: Vec<String>,
}
