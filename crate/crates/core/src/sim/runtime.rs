use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cognition::{ActivityPlan, AgentProfile, Mind, Population};
use crate::gateway::{DayLog, TripPurpose};
use crate::net::{TokenId, TokenPlace, TrafficState, TravelMode};
use crate::Tick;

/// Why an agent's plan is being (re)considered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Initial,
    WaitingAtNode,
    ActivityTransition,
    Periodic,
}

impl Trigger {
    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::Initial => "initial",
            Trigger::WaitingAtNode => "waiting_at_node",
            Trigger::ActivityTransition => "activity_transition",
            Trigger::Periodic => "periodic",
        }
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A trip in progress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trip {
    pub token: TokenId,
    /// Plan entry being travelled to.
    pub entry: usize,
    pub origin: String,
    pub destination: String,
    pub mode: TravelMode,
    pub depart: Tick,
    pub due: Option<Tick>,
    pub purpose: TripPurpose,
    /// Links entered so far.
    pub traversed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Place {
    AtFacility { facility: String, since: Tick },
    Travelling(Trip),
}

/// Per-agent simulation state that is not memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRuntime {
    pub place: Place,
    /// Today's plan; `None` until the day's plan is made.
    pub plan: Option<ActivityPlan>,
    /// Entry being performed (at a facility) or travelled to.
    pub current: usize,
    pub just_arrived: bool,
    pub last_check: Tick,
    /// `(node, link, since)` of the queue episode already reacted to.
    pub queue_episode: Option<(usize, usize, u32)>,
    pub day_log: DayLog,
    pub reflected: bool,
    pub has_car: bool,
    pub broadcasts: Vec<String>,
}

impl AgentRuntime {
    pub fn at_home(profile: &AgentProfile, tick: Tick) -> Self {
        AgentRuntime {
            place: Place::AtFacility { facility: profile.home_facility.clone(), since: tick },
            plan: None,
            current: 0,
            just_arrived: false,
            last_check: tick,
            queue_episode: None,
            day_log: DayLog::default(),
            reflected: false,
            has_car: false,
            broadcasts: Vec::new(),
        }
    }

    pub fn facility(&self) -> Option<&str> {
        match &self.place {
            Place::AtFacility { facility, .. } => Some(facility),
            Place::Travelling(_) => None,
        }
    }

    pub fn trip(&self) -> Option<&Trip> {
        match &self.place {
            Place::Travelling(t) => Some(t),
            Place::AtFacility { .. } => None,
        }
    }

    /// True when there are plan entries after the current one.
    pub fn has_remaining(&self) -> bool {
        self.plan.as_ref().is_some_and(|p| self.current + 1 < p.entries.len())
    }

    /// At the last entry of a multi-entry plan, at home.
    pub fn finished_day(&self, home: &str) -> bool {
        let Some(p) = &self.plan else { return false };
        p.entries.len() > 1 && !self.has_remaining() && self.facility() == Some(home)
    }
}

/// Decides whether cognition should look at the agent's plan this tick.
pub fn needs_plan_update(rt: &AgentRuntime, traffic: &TrafficState, tick: Tick, interval: u32) -> Option<Trigger> {
    if rt.plan.is_none() {
        return Some(Trigger::Initial);
    }
    match &rt.place {
        Place::Travelling(trip) => match traffic.place(trip.token)? {
            TokenPlace::Queued { node, link, since } => {
                let waited = tick.saturating_sub(since);
                if waited == 0 {
                    None
                } else if rt.queue_episode != Some((node, link, since)) || tick >= rt.last_check + interval {
                    Some(Trigger::WaitingAtNode)
                } else {
                    None
                }
            }
            TokenPlace::OnLink { .. } => None,
        },
        Place::AtFacility { .. } => {
            if rt.just_arrived {
                Some(Trigger::ActivityTransition)
            } else if rt.has_remaining() && tick >= rt.last_check + interval {
                Some(Trigger::Periodic)
            } else {
                None
            }
        }
    }
}

/// One simulated person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub profile: AgentProfile,
    pub mind: Mind,
    pub rt: AgentRuntime,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseholdCars {
    pub vehicles: u32,
    /// Members allowed to drive today.
    pub claimed_by: BTreeSet<String>,
    /// Members currently on a drive leg.
    pub in_use: BTreeSet<String>,
}

/// Which household members hold a car today and which cars are on the road.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleRegistry {
    pub households: BTreeMap<String, HouseholdCars>,
}

impl VehicleRegistry {
    pub fn from_population(pop: &Population) -> Self {
        let households = pop
            .households
            .iter()
            .map(|h| (h.id.clone(), HouseholdCars { vehicles: h.vehicles, ..Default::default() }))
            .collect();
        VehicleRegistry { households }
    }

    pub fn vehicles(&self, household: &str) -> u32 {
        self.households.get(household).map(|h| h.vehicles).unwrap_or(0)
    }

    /// Claims held by other members.
    pub fn claimed_by_others(&self, household: &str, agent: &str) -> u32 {
        self.households.get(household).map(|h| h.claimed_by.iter().filter(|a| *a != agent).count() as u32).unwrap_or(0)
    }

    /// Claims a car for today; false when all are taken.
    pub fn claim(&mut self, household: &str, agent: &str) -> bool {
        let Some(h) = self.households.get_mut(household) else { return false };
        if h.claimed_by.contains(agent) {
            return true;
        }
        if h.claimed_by.len() as u32 >= h.vehicles {
            return false;
        }
        h.claimed_by.insert(agent.to_string());
        true
    }

    pub fn set_in_use(&mut self, household: &str, agent: &str, driving: bool) {
        if let Some(h) = self.households.get_mut(household) {
            if driving {
                h.in_use.insert(agent.to_string());
            } else {
                h.in_use.remove(agent);
            }
        }
    }

    pub fn reset_day(&mut self) {
        for h in self.households.values_mut() {
            h.claimed_by.clear();
            h.in_use.clear();
        }
    }

    /// Registry problems, empty when consistent.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (id, h) in &self.households {
            if h.claimed_by.len() as u32 > h.vehicles {
                out.push(format!("household {id}: {} claims for {} vehicle(s)", h.claimed_by.len(), h.vehicles));
            }
            for a in h.in_use.difference(&h.claimed_by) {
                out.push(format!("household {id}: {a} drives without a claim"));
            }
        }
        out
    }
}
