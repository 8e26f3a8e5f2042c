use serde::{Deserialize, Serialize};

use super::runtime::{AgentState, Place};
use super::world::World;
use crate::clock::ClockTime;
use crate::cognition::{ActivityPlan, ReflectionRecord};
use crate::net::{congestion_snapshot, LinkCongestion, TokenPlace, TravelMode};
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentStatus {
    AtFacility,
    Queued,
    Travelling,
}

/// What a map needs to draw one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub name: String,
    pub status: AgentStatus,
    pub position: [f64; 2],
    pub facility: Option<String>,
    pub link: Option<String>,
    pub mode: Option<TravelMode>,
    pub destination: Option<String>,
}

/// Current congestion and agent positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub tick: Tick,
    pub date: chrono::NaiveDate,
    pub time: ClockTime,
    pub finished: bool,
    pub links: Vec<LinkCongestion>,
    pub agents: Vec<AgentView>,
    pub active_events: Vec<String>,
}

/// Everything shown when an agent is selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDetail {
    pub view: AgentView,
    pub profile: crate::cognition::AgentProfile,
    pub plan: Option<ActivityPlan>,
    pub current_entry: usize,
    pub revisions: Vec<String>,
    pub reflections: Vec<ReflectionRecord>,
    pub memory_count: usize,
    pub recent_memories: Vec<String>,
}

impl World {
    fn agent_view(&self, a: &AgentState) -> AgentView {
        let g = self.graph();
        let tick = self.state.tick;
        let facility_pos = |name: &str| g.facility_node(name).map(|n| g.node(n).position).unwrap_or([0.0, 0.0]);
        match &a.rt.place {
            Place::AtFacility { facility, .. } => AgentView {
                name: a.profile.name.clone(),
                status: AgentStatus::AtFacility,
                position: facility_pos(facility),
                facility: Some(facility.clone()),
                link: None,
                mode: None,
                destination: None,
            },
            Place::Travelling(trip) => {
                let (status, position, link) = match self.state.traffic.place(trip.token) {
                    Some(TokenPlace::Queued { node, link, .. }) => (AgentStatus::Queued, g.node(node).position, Some(link)),
                    Some(TokenPlace::OnLink { link, entered, toward }) => {
                        let (a_end, b_end) = g.link_ends(link);
                        let from = if toward == b_end { a_end } else { b_end };
                        let total = g.traversal_time(link, trip.mode).unwrap_or(1).max(1);
                        let frac = (f64::from(tick.saturating_sub(entered)) / f64::from(total)).clamp(0.0, 1.0);
                        let p = g.node(from).position;
                        let q = g.node(toward).position;
                        (AgentStatus::Travelling, [p[0] + (q[0] - p[0]) * frac, p[1] + (q[1] - p[1]) * frac], Some(link))
                    }
                    None => (AgentStatus::Travelling, facility_pos(&trip.origin), None),
                };
                AgentView {
                    name: a.profile.name.clone(),
                    status,
                    position,
                    facility: None,
                    link: link.map(|l| g.link(l).id.clone()),
                    mode: Some(trip.mode),
                    destination: Some(trip.destination.clone()),
                }
            }
        }
    }

    pub fn view(&self) -> StateView {
        StateView {
            tick: self.state.tick,
            date: self.date(),
            time: ClockTime::from_tick(self.state.tick),
            finished: self.state.finished,
            links: congestion_snapshot(&self.state.traffic, self.graph()),
            agents: self.state.agents.iter().map(|a| self.agent_view(a)).collect(),
            active_events: self.state.active_events.iter().map(|&k| self.state.events[k].describe()).collect(),
        }
    }

    pub fn agent_detail(&self, name: &str) -> Option<AgentDetail> {
        let a = &self.state.agents[self.agent_index(name)?];
        let mut recent: Vec<_> = a.mind.store.nodes().iter().collect();
        recent.sort_by(|x, y| y.created_at.cmp(&x.created_at).then(y.id.cmp(&x.id)));
        Some(AgentDetail {
            view: self.agent_view(a),
            profile: a.profile.clone(),
            plan: a.rt.plan.clone(),
            current_entry: a.rt.current,
            revisions: a.mind.short_term.revisions.iter().map(|r| r.history_line()).collect(),
            reflections: a.mind.daily.clone(),
            memory_count: a.mind.store.len(),
            recent_memories: recent.into_iter().take(10).map(|n| n.content.clone()).collect(),
        })
    }
}
