use std::collections::{BTreeMap, VecDeque};

use civitas_core::cognition::InterviewExchange;
use civitas_core::net::LinkCongestion;
use civitas_core::sim::{parse_event_text, AgentView, ScenarioEvent, SimError, StateView, World};
use civitas_core::{ClockTime, Tick};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Ticks per second while running, unless changed with `set_speed`.
pub const DEFAULT_SPEED: f64 = 1.0;
/// Past views kept for `GET /state?at=`.
pub const DEFAULT_HISTORY: usize = 1440;

/// Operator command. Applied between steps, in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionCommand {
    Start,
    Pause,
    Resume,
    SetSpeed { speed: f64 },
    StepN { n: u32 },
    InjectEvent {
        #[serde(default)]
        text: Option<String>,
        #[serde(default)]
        event: Option<ScenarioEvent>,
    },
    Interview {
        agent: String,
        question: String,
        #[serde(default)]
        persist: bool,
    },
}

impl SessionCommand {
    pub fn validate(&self) -> Result<(), ServiceError> {
        match self {
            SessionCommand::SetSpeed { speed } if !(speed.is_finite() && *speed > 0.0) => {
                Err(ServiceError::BadRequest("speed must be a positive number".into()))
            }
            SessionCommand::StepN { n: 0 } => Err(ServiceError::BadRequest("step_n needs n >= 1".into())),
            SessionCommand::InjectEvent { text: None, event: None } => {
                Err(ServiceError::BadRequest("inject_event needs `text` or `event`".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Pending event awaiting confirmation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: u64,
    pub event: ScenarioEvent,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum CommandOutcome {
    Status(SessionStatus),
    Stepped { status: SessionStatus, views: usize },
    Proposed(Proposal),
    Interview(InterviewExchange),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub tick: Tick,
    pub time: ClockTime,
    pub paused: bool,
    pub speed: f64,
    pub finished: bool,
}

/// Changes between two consecutive views, as pushed on the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDelta {
    pub tick: Tick,
    pub time: ClockTime,
    pub finished: bool,
    pub links: Vec<LinkCongestion>,
    pub agents: Vec<AgentView>,
    pub active_events: Vec<String>,
}

impl StateDelta {
    pub fn between(prev: Option<&StateView>, next: &StateView) -> Self {
        let links = match prev {
            Some(p) if p.links.len() == next.links.len() => {
                next.links.iter().zip(&p.links).filter(|(n, o)| n != o).map(|(n, _)| n.clone()).collect()
            }
            _ => next.links.clone(),
        };
        let agents = match prev {
            Some(p) if p.agents.len() == next.agents.len() => {
                next.agents.iter().zip(&p.agents).filter(|(n, o)| n != o).map(|(n, _)| n.clone()).collect()
            }
            _ => next.agents.clone(),
        };
        StateDelta { tick: next.tick, time: next.time, finished: next.finished, links, agents, active_events: next.active_events.clone() }
    }
}

/// The simulation plus operator-facing bookkeeping.
pub struct Session {
    world: World,
    paused: bool,
    speed: f64,
    history: VecDeque<StateView>,
    history_limit: usize,
    proposals: BTreeMap<u64, Proposal>,
    next_proposal: u64,
}

impl Session {
    /// Starts paused with the current view recorded.
    pub fn new(world: World) -> Self {
        let mut s = Session {
            world,
            paused: true,
            speed: DEFAULT_SPEED,
            history: VecDeque::new(),
            history_limit: DEFAULT_HISTORY,
            proposals: BTreeMap::new(),
            next_proposal: 1,
        };
        let v = s.world.view();
        s.history.push_back(v);
        s
    }

    pub fn with_history_limit(mut self, n: usize) -> Self {
        self.history_limit = n.max(1);
        while self.history.len() > self.history_limit {
            self.history.pop_front();
        }
        self
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn should_run(&self) -> bool {
        !self.paused && !self.world.is_finished()
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            tick: self.world.tick(),
            time: ClockTime::from_tick(self.world.tick()),
            paused: self.paused,
            speed: self.speed,
            finished: self.world.is_finished(),
        }
    }

    /// Latest view, or the recorded view at `at`.
    pub fn state(&self, at: Option<Tick>) -> Result<StateView, ServiceError> {
        let latest = self.history.back().expect("history is never empty");
        match at {
            None => Ok(latest.clone()),
            Some(t) if t > latest.tick => Err(ServiceError::UnknownTick(t)),
            Some(t) => self.history.iter().find(|v| v.tick == t).cloned().ok_or(ServiceError::UnknownTick(t)),
        }
    }

    /// Advances up to `n` ticks; returns a delta per tick.
    pub fn step_n(&mut self, n: u32) -> Result<Vec<StateDelta>, ServiceError> {
        let mut out = Vec::new();
        for _ in 0..n {
            if self.world.is_finished() {
                break;
            }
            self.world.step()?;
            let v = self.world.view();
            out.push(StateDelta::between(self.history.back(), &v));
            self.history.push_back(v);
            while self.history.len() > self.history_limit {
                self.history.pop_front();
            }
        }
        Ok(out)
    }

    /// Parses or checks an event and holds it until confirmed.
    pub fn propose(&mut self, text: Option<&str>, event: Option<ScenarioEvent>) -> Result<Proposal, ServiceError> {
        let event = match (event, text) {
            (Some(e), _) => {
                e.validate(self.world.graph())?;
                e
            }
            (None, Some(t)) => parse_event_text(t, self.world.graph(), self.world.date())?,
            (None, None) => return Err(ServiceError::BadRequest("need `text` or `event`".into())),
        };
        let id = self.next_proposal;
        self.next_proposal += 1;
        let p = Proposal { id, description: event.describe(), event };
        self.proposals.insert(id, p.clone());
        Ok(p)
    }

    pub fn proposals(&self) -> impl Iterator<Item = &Proposal> {
        self.proposals.values()
    }

    /// Queues a proposed event into the simulation.
    pub fn confirm(&mut self, id: u64) -> Result<Proposal, ServiceError> {
        let p = self.proposals.remove(&id).ok_or(ServiceError::UnknownProposal(id))?;
        self.world.schedule_event(p.event.clone())?;
        tracing::info!(id, event = %p.description, "event confirmed");
        Ok(p)
    }

    pub fn interview(&mut self, agent: &str, question: &str, persist: bool) -> Result<InterviewExchange, ServiceError> {
        Ok(self.world.interview(agent, question, persist)?)
    }

    /// Applies a command; `step_n` deltas are returned for streaming.
    pub fn apply(&mut self, cmd: SessionCommand) -> Result<(CommandOutcome, Vec<StateDelta>), ServiceError> {
        cmd.validate()?;
        Ok(match cmd {
            SessionCommand::Start | SessionCommand::Resume => {
                self.paused = false;
                (CommandOutcome::Status(self.status()), Vec::new())
            }
            SessionCommand::Pause => {
                self.paused = true;
                (CommandOutcome::Status(self.status()), Vec::new())
            }
            SessionCommand::SetSpeed { speed } => {
                self.speed = speed;
                (CommandOutcome::Status(self.status()), Vec::new())
            }
            SessionCommand::StepN { n } => {
                let deltas = self.step_n(n)?;
                (CommandOutcome::Stepped { status: self.status(), views: deltas.len() }, deltas)
            }
            SessionCommand::InjectEvent { text, event } => (CommandOutcome::Proposed(self.propose(text.as_deref(), event)?), Vec::new()),
            SessionCommand::Interview { agent, question, persist } => {
                (CommandOutcome::Interview(self.interview(&agent, &question, persist)?), Vec::new())
            }
        })
    }
}

impl From<SimError> for ServiceError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::UnknownAgent(a) => ServiceError::UnknownAgent(a),
            SimError::UnknownLink { .. } | SimError::Scenario(_) => ServiceError::BadRequest(e.to_string()),
            other => ServiceError::Sim(other.to_string()),
        }
    }
}
