//! Tick-driven simulation loop: scenario events, agent runtime, logs and checkpoints.

mod config;
mod log;
mod runtime;
mod scenario;
mod view;
mod world;

use thiserror::Error;

use crate::cognition::CognitionError;
use crate::gateway::GatewayError;
use crate::net::NetError;

pub use config::{BackendChoice, SimConfig};
pub use log::{LogEvent, RunInfo, RunLog, TrafficRow, TripRow, EVENTS_FILE, RUN_FILE, TRAFFIC_FILE, TRIPS_FILE};
pub use runtime::{needs_plan_update, AgentRuntime, AgentState, HouseholdCars, Place, Trigger, Trip, VehicleRegistry};
pub use scenario::{parse_event_text, road_link_ids, EventKind, ScenarioEvent};
pub use view::{AgentDetail, AgentStatus, AgentView, StateView};
pub use world::{describe_network, Checkpoint, World, WorldState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("unknown link {link}; valid road links: {}", .valid.join(", "))]
    UnknownLink { link: String, valid: Vec<String> },
    #[error("unknown agent {0}")]
    UnknownAgent(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Cognition(#[from] CognitionError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io: {0}")]
    Io(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
