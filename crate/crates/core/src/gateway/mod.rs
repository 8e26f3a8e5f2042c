//! Foundation-model access: task routing, prompt templates, backends and the scripted stub.

mod backend;
mod context;
mod population;
mod remote;
mod stub;
mod task;
mod template;

pub use backend::{extract_json_object, CognitionBackend, CompletionRequest, Gateway, InFlightLimit, Permit};
pub use context::{
    AgentLocation, ChatContext, ChatInitiateContext, ChatInitiateOutput, ChatResponseOutput, ChatSummaryOutput, ChatTurn,
    DayLog, ImportanceContext, ImportanceOutput, InterviewContext, PathInfoContext, PathInfoOutput, PlanContext,
    PlanOutput, ReactionContext, ReactionOutput, ReflectionContext, ReflectionOutput, SocialContact, TripPurpose,
    TripRecord, WaitRecord,
};
pub use population::{synthesize_population, validate_population, PopulationConstraints};
pub use remote::{RemoteBackend, RemoteConfig, API_KEY_ENV};
pub use stub::{ScriptedStub, StubPolicy, DEFAULT_POLICY};
pub use task::{route, ModelTier, TaskKind, Var};
pub use template::{has_slot_marker, PromptTemplate, TemplateSet, VarBundle};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("template for {task}: {reason}")]
    Template { task: TaskKind, reason: String },
    #[error("{task} prompt is missing required var {index} ({name})")]
    MissingVar { task: TaskKind, index: u8, name: &'static str },
    #[error("{task} backend transport failure: {reason}")]
    Transport { task: TaskKind, reason: String },
    #[error("{task} output does not match schema: {reason}")]
    Schema { task: TaskKind, reason: String },
    #[error("invalid stub policy: {0}")]
    Policy(String),
    #[error("population validation failed: {}", .0.join("; "))]
    Population(Vec<String>),
}
