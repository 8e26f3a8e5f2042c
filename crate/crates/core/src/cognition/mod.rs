//! Agent planning, plan revision, reflection, chat coordination and plan validation.

mod mind;
mod plan;
mod profile;
mod validate;

use thiserror::Error;

use crate::gateway::GatewayError;
use crate::memory::MemoryError;

pub use mind::{
    coordinate_chat, mentioned_elements, templated_reflection, ChatOutcome, CognitionEnv, InterviewExchange, Mind, Participant,
    PlanInputs, PlanResult, ReflectionRecord, ReflectionScale, ShortTermMemory, MAX_CHAT_TURNS, MAX_PLAN_RETRIES,
};
pub use plan::{ActivityPlan, Decision, PathSpec, PlanEntry, PlanRevision, RevisionAction};
pub use profile::{AgentProfile, Household, Population};
pub use validate::{repair_plan, resolve_path, resolve_path_between, validate_plan, ValidationContext, ValidationReport, Violation, ViolationCode};

#[derive(Debug, Error)]
pub enum CognitionError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("plan still invalid after {attempts} attempts and repair: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidPlan { attempts: usize, violations: Vec<Violation> },
    #[error("{partner} is not in {agent}'s social network")]
    NotInNetwork { agent: String, partner: String },
    #[error("{a} and {b} already discussed {topic} today")]
    ChatSuppressed { a: String, b: String, topic: String },
}
