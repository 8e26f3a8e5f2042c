use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Every generation task the agents issue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    InitialPlan,
    Reaction,
    ExtractPathInfo,
    DailyReflection,
    ChatInitiateNewDay,
    ChatInitiateDuringDay,
    ChatResponse,
    ChatSummary,
    ImportanceScore,
}

impl TaskKind {
    pub const ALL: [TaskKind; 9] = [
        TaskKind::InitialPlan,
        TaskKind::Reaction,
        TaskKind::ExtractPathInfo,
        TaskKind::DailyReflection,
        TaskKind::ChatInitiateNewDay,
        TaskKind::ChatInitiateDuringDay,
        TaskKind::ChatResponse,
        TaskKind::ChatSummary,
        TaskKind::ImportanceScore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::InitialPlan => "initial_plan",
            TaskKind::Reaction => "reaction",
            TaskKind::ExtractPathInfo => "extract_path_info",
            TaskKind::DailyReflection => "daily_reflection",
            TaskKind::ChatInitiateNewDay => "chat_initiate_new_day",
            TaskKind::ChatInitiateDuringDay => "chat_initiate_during_day",
            TaskKind::ChatResponse => "chat_response",
            TaskKind::ChatSummary => "chat_summary",
            TaskKind::ImportanceScore => "importance_score",
        }
    }

    /// Prompt variables the task's template must receive.
    pub fn required_vars(self) -> &'static [Var] {
        use Var::*;
        match self {
            TaskKind::InitialPlan => &[
                SimulationDescription,
                NetworkDescription,
                PersonProfile,
                CurrentTime,
                PrevDayPlanAndReflection,
                PrevDayReflection,
                Perception,
                Retrieved,
                RecentChats,
            ],
            TaskKind::Reaction => &[
                SimulationDescription,
                NetworkDescription,
                PersonProfile,
                CurrentTime,
                TodayInitialPlan,
                TodayReactionHistory,
                CurrentActivityProgress,
                Perception,
                Retrieved,
                RealtimeTrafficState,
                RecentChats,
            ],
            TaskKind::ExtractPathInfo => &[PathString],
            TaskKind::DailyReflection => &[
                SimulationDescription,
                NetworkDescription,
                PersonProfile,
                CurrentTime,
                TodayInitialPlan,
                TodayReactionHistory,
            ],
            TaskKind::ChatInitiateNewDay => {
                &[SimulationDescription, NetworkDescription, PersonProfile, CurrentTime, Perception, Retrieved]
            }
            TaskKind::ChatInitiateDuringDay => &[
                SimulationDescription,
                NetworkDescription,
                PersonProfile,
                CurrentTime,
                Perception,
                Retrieved,
                RealtimeTrafficState,
            ],
            TaskKind::ChatResponse => &[
                SimulationDescription,
                NetworkDescription,
                PersonProfile,
                CurrentTime,
                Perception,
                Retrieved,
                RealtimeTrafficState,
                OngoingChat,
            ],
            TaskKind::ChatSummary => &[SimulationDescription, NetworkDescription, PersonProfile, OngoingChat],
            TaskKind::ImportanceScore => &[SimulationDescription, NetworkDescription, ConceptType, ConceptDescription],
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown task kind {s}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelTier {
    L,
    M,
    S,
}

/// Model size recommended for each task.
pub fn route(task: TaskKind) -> ModelTier {
    match task {
        TaskKind::InitialPlan => ModelTier::L,
        TaskKind::Reaction | TaskKind::DailyReflection => ModelTier::M,
        _ => ModelTier::S,
    }
}

/// The seventeen prompt variables, numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Var {
    SimulationDescription = 1,
    NetworkDescription = 2,
    PersonProfile = 3,
    CurrentTime = 4,
    PrevDayPlanAndReflection = 5,
    PrevDayReflection = 6,
    TodayInitialPlan = 7,
    TodayReactionHistory = 8,
    CurrentActivityProgress = 9,
    Perception = 10,
    Retrieved = 11,
    RealtimeTrafficState = 12,
    OngoingChat = 13,
    RecentChats = 14,
    ConceptType = 15,
    ConceptDescription = 16,
    PathString = 17,
}

impl Var {
    pub const ALL: [Var; 17] = [
        Var::SimulationDescription,
        Var::NetworkDescription,
        Var::PersonProfile,
        Var::CurrentTime,
        Var::PrevDayPlanAndReflection,
        Var::PrevDayReflection,
        Var::TodayInitialPlan,
        Var::TodayReactionHistory,
        Var::CurrentActivityProgress,
        Var::Perception,
        Var::Retrieved,
        Var::RealtimeTrafficState,
        Var::OngoingChat,
        Var::RecentChats,
        Var::ConceptType,
        Var::ConceptDescription,
        Var::PathString,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    /// Slot name used in templates, e.g. `{{realtime_traffic_state}}`.
    pub fn slot(self) -> &'static str {
        match self {
            Var::SimulationDescription => "simulation_description",
            Var::NetworkDescription => "network_description",
            Var::PersonProfile => "person_profile",
            Var::CurrentTime => "current_time",
            Var::PrevDayPlanAndReflection => "prev_day_plan_and_reflection",
            Var::PrevDayReflection => "prev_day_reflection",
            Var::TodayInitialPlan => "today_initial_plan",
            Var::TodayReactionHistory => "today_reaction_history",
            Var::CurrentActivityProgress => "current_activity_progress",
            Var::Perception => "perception",
            Var::Retrieved => "retrieved",
            Var::RealtimeTrafficState => "realtime_traffic_state",
            Var::OngoingChat => "ongoing_chat",
            Var::RecentChats => "recent_chats",
            Var::ConceptType => "concept_type",
            Var::ConceptDescription => "concept_description",
            Var::PathString => "path_string",
        }
    }

    pub fn from_slot(s: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.slot() == s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routing_table() {
        assert_eq!(route(TaskKind::InitialPlan), ModelTier::L);
        assert_eq!(route(TaskKind::Reaction), ModelTier::M);
        assert_eq!(route(TaskKind::DailyReflection), ModelTier::M);
        assert_eq!(route(TaskKind::ImportanceScore), ModelTier::S);
        for t in TaskKind::ALL {
            assert_eq!(t.as_str().parse::<TaskKind>().unwrap(), t);
        }
    }

    #[test]
    fn var_indices() {
        let idx: Vec<u8> = TaskKind::Reaction.required_vars().iter().map(|v| v.index()).collect();
        assert_eq!(idx, vec![1, 2, 3, 4, 7, 8, 9, 10, 11, 12, 14]);
        let idx: Vec<u8> = TaskKind::InitialPlan.required_vars().iter().map(|v| v.index()).collect();
        assert_eq!(idx, vec![1, 2, 3, 4, 5, 6, 10, 11, 14]);
        for (i, v) in Var::ALL.iter().enumerate() {
            assert_eq!(v.index() as usize, i + 1);
            assert_eq!(Var::from_slot(v.slot()), Some(*v));
        }
    }
}
