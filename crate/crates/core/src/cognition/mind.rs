use std::collections::BTreeSet;
use std::sync::LazyLock;

use chrono::{NaiveDate, NaiveDateTime};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::validate::{repair_plan, validate_plan, ValidationContext, Violation};
use super::{ActivityPlan, AgentProfile, CognitionError, PathSpec, PlanRevision, RevisionAction};
use crate::clock::{format_stamp, ClockTime};
use crate::gateway::{
    ChatContext, ChatInitiateContext, ChatInitiateOutput, ChatResponseOutput, ChatSummaryOutput, ChatTurn, DayLog, Gateway,
    ImportanceContext, ImportanceOutput, InterviewContext, PathInfoContext, PathInfoOutput, PlanContext, PlanOutput,
    ReactionContext, ReactionOutput, ReflectionContext, ReflectionOutput, SocialContact, TaskKind, Var, VarBundle,
};
use crate::memory::{ConceptKind, Embedder, MemoryStore, NewConcept, RetrievalQuery, RetrievalWeights, TimeScope};
use crate::net::NetworkGraph;

/// Upper bound on turns in one conversation.
pub const MAX_CHAT_TURNS: usize = 6;
/// Regenerations allowed after the first invalid plan.
pub const MAX_PLAN_RETRIES: usize = 3;

static ELEMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z]+_\d+(?:_link_\d+)?").unwrap());

/// Shared, read-only services a cognition call needs.
#[derive(Clone, Copy)]
pub struct CognitionEnv<'a> {
    pub gateway: &'a Gateway,
    pub embedder: &'a dyn Embedder,
    pub graph: &'a NetworkGraph,
    pub weights: &'a RetrievalWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionScale {
    Immediate,
    Daily,
    Longterm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionRecord {
    pub scale: ReflectionScale,
    pub date: NaiveDate,
    pub content: String,
    /// Memory nodes created from this reflection.
    pub concepts: Vec<u64>,
}

/// Working state for the current day.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShortTermMemory {
    pub date: Option<NaiveDate>,
    pub initial_plan: Option<ActivityPlan>,
    pub revisions: Vec<PlanRevision>,
    pub perceptions: Vec<String>,
    pub chat_summaries: Vec<String>,
    /// `partner|topic` keys of today's conversations.
    pub discussed: Vec<String>,
    pub immediate: Vec<ReflectionRecord>,
}

impl ShortTermMemory {
    /// Revision history as rendered into reaction prompts.
    pub fn history_text(&self) -> String {
        if self.revisions.is_empty() {
            return "No revisions yet today.".into();
        }
        self.revisions.iter().map(PlanRevision::history_line).collect::<Vec<_>>().join("\n")
    }
}

/// Everything one agent knows and has concluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mind {
    pub store: MemoryStore,
    /// The single evolving long-term reflection.
    pub longterm: String,
    pub daily: Vec<ReflectionRecord>,
    pub immediate_total: usize,
    pub short_term: ShortTermMemory,
    pub prev_plan: Option<ActivityPlan>,
    pub prev_daily: String,
}

/// Inputs to daily planning supplied by the world.
#[derive(Debug, Clone)]
pub struct PlanInputs {
    pub date: NaiveDate,
    pub now: NaiveDateTime,
    pub household_vehicles: u32,
    pub vehicles_claimed: u32,
    pub car_claim: Option<bool>,
    pub broadcasts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub plan: ActivityPlan,
    /// Backend calls made, including regenerations.
    pub attempts: usize,
    /// Violations of the last rejected plan when the accepted one came from repair.
    pub repaired: Option<Vec<Violation>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterviewExchange {
    pub agent: String,
    pub question: String,
    pub answer: String,
    /// Memories shown to the backend, best first.
    pub context: Vec<String>,
    pub persisted: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatOutcome {
    pub topic: String,
    pub transcript: Vec<ChatTurn>,
    pub summary: String,
}

/// Network link ids and facility names mentioned in `text`.
pub fn mentioned_elements(graph: &NetworkGraph, text: &str) -> BTreeSet<String> {
    let mut out: BTreeSet<String> =
        ELEMENT.find_iter(text).map(|m| m.as_str().to_string()).filter(|id| graph.link_idx(id).is_some()).collect();
    for f in graph.facilities() {
        if text.contains(&f.name) {
            out.insert(f.name.clone());
        }
    }
    out
}

/// Fallback daily summary used when the backend fails.
pub fn templated_reflection(log: &DayLog) -> String {
    if log.is_empty() {
        return "An uneventful day.".into();
    }
    let waited: u32 = log.waits.iter().map(|w| w.minutes).sum();
    let mut s = format!("Made {} trip(s) and waited {waited} min in queues.", log.trips.len());
    if let Some(w) = log.waits.iter().max_by_key(|w| w.minutes) {
        s.push_str(&format!(" Longest wait: {} min on {}.", w.minutes, w.link));
    }
    for l in &log.incidents {
        s.push_str(&format!(" Incident on {l}."));
    }
    for w in &log.avoided {
        s.push_str(&format!(" Rerouted around {} ({} min expected).", w.link, w.minutes));
    }
    for m in &log.missed {
        s.push_str(&format!(" Missed {m}."));
    }
    if log.teleported {
        s.push_str(" Did not get home before midnight.");
    }
    s
}

fn day_scope(date: NaiveDate) -> TimeScope {
    TimeScope::span(date.and_hms_opt(0, 0, 0).unwrap(), 1440)
}

impl Mind {
    pub fn new(agent: &str) -> Self {
        Mind {
            store: MemoryStore::new(agent),
            longterm: String::new(),
            daily: Vec::new(),
            immediate_total: 0,
            short_term: ShortTermMemory::default(),
            prev_plan: None,
            prev_daily: String::new(),
        }
    }

    /// Starts a new day: yesterday's final plan becomes the previous plan and working
    /// memory is cleared.
    pub fn begin_day(&mut self, date: NaiveDate, yesterday_plan: Option<ActivityPlan>) {
        if yesterday_plan.is_some() {
            self.prev_plan = yesterday_plan;
        }
        self.short_term = ShortTermMemory { date: Some(date), ..Default::default() };
    }

    fn bundle(&self, env: &CognitionEnv<'_>, profile: &AgentProfile, now: NaiveDateTime) -> VarBundle {
        env.gateway.base_bundle().with(Var::PersonProfile, profile.describe()).with(Var::CurrentTime, format_stamp(now))
    }

    /// Importance from the backend; falls back to the neutral 0.5 when it fails.
    pub fn importance(env: &CognitionEnv<'_>, agent: &str, kind: ConceptKind, text: &str) -> f64 {
        let bundle =
            env.gateway.base_bundle().with(Var::ConceptType, kind.as_str()).with(Var::ConceptDescription, text.to_string());
        let ctx = ImportanceContext { kind, description: text.to_string() };
        match env.gateway.complete::<_, ImportanceOutput>(TaskKind::ImportanceScore, agent, &bundle, &ctx) {
            Ok(o) => o.score.clamp(0.0, 1.0),
            Err(e) => {
                tracing::warn!(agent, error = %e, "importance scoring failed");
                0.5
            }
        }
    }

    /// Adds a memory whose importance the backend scores.
    pub fn remember(
        &mut self,
        env: &CognitionEnv<'_>,
        kind: ConceptKind,
        content: &str,
        at: NaiveDateTime,
        spatial: BTreeSet<String>,
        temporal: TimeScope,
    ) -> Result<u64, CognitionError> {
        let agent = self.store.agent.clone();
        let importance = Self::importance(env, &agent, kind, content);
        let c = NewConcept::new(kind, content, importance, at).spatial(spatial).temporal(temporal);
        Ok(self.store.add(c, env.embedder)?)
    }

    /// Top memories for `text` as prompt lines, best first.
    pub fn recall(&mut self, env: &CognitionEnv<'_>, text: &str, spatial: BTreeSet<String>, temporal: TimeScope, now: NaiveDateTime) -> Vec<String> {
        let q = RetrievalQuery::from_text(text, env.embedder, spatial, temporal, now);
        self.store
            .retrieve(&q, env.weights)
            .into_iter()
            .map(|(n, _)| format!("[{}] {}", n.created_at.format("%Y-%m-%d %H:%M"), n.content))
            .collect()
    }

    /// Builds today's plan, regenerating up to [`MAX_PLAN_RETRIES`] times on violations
    /// before falling back to a repaired plan.
    pub fn generate_daily_plan(&mut self, env: &CognitionEnv<'_>, profile: &AgentProfile, inp: &PlanInputs) -> Result<PlanResult, CognitionError> {
        let query = format!(
            "daily plan commute {} {} departure delay congestion",
            profile.work_facility.as_deref().unwrap_or(""),
            profile.home_facility
        );
        let retrieved = self.recall(env, &query, BTreeSet::new(), day_scope(inp.date), inp.now);
        let prev_plan = self.prev_plan.as_ref().map(|p| p.to_json()).unwrap_or_default();
        let perception = inp.broadcasts.join("\n");
        let mut bundle = self
            .bundle(env, profile, inp.now)
            .with(Var::PrevDayPlanAndReflection, format!("Plan: {prev_plan}\nLong-term reflection: {}", self.longterm))
            .with(Var::PrevDayReflection, self.prev_daily.clone())
            .with(Var::Perception, perception.clone())
            .with(Var::Retrieved, retrieved.join("\n"))
            .with(Var::RecentChats, self.short_term.chat_summaries.join("\n"));
        let ctx = PlanContext {
            profile: profile.clone(),
            date: inp.date,
            prev_longterm: self.longterm.clone(),
            prev_daily: self.prev_daily.clone(),
            household_vehicles: inp.household_vehicles,
            car_claim: inp.car_claim,
            recent_chats: self.short_term.chat_summaries.clone(),
            broadcasts: inp.broadcasts.clone(),
        };
        let vctx = ValidationContext {
            graph: env.graph,
            household_vehicles: inp.household_vehicles,
            vehicles_claimed: inp.vehicles_claimed,
            now: ClockTime::hm(0, crate::clock::minute_of_day(inp.now)),
            start: None,
        };
        let mut last: Option<(PlanOutput, Vec<Violation>)> = None;
        for attempt in 0..=MAX_PLAN_RETRIES {
            let out: PlanOutput = env.gateway.complete(TaskKind::InitialPlan, &profile.name, &bundle, &ctx)?;
            let report = validate_plan(&out.plan, profile, &vctx);
            if report.is_valid() {
                self.accept_plan(env, profile, inp, &out)?;
                return Ok(PlanResult { plan: out.plan, attempts: attempt + 1, repaired: None, warnings: report.warnings });
            }
            tracing::debug!(agent = %profile.name, attempt, violations = report.violations.len(), "plan rejected");
            let notes: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
            bundle.set(Var::Perception, format!("{perception}\nYour previous plan was rejected:\n{}", notes.join("\n")));
            last = Some((out, report.violations));
        }
        let (mut out, violations) = last.expect("at least one attempt");
        out.plan = repair_plan(&out.plan, profile, &vctx);
        let report = validate_plan(&out.plan, profile, &vctx);
        if !report.is_valid() {
            return Err(CognitionError::InvalidPlan { attempts: MAX_PLAN_RETRIES + 1, violations: report.violations });
        }
        tracing::warn!(agent = %profile.name, "using repaired plan");
        self.accept_plan(env, profile, inp, &out)?;
        Ok(PlanResult { plan: out.plan, attempts: MAX_PLAN_RETRIES + 1, repaired: Some(violations), warnings: report.warnings })
    }

    fn accept_plan(&mut self, env: &CognitionEnv<'_>, profile: &AgentProfile, inp: &PlanInputs, out: &PlanOutput) -> Result<(), CognitionError> {
        self.longterm = out.longterm_reflection.clone();
        let spatial = mentioned_elements(env.graph, &self.longterm);
        self.remember(env, ConceptKind::Thought, &self.longterm.clone(), inp.now, spatial, day_scope(inp.date))?;
        for c in &out.concepts {
            self.remember(env, ConceptKind::Thought, c, inp.now, mentioned_elements(env.graph, c), day_scope(inp.date))?;
        }
        self.short_term.date = Some(inp.date);
        self.short_term.initial_plan = Some(out.plan.clone());
        tracing::trace!(agent = %profile.name, plan = %out.plan, "plan accepted");
        Ok(())
    }

    /// Asks the backend whether to change the plan. Backend failures become `continue`
    /// with a tagged rationale. The revision is recorded along with an immediate
    /// reflection node.
    pub fn revise_plan(
        &mut self,
        env: &CognitionEnv<'_>,
        ctx: &ReactionContext,
        progress: &str,
        traffic: &str,
        at: NaiveDateTime,
    ) -> Result<PlanRevision, CognitionError> {
        let profile = &ctx.profile;
        let spatial: BTreeSet<String> = ctx.remaining_path.iter().cloned().chain(ctx.destination.clone()).collect();
        let query = format!("{} {} {}", ctx.trigger, ctx.remaining_path.join(" "), ctx.destination.as_deref().unwrap_or(""));
        let retrieved = self.recall(env, &query, spatial.clone(), TimeScope::span(at, 60), at);
        let mut perception = self.short_term.perceptions.clone();
        perception.extend(ctx.broadcasts.iter().cloned());
        let bundle = self
            .bundle(env, profile, at)
            .with(Var::TodayInitialPlan, self.short_term.initial_plan.as_ref().map(|p| p.to_json()).unwrap_or_default())
            .with(Var::TodayReactionHistory, self.short_term.history_text())
            .with(Var::CurrentActivityProgress, progress.to_string())
            .with(Var::Perception, perception.join("\n"))
            .with(Var::Retrieved, retrieved.join("\n"))
            .with(Var::RealtimeTrafficState, traffic.to_string())
            .with(Var::RecentChats, self.short_term.chat_summaries.join("\n"));
        let (action, rationale) = match env.gateway.complete::<_, ReactionOutput>(TaskKind::Reaction, &profile.name, &bundle, ctx) {
            Ok(out) => self.to_action(env, &profile.name, out),
            Err(e) => {
                tracing::warn!(agent = %profile.name, error = %e, "reaction failed");
                (RevisionAction::Continue, format!("[backend error: {e}] keeping the current plan"))
            }
        };
        let rev = PlanRevision { at, trigger: ctx.trigger.clone(), action, rationale };
        let text = format!("{}: decided to {} ({}). {}", format_stamp(at), rev.decision().as_str(), rev.trigger, rev.rationale);
        let mut cover = spatial;
        cover.extend(mentioned_elements(env.graph, &rev.rationale));
        let id = self.remember(env, ConceptKind::Thought, &text, at, cover, TimeScope::span(at, 60))?;
        self.short_term.immediate.push(ReflectionRecord {
            scale: ReflectionScale::Immediate,
            date: at.date(),
            content: text,
            concepts: vec![id],
        });
        self.immediate_total += 1;
        self.short_term.revisions.push(rev.clone());
        Ok(rev)
    }

    fn to_action(&self, env: &CognitionEnv<'_>, agent: &str, out: ReactionOutput) -> (RevisionAction, String) {
        let rationale = out.rationale.clone();
        let fallback = |why: &str| (RevisionAction::Continue, format!("[unusable {why}] {rationale}"));
        match out.decision.trim().to_lowercase().as_str() {
            "continue" => (RevisionAction::Continue, rationale),
            "path_update" => {
                let raw = out.path.clone().unwrap_or_default();
                let mut spec = PathSpec::parse(&raw);
                let known = |s: &String| {
                    env.graph.link_idx(s).is_some()
                        || env.graph.links().iter().any(|l| NetworkGraph::street_of(&l.id) == s || l.line_id.as_deref() == Some(s.as_str()))
                };
                if let PathSpec::Explicit(items) = &spec {
                    if !items.iter().all(known) {
                        let bundle = VarBundle::new().with(Var::PathString, raw.clone());
                        spec = match env.gateway.complete::<_, PathInfoOutput>(
                            TaskKind::ExtractPathInfo,
                            agent,
                            &bundle,
                            &PathInfoContext { path_string: raw.clone() },
                        ) {
                            Ok(p) if !p.links.is_empty() => PathSpec::Explicit(p.links),
                            _ => return fallback("path"),
                        };
                    }
                }
                (RevisionAction::PathUpdate { path: spec }, rationale)
            }
            "departure_adjust" => match out.departure.as_deref().and_then(|d| d.trim().parse::<ClockTime>().ok()) {
                Some(departure) => (RevisionAction::DepartureAdjust { departure }, rationale),
                None => fallback("departure"),
            },
            "partial_replace" => match out.entries {
                Some(entries) => (RevisionAction::PartialReplace { entries }, rationale),
                None => fallback("entries"),
            },
            "full_replace" => match out.entries {
                Some(entries) => (RevisionAction::FullReplace { plan: ActivityPlan::new(entries) }, rationale),
                None => fallback("plan"),
            },
            _ => fallback("decision"),
        }
    }

    /// End-of-day summary. Falls back to a templated text when the backend fails.
    pub fn daily_reflection(
        &mut self,
        env: &CognitionEnv<'_>,
        profile: &AgentProfile,
        date: NaiveDate,
        log: &DayLog,
        at: NaiveDateTime,
    ) -> Result<ReflectionRecord, CognitionError> {
        let bundle = self
            .bundle(env, profile, at)
            .with(Var::TodayInitialPlan, self.short_term.initial_plan.as_ref().map(|p| p.to_json()).unwrap_or_default())
            .with(Var::TodayReactionHistory, self.short_term.history_text());
        let ctx = ReflectionContext { profile: profile.clone(), date, day_log: log.clone() };
        let text = match env.gateway.complete::<_, ReflectionOutput>(TaskKind::DailyReflection, &profile.name, &bundle, &ctx) {
            Ok(o) => o.reflection,
            Err(e) => {
                tracing::warn!(agent = %profile.name, error = %e, "daily reflection failed; using template");
                templated_reflection(log)
            }
        };
        let mut cover = mentioned_elements(env.graph, &text);
        cover.extend(log.waits.iter().chain(&log.avoided).map(|w| w.link.clone()));
        cover.extend(log.incidents.iter().cloned());
        let id = self.remember(env, ConceptKind::Thought, &format!("Daily reflection for {date}: {text}"), at, cover, day_scope(date))?;
        let rec = ReflectionRecord { scale: ReflectionScale::Daily, date, content: text.clone(), concepts: vec![id] };
        self.daily.push(rec.clone());
        self.prev_daily = text;
        Ok(rec)
    }

    /// Memory of failing to get home, written when the agent is teleported.
    pub fn note_failure(&mut self, env: &CognitionEnv<'_>, cancelled: &[String], at: NaiveDateTime) -> Result<u64, CognitionError> {
        let mut text = "Failed to get home before midnight and was teleported home; need to leave earlier.".to_string();
        if !cancelled.is_empty() {
            text.push_str(&format!(" Could not complete: {}.", cancelled.join(", ")));
        }
        let cover = cancelled.iter().cloned().collect();
        self.remember(env, ConceptKind::Thought, &text, at, cover, TimeScope::span(at, 60))
    }

    /// Lets the agent decide whether to open a conversation today.
    pub fn consider_chat(
        &mut self,
        env: &CognitionEnv<'_>,
        profile: &AgentProfile,
        contacts: Vec<SocialContact>,
        household_vehicles: u32,
        at: NaiveDateTime,
    ) -> Result<ChatInitiateOutput, CognitionError> {
        let retrieved = self.recall(env, "meet friends family car plans", BTreeSet::new(), TimeScope::empty(), at);
        let bundle = self
            .bundle(env, profile, at)
            .with(Var::Perception, self.short_term.perceptions.join("\n"))
            .with(Var::Retrieved, retrieved.join("\n"));
        let ctx = ChatInitiateContext {
            profile: profile.clone(),
            date: at.date(),
            now: ClockTime::hm(0, crate::clock::minute_of_day(at)),
            contacts,
            household_vehicles,
            discussed: self.short_term.discussed.clone(),
        };
        Ok(env.gateway.complete(TaskKind::ChatInitiateNewDay, &profile.name, &bundle, &ctx)?)
    }

    /// Answers an operator question from the agent's own profile and memories.
    pub fn interview(
        &mut self,
        env: &CognitionEnv<'_>,
        profile: &AgentProfile,
        question: &str,
        plan: Option<&ActivityPlan>,
        persist: bool,
        at: NaiveDateTime,
    ) -> Result<InterviewExchange, CognitionError> {
        // An interview that is not kept must leave the mind exactly as it was.
        let retrieved = if persist {
            self.recall(env, question, BTreeSet::new(), TimeScope::empty(), at)
        } else {
            let q = RetrievalQuery::from_text(question, env.embedder, BTreeSet::new(), TimeScope::empty(), at);
            self.store.peek(&q, env.weights).into_iter().map(|(n, _)| format!("[{}] {}", n.created_at.format("%Y-%m-%d %H:%M"), n.content)).collect()
        };
        let bundle = self
            .bundle(env, profile, at)
            .with(Var::Perception, self.short_term.perceptions.join("\n"))
            .with(Var::Retrieved, retrieved.join("\n"))
            .with(Var::RealtimeTrafficState, String::new())
            .with(Var::OngoingChat, format!("Interviewer: {question}"));
        let ctx = InterviewContext { profile: profile.clone(), question: question.to_string(), retrieved: retrieved.clone(), plan: plan.cloned() };
        let out: ChatResponseOutput = env.gateway.complete(TaskKind::ChatResponse, &profile.name, &bundle, &ctx)?;
        let persisted = if persist {
            let text = format!("Interviewer asked: {question} I answered: {}", out.message);
            Some(self.remember(env, ConceptKind::Chat, &text, at, mentioned_elements(env.graph, &text), TimeScope::span(at, 10))?)
        } else {
            None
        };
        Ok(InterviewExchange { agent: profile.name.clone(), question: question.to_string(), answer: out.message, context: retrieved, persisted })
    }
}

/// One side of a conversation.
pub struct Participant<'m> {
    pub profile: &'m AgentProfile,
    pub mind: &'m mut Mind,
}

fn topic_key(partner: &str, topic: &str) -> String {
    format!("{partner}|{topic}")
}

/// Runs a bounded conversation and stores one summary node per participant.
///
/// `network` is the initiator's family and friends. A topic already discussed by the
/// pair today is suppressed.
#[allow(clippy::too_many_arguments)]
pub fn coordinate_chat(
    env: &CognitionEnv<'_>,
    a: Participant<'_>,
    b: Participant<'_>,
    network: &[String],
    topic: &str,
    opening: &str,
    facts: &std::collections::BTreeMap<String, String>,
    at: NaiveDateTime,
) -> Result<ChatOutcome, CognitionError> {
    let (an, bn) = (a.profile.name.clone(), b.profile.name.clone());
    if !network.contains(&bn) {
        return Err(CognitionError::NotInNetwork { agent: an, partner: bn });
    }
    if a.mind.short_term.discussed.contains(&topic_key(&bn, topic)) || b.mind.short_term.discussed.contains(&topic_key(&an, topic)) {
        tracing::info!(a = %an, b = %bn, topic, "repeat chat suppressed");
        return Err(CognitionError::ChatSuppressed { a: an, b: bn, topic: topic.to_string() });
    }
    let parts = [a, b];
    let mut transcript = vec![ChatTurn { speaker: an.clone(), text: opening.to_string() }];
    let transcript_text = |t: &[ChatTurn]| t.iter().map(|c| format!("{}: {}", c.speaker, c.text)).collect::<Vec<_>>().join("\n");
    let mut minds: Vec<(&AgentProfile, &mut Mind)> = parts.into_iter().map(|p| (p.profile, p.mind)).collect();
    while transcript.len() < MAX_CHAT_TURNS {
        let who = transcript.len() % 2;
        let partner = minds[1 - who].0.name.clone();
        let (profile, mind) = &mut minds[who];
        let retrieved = mind.recall(env, &format!("{topic} {partner}"), BTreeSet::new(), TimeScope::empty(), at);
        let bundle = mind
            .bundle(env, profile, at)
            .with(Var::Perception, mind.short_term.perceptions.join("\n"))
            .with(Var::Retrieved, retrieved.join("\n"))
            .with(Var::RealtimeTrafficState, String::new())
            .with(Var::OngoingChat, transcript_text(&transcript));
        let ctx = ChatContext {
            profile: (*profile).clone(),
            partner,
            topic: topic.to_string(),
            date: at.date(),
            transcript: transcript.clone(),
            facts: facts.clone(),
        };
        let out: ChatResponseOutput = env.gateway.complete(TaskKind::ChatResponse, &profile.name, &bundle, &ctx)?;
        if transcript.iter().any(|t| t.text == out.message) {
            break;
        }
        transcript.push(ChatTurn { speaker: profile.name.clone(), text: out.message });
        if out.end {
            break;
        }
    }
    let (p0, m0) = &minds[0];
    let bundle = m0.bundle(env, p0, at).with(Var::OngoingChat, transcript_text(&transcript));
    let ctx = ChatContext {
        profile: (*p0).clone(),
        partner: bn.clone(),
        topic: topic.to_string(),
        date: at.date(),
        transcript: transcript.clone(),
        facts: facts.clone(),
    };
    let summary = env.gateway.complete::<_, ChatSummaryOutput>(TaskKind::ChatSummary, &an, &bundle, &ctx)?.summary;
    for (i, (_, mind)) in minds.iter_mut().enumerate() {
        let other = if i == 0 { &bn } else { &an };
        let cover = mentioned_elements(env.graph, &summary);
        mind.remember(env, ConceptKind::Chat, &summary, at, cover, day_scope(at.date()))?;
        mind.short_term.chat_summaries.push(summary.clone());
        mind.short_term.discussed.push(topic_key(other, topic));
    }
    Ok(ChatOutcome { topic: topic.to_string(), transcript, summary })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::cognition::Population;
    use crate::gateway::{CognitionBackend, CompletionRequest, GatewayError, ScriptedStub, StubPolicy, TemplateSet, WaitRecord};
    use crate::memory::HashEmbedder;

    struct Fixed(&'static str);

    impl CognitionBackend for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
            match req.task {
                TaskKind::InitialPlan => Ok(self.0.to_string()),
                t => Err(GatewayError::Transport { task: t, reason: "offline".into() }),
            }
        }
    }

    struct World {
        graph: Arc<NetworkGraph>,
        gateway: Gateway,
        embedder: HashEmbedder,
        weights: RetrievalWeights,
    }

    impl World {
        fn new(backend: Option<Arc<dyn CognitionBackend>>) -> Self {
            let graph = Arc::new(NetworkGraph::nguyen_dupuis());
            let backend = backend.unwrap_or_else(|| Arc::new(ScriptedStub::new(StubPolicy::default(), 3, graph.clone())));
            World { gateway: Gateway::new(backend, TemplateSet::default(), 4), graph, embedder: HashEmbedder::default(), weights: RetrievalWeights::default() }
        }
        fn env(&self) -> CognitionEnv<'_> {
            CognitionEnv { gateway: &self.gateway, embedder: &self.embedder, graph: &self.graph, weights: &self.weights }
        }
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 3, 10).unwrap()
    }

    fn worker() -> AgentProfile {
        Population::bundled().agents.into_iter().find(|a| a.work_facility.is_some() && a.licensed_driver).unwrap()
    }

    fn inputs() -> PlanInputs {
        PlanInputs {
            date: date(),
            now: date().and_hms_opt(0, 0, 0).unwrap(),
            household_vehicles: 1,
            vehicles_claimed: 0,
            car_claim: None,
            broadcasts: vec![],
        }
    }

    #[test]
    fn stub_plan_is_accepted_first_time() {
        let w = World::new(None);
        let a = worker();
        let mut m = Mind::new(&a.name);
        let r = m.generate_daily_plan(&w.env(), &a, &inputs()).unwrap();
        assert_eq!(r.attempts, 1);
        assert!(r.repaired.is_none());
        assert_eq!(r.plan.entries.last().unwrap().facility, a.home_facility);
        assert!(!m.longterm.is_empty());
        assert!(!m.store.is_empty());
        assert_eq!(m.short_term.initial_plan.as_ref(), Some(&r.plan));
    }

    #[test]
    fn invalid_plans_are_retried_then_repaired() {
        let bad = r#"{"longterm_reflection": "x", "plan": [["Uptown apartment", "06:00", "30", "none", "none", "wake"], ["Office", "07:00", "none", "drive", "shortest", "work"]]}"#;
        let w = World::new(Some(Arc::new(Fixed(bad))));
        let mut a = worker();
        a.home_facility = "Uptown apartment".into();
        let mut m = Mind::new(&a.name);
        let r = m.generate_daily_plan(&w.env(), &a, &inputs()).unwrap();
        assert_eq!(r.attempts, MAX_PLAN_RETRIES + 1);
        assert!(r.repaired.as_ref().unwrap().iter().any(|v| v.code == crate::cognition::ViolationCode::NotHomeFinal));
        assert_eq!(r.plan.entries.last().unwrap().facility, "Uptown apartment");
    }

    #[test]
    fn backend_failure_during_reaction_continues() {
        let w = World::new(Some(Arc::new(Fixed("{}"))));
        let a = worker();
        let mut m = Mind::new(&a.name);
        let plan = ActivityPlan::from_json(r#"[["Uptown apartment", "06:00", "30", "none", "none", "wake"]]"#).unwrap();
        let ctx = ReactionContext {
            profile: a.clone(),
            date: date(),
            now: ClockTime::hm(7, 40),
            trigger: "waiting_at_node".into(),
            plan,
            current_index: 0,
            location: crate::gateway::AgentLocation::OnLink { link: "Ave_2_link_1".into() },
            mode: crate::net::TravelMode::Drive,
            destination: Some("Office".into()),
            remaining_path: vec!["Ave_2_link_2".into()],
            decision_node: None,
            link_waits: BTreeMap::new(),
            overstay: 0,
            broadcasts: vec![],
        };
        let at = date().and_hms_opt(7, 40, 0).unwrap();
        let rev = m.revise_plan(&w.env(), &ctx, "travelling", "", at).unwrap();
        assert_eq!(rev.action, RevisionAction::Continue);
        assert!(rev.rationale.contains("[backend error"));
        assert_eq!(m.short_term.immediate.len(), 1);
        assert_eq!(m.immediate_total, 1);
        assert_eq!(m.short_term.revisions.len(), 1);
    }

    #[test]
    fn reflection_covers_the_delay_link() {
        let w = World::new(None);
        let a = worker();
        let mut m = Mind::new(&a.name);
        let log = DayLog {
            waits: vec![WaitRecord { link: "Ave_2_link_2".into(), at: ClockTime::hm(7, 45), minutes: 18 }],
            ..Default::default()
        };
        let rec = m.daily_reflection(&w.env(), &a, date(), &log, date().and_hms_opt(23, 0, 0).unwrap()).unwrap();
        assert_eq!(rec.scale, ReflectionScale::Daily);
        let node = m.store.get(rec.concepts[0]).unwrap();
        assert!(node.spatial.contains("Ave_2_link_2"));
        assert_eq!(m.daily.len(), 1);
        assert_eq!(m.prev_daily, rec.content);
    }

    #[test]
    fn reflection_falls_back_to_template() {
        let w = World::new(Some(Arc::new(Fixed("{}"))));
        let a = worker();
        let mut m = Mind::new(&a.name);
        let rec = m.daily_reflection(&w.env(), &a, date(), &DayLog::default(), date().and_hms_opt(23, 0, 0).unwrap()).unwrap();
        assert_eq!(rec.content, "An uneventful day.");
    }

    #[test]
    fn chat_is_symmetric_and_not_repeated() {
        let w = World::new(None);
        let pop = Population::bundled();
        let a = pop.agents[0].clone();
        let b = pop.agents[1].clone();
        let (mut ma, mut mb) = (Mind::new(&a.name), Mind::new(&b.name));
        let at = date().and_hms_opt(6, 0, 0).unwrap();
        let net = vec![b.name.clone()];
        let facts = BTreeMap::new();
        let out = coordinate_chat(
            &w.env(),
            Participant { profile: &a, mind: &mut ma },
            Participant { profile: &b, mind: &mut mb },
            &net,
            "weekend",
            "Free this weekend?",
            &facts,
            at,
        )
        .unwrap();
        assert!(out.transcript.len() <= MAX_CHAT_TURNS);
        assert_eq!(ma.store.count_kind(ConceptKind::Chat), 1);
        assert_eq!(mb.store.count_kind(ConceptKind::Chat), 1);
        let again = coordinate_chat(
            &w.env(),
            Participant { profile: &b, mind: &mut mb },
            Participant { profile: &a, mind: &mut ma },
            std::slice::from_ref(&a.name),
            "weekend",
            "Free this weekend?",
            &facts,
            at,
        );
        assert!(matches!(again, Err(CognitionError::ChatSuppressed { .. })));
        let stranger = coordinate_chat(
            &w.env(),
            Participant { profile: &a, mind: &mut ma },
            Participant { profile: &b, mind: &mut mb },
            &[],
            "dinner",
            "Dinner?",
            &facts,
            at,
        );
        assert!(matches!(stranger, Err(CognitionError::NotInNetwork { .. })));
    }

    #[test]
    fn interview_persists_only_on_request() {
        let w = World::new(None);
        let a = worker();
        let mut m = Mind::new(&a.name);
        let at = date().and_hms_opt(12, 0, 0).unwrap();
        m.remember(&w.env(), ConceptKind::Event, "Severe delay on Ave_2_link_2 this morning.", at, BTreeSet::new(), TimeScope::empty()).unwrap();
        let before = m.store.len();
        let x = m.interview(&w.env(), &a, "How was your commute?", None, false, at).unwrap();
        assert!(!x.answer.is_empty());
        assert_eq!(m.store.len(), before);
        let y = m.interview(&w.env(), &a, "How was your commute?", None, true, at).unwrap();
        assert!(y.persisted.is_some());
        assert_eq!(m.store.len(), before + 1);
    }

    #[test]
    fn mentions_are_limited_to_known_elements() {
        let g = NetworkGraph::nguyen_dupuis();
        let m = mentioned_elements(&g, "Avoid Ave_2_link_2 and Foo_9_link_1 near the Office.");
        assert_eq!(m.into_iter().collect::<Vec<_>>(), vec!["Ave_2_link_2".to_string(), "Office".to_string()]);
    }
}
