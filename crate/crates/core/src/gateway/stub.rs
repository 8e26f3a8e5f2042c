//! Deterministic rule-driven backend.
//!
//! Every answer is a pure function of (policy, seed, request context). Randomized
//! choices draw from a keyed hash instead of an RNG stream so that the answer for one
//! agent never depends on how many other agents asked first.

use std::collections::BTreeSet;
use std::sync::{Arc, LazyLock};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::context::*;
use super::{CognitionBackend, CompletionRequest, GatewayError, TaskKind};
use crate::clock::ClockTime;
use crate::cognition::{ActivityPlan, Decision, PathSpec, PlanEntry};
use crate::memory::tokenize;
use crate::net::{shortest_path, shortest_path_between, CongestionLevel, NetworkGraph, RouteOptions, TravelMode};

/// The shipped default policy.
pub const DEFAULT_POLICY: &str = include_str!("../../data/stub_policy.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubPolicy {
    pub planning: PlanningPolicy,
    #[serde(default)]
    pub reaction: ReactionPolicy,
    pub importance: ImportancePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningPolicy {
    pub departure_buffer: [u32; 2],
    pub learning_rate: [f64; 2],
    pub early_slack: u32,
    pub early_return_rate: f64,
    pub avoid_wait_threshold: u32,
    pub avoid_days: [u32; 2],
    pub transit_switch_lateness: u32,
    pub errand_probability: f64,
    pub errand_facilities: Vec<String>,
    pub errand_minutes: u32,
    pub friend_meetup_probability: f64,
    pub meetup_facilities: Vec<String>,
    pub meetup_minutes: u32,
    pub weekend_outing_probability: f64,
    pub outing_facilities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionPolicy {
    #[serde(default)]
    pub rules: Vec<ReactionRule>,
}

/// Condition on a revision trigger; every present field must hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionRule {
    pub trigger: String,
    #[serde(default)]
    pub min_level: Option<CongestionLevel>,
    #[serde(default)]
    pub alternative_saves: Option<u32>,
    #[serde(default)]
    pub min_overstay: Option<u32>,
    #[serde(default)]
    pub next_is_errand: Option<bool>,
    pub action: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportancePolicy {
    pub default: f64,
    #[serde(default)]
    pub rules: Vec<ImportanceRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceRule {
    pub keywords: Vec<String>,
    pub score: f64,
}

impl Default for StubPolicy {
    fn default() -> Self {
        StubPolicy::from_toml(DEFAULT_POLICY).expect("default policy is valid")
    }
}

impl StubPolicy {
    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        let p: StubPolicy = toml::from_str(text).map_err(|e| GatewayError::Policy(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let pl = &self.planning;
        let bad = |m: &str| Err(GatewayError::Policy(m.to_string()));
        if pl.departure_buffer[0] > pl.departure_buffer[1] || pl.avoid_days[0] > pl.avoid_days[1] {
            return bad("range lower bound exceeds upper bound");
        }
        if !(0.0..=1.0).contains(&pl.learning_rate[0]) || !(0.0..=1.0).contains(&pl.learning_rate[1]) || pl.learning_rate[0] > pl.learning_rate[1] {
            return bad("learning_rate must be an ordered range within [0, 1]");
        }
        for p in [pl.early_return_rate, pl.errand_probability, pl.friend_meetup_probability, pl.weekend_outing_probability] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities and rates must lie in [0, 1]");
            }
        }
        if std::iter::once(self.importance.default).chain(self.importance.rules.iter().map(|r| r.score)).any(|s| !(0.0..=1.0).contains(&s)) {
            return bad("importance scores must lie in [0, 1]");
        }
        for r in &self.reaction.rules {
            if !matches!(r.trigger.as_str(), "waiting_at_node" | "activity_transition" | "periodic") {
                return bad(&format!("unknown trigger {}", r.trigger));
            }
            if r.action == Decision::FullReplace {
                return bad("full_replace is not a scripted action");
            }
        }
        Ok(())
    }
}

/// Hash of `seed` and `parts` mapped to [0, 1).
fn unit(seed: u64, parts: &[&str]) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn pick<'a>(seed: u64, parts: &[&str], items: &'a [String]) -> Option<&'a String> {
    if items.is_empty() {
        return None;
    }
    let i = (unit(seed, parts) * items.len() as f64) as usize;
    items.get(i.min(items.len() - 1))
}

static ARRIVED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"Arrived at (?P<f>[^.(]+?) (?:(?P<n>\d+) min (?P<dir>late|early)|on time) \(departed (?P<t>\d{1,2}:\d{2}) by (?P<m>\w+)\)").unwrap()
});
static SEVERE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Severe (?:delay|congestion) on (?P<l>\w+) \((?:waited|expected) (?P<n>\d+) min").unwrap());
static INCIDENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Incident on (?P<l>\w+)").unwrap());
static MISSED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Missed (?P<f>[^.\n]+)\.").unwrap());
static WORK_DEP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Work departure: (?P<t>\d{1,2}:\d{2}) by (?P<m>\w+)").unwrap());
static AVOID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Avoid: (?P<l>\w+) until (?P<d>\d{4}-\d{2}-\d{2})").unwrap());
static PENDING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Pending: (?P<f>[^\n.]+)").unwrap());
static USUAL_MODE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"Usual mode: (?P<m>\w+)").unwrap());
static MEET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"meet at (?P<f>[A-Za-z ]+?) at (?P<t>\d{1,2}:\d{2})").unwrap());
static CAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?P<a>[A-Z][\w ]+?) takes the car today[;,]? (?:and )?(?P<b>[A-Z][\w ]+?) travels by transit").unwrap());
static LINK_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z]+_\d+(?:_link_\d+)?").unwrap());

/// Facts the stub recovers from the previous long-term reflection.
#[derive(Debug, Default)]
struct LongTerm {
    work_departure: Option<(ClockTime, TravelMode)>,
    avoid: Vec<(String, NaiveDate)>,
    pending: Vec<String>,
    usual_mode: Option<TravelMode>,
}

fn parse_longterm(text: &str) -> LongTerm {
    let mut lt = LongTerm::default();
    if let Some(c) = WORK_DEP.captures(text) {
        if let (Ok(t), Some(m)) = (c["t"].parse(), TravelMode::parse(&c["m"])) {
            lt.work_departure = Some((t, m));
        }
    }
    for c in AVOID.captures_iter(text) {
        if let Ok(d) = NaiveDate::parse_from_str(&c["d"], "%Y-%m-%d") {
            lt.avoid.push((c["l"].to_string(), d));
        }
    }
    lt.pending = PENDING.captures_iter(text).map(|c| c["f"].trim().to_string()).collect();
    lt.usual_mode = USUAL_MODE.captures(text).and_then(|c| TravelMode::parse(&c["m"]));
    lt
}

/// Facts the stub recovers from the previous daily reflection.
#[derive(Debug, Default)]
struct DailyFacts {
    /// (lateness in minutes, negative when early; departure; mode)
    work: Option<(i64, ClockTime, TravelMode)>,
    severe: Vec<(String, u32)>,
    missed: Vec<String>,
}

fn parse_daily(text: &str, work: Option<&str>) -> DailyFacts {
    let mut d = DailyFacts::default();
    for c in ARRIVED.captures_iter(text) {
        if Some(c["f"].trim()) != work {
            continue;
        }
        let n: i64 = c.name("n").and_then(|n| n.as_str().parse().ok()).unwrap_or(0);
        let signed = if c.name("dir").is_some_and(|m| m.as_str() == "late") { n } else { -n };
        if let (Ok(t), Some(m)) = (c["t"].parse(), TravelMode::parse(&c["m"])) {
            d.work = Some((signed, t, m));
            break;
        }
    }
    d.severe = SEVERE.captures_iter(text).filter_map(|c| Some((c["l"].to_string(), c["n"].parse().ok()?))).collect();
    // An incident counts as a severe delay whatever the wait was.
    d.severe.extend(INCIDENT.captures_iter(text).map(|c| (c["l"].to_string(), u32::MAX)));
    d.missed = MISSED.captures_iter(text).map(|c| c["f"].trim().to_string()).collect();
    d
}

fn is_weekend(d: NaiveDate) -> bool {
    matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// The offline cognition backend.
pub struct ScriptedStub {
    policy: StubPolicy,
    seed: u64,
    graph: Arc<NetworkGraph>,
}

impl ScriptedStub {
    pub fn new(policy: StubPolicy, seed: u64, graph: Arc<NetworkGraph>) -> Self {
        ScriptedStub { policy, seed, graph }
    }

    pub fn policy(&self) -> &StubPolicy {
        &self.policy
    }

    fn unit(&self, parts: &[&str]) -> f64 {
        unit(self.seed, parts)
    }

    /// Free-flow minutes between two facilities.
    fn travel_minutes(&self, from: &str, to: &str, mode: TravelMode) -> u32 {
        shortest_path(&self.graph, from, to, mode, &RouteOptions::default()).map(|p| p.cost as u32).unwrap_or(30)
    }

    fn leg_path(&self, from: &str, to: &str, mode: TravelMode, avoid: &BTreeSet<usize>) -> PathSpec {
        if mode != TravelMode::Drive || avoid.is_empty() {
            return PathSpec::Shortest;
        }
        let opts = RouteOptions { avoid: avoid.clone(), ..Default::default() };
        match shortest_path(&self.graph, from, to, mode, &opts) {
            Ok(p) if !p.links.is_empty() => PathSpec::Explicit(p.links),
            _ => PathSpec::Shortest,
        }
    }

    pub fn importance(&self, text: &str) -> f64 {
        let words: BTreeSet<String> = tokenize(text).collect();
        let raw = self
            .policy
            .importance
            .rules
            .iter()
            .find(|r| r.keywords.iter().any(|k| words.contains(&k.to_lowercase())))
            .map(|r| r.score)
            .unwrap_or(self.policy.importance.default);
        (raw * 10.0).round() / 10.0
    }

    fn choose_mode(&self, ctx: &PlanContext, lt: &LongTerm) -> TravelMode {
        let p = &ctx.profile;
        let gave_up_car = ctx.recent_chats.iter().any(|c| {
            CAR.captures(c).is_some_and(|m| m["b"].trim() == p.name)
        });
        let claimed_car = ctx.recent_chats.iter().any(|c| CAR.captures(c).is_some_and(|m| m["a"].trim() == p.name));
        let can_drive = p.licensed_driver && ctx.household_vehicles > 0 && ctx.car_claim != Some(false) && !gave_up_car;
        if !can_drive {
            TravelMode::Transit
        } else if ctx.car_claim == Some(true) || claimed_car {
            TravelMode::Drive
        } else if lt.usual_mode == Some(TravelMode::Transit) || p.prefers_transit() {
            TravelMode::Transit
        } else {
            TravelMode::Drive
        }
    }

    pub fn plan(&self, ctx: &PlanContext) -> PlanOutput {
        let p = &ctx.profile;
        let pl = &self.policy.planning;
        let home = p.home_facility.as_str();
        let lt = parse_longterm(&ctx.prev_longterm);
        let daily = parse_daily(&ctx.prev_daily, p.work_facility.as_deref());
        let date_s = ctx.date.to_string();
        let mut concepts = Vec::new();
        let mut lines = vec![format!("{}'s long-term reflection as of {}.", p.name, ctx.date)];

        let start = PlanEntry::new(home, None, None, TravelMode::None, PathSpec::None, "Start the day at home.");
        if p.is_child() {
            let plan = ActivityPlan::new(vec![start]);
            lines.push("Stays at home; travels with parents when needed.".into());
            return PlanOutput { longterm_reflection: lines.join("\n"), plan, concepts };
        }

        let mode = self.choose_mode(ctx, &lt);
        let mut usual = lt.usual_mode.unwrap_or(if p.prefers_transit() { TravelMode::Transit } else { TravelMode::Drive });
        if pl.transit_switch_lateness > 0 {
            if let Some((late, _, TravelMode::Drive)) = daily.work {
                if late >= i64::from(pl.transit_switch_lateness) {
                    usual = TravelMode::Transit;
                }
            }
        }
        lines.push(format!("Usual mode: {usual}"));

        // Links to stay away from: yesterday's severe delays plus unexpired older ones.
        let mut avoid_list: Vec<(String, NaiveDate)> = lt.avoid.iter().filter(|(_, d)| *d >= ctx.date).cloned().collect();
        for (link, minutes) in &daily.severe {
            if *minutes < pl.avoid_wait_threshold || self.graph.link_idx(link).is_none() {
                continue;
            }
            let span = pl.avoid_days[1] - pl.avoid_days[0] + 1;
            let days = pl.avoid_days[0] + ((self.unit(&[&p.name, link, &date_s, "avoid"]) * f64::from(span)) as u32).min(span - 1);
            let until = ctx.date.checked_add_days(Days::new(u64::from(days.saturating_sub(1)))).unwrap_or(ctx.date);
            match avoid_list.iter_mut().find(|(l, _)| l == link) {
                Some(e) => e.1 = e.1.max(until),
                None => avoid_list.push((link.clone(), until)),
            }
        }
        avoid_list.sort();
        let avoid: BTreeSet<usize> = avoid_list.iter().filter_map(|(l, _)| self.graph.link_idx(l)).collect();

        let mut pending: Vec<String> = lt.pending.clone();
        for m in &daily.missed {
            if !pending.contains(m) && Some(m.as_str()) != p.work_facility.as_deref() && m != home {
                pending.push(m.clone());
            }
        }
        pending.retain(|f| self.graph.facility(f).is_some());

        let meetup = ctx.recent_chats.iter().filter_map(|c| MEET.captures(c)).find_map(|c| {
            let f = c["f"].trim().to_string();
            let t: ClockTime = c["t"].parse().ok()?;
            self.graph.facility(&f).map(|_| (f, t))
        });

        let mut entries = vec![start];
        let mut scheduled_pending = Vec::new();
        let working = !is_weekend(ctx.date) && p.work_facility.is_some() && p.work_window().is_some();
        if working {
            let work = p.work_facility.as_deref().unwrap();
            let (ws, we) = p.work_window().unwrap();
            let tt = self.travel_minutes(home, work, mode);
            let b = pl.departure_buffer;
            let buffer = b[0] + ((self.unit(&[&p.name, "buffer"]) * f64::from(b[1] - b[0] + 1)) as u32).min(b[1] - b[0]);
            let base = ws.shifted(-i64::from(tt + buffer));
            let lr = pl.learning_rate[0] + (pl.learning_rate[1] - pl.learning_rate[0]) * self.unit(&[&p.name, "learning"]);
            let mut dep = match lt.work_departure {
                Some((t, m)) if m == mode => t,
                _ => base,
            };
            if let Some((late, departed, m)) = daily.work {
                if m == mode {
                    dep = if late > 0 {
                        departed.shifted(-((lr * late as f64).ceil() as i64))
                    } else if -late > i64::from(pl.early_slack) {
                        let extra = (-late - i64::from(pl.early_slack)) as f64;
                        departed.shifted((pl.early_return_rate * extra).floor() as i64)
                    } else {
                        departed
                    };
                }
            }
            let earliest = ws.shifted(-i64::from(tt) - 120);
            dep = dep.max(earliest).min(ws.shifted(-i64::from(tt)));
            lines.push(format!("Work departure: {dep} by {mode}"));
            concepts.push(format!("Leave for {work} at {dep} by {mode} to start work at {ws}."));
            entries.push(PlanEntry::new(
                work,
                Some(dep),
                Some(we.minutes().saturating_sub(ws.minutes())),
                mode,
                self.leg_path(home, work, mode, &avoid),
                format!("Commute to {work} for work starting at {ws}."),
            ));

            let mut last = work.to_string();
            let mut leave = Some(we);
            if let Some((f, t)) = &meetup {
                let tt2 = self.travel_minutes(&last, f, mode);
                let d = t.shifted(-i64::from(tt2) - 5).max(we);
                entries.push(PlanEntry::new(
                    f.clone(),
                    Some(d),
                    Some(pl.meetup_minutes),
                    mode,
                    self.leg_path(&last, f, mode, &avoid),
                    format!("Meet a friend at {f} at {t}."),
                ));
                concepts.push(format!("Meeting a friend at {f} at {t}."));
                last = f.clone();
                leave = None;
            } else {
                let errand = pending.iter().find(|f| f.as_str() != work).cloned().or_else(|| {
                    (self.unit(&[&p.name, &date_s, "errand"]) < pl.errand_probability)
                        .then(|| pick(self.seed, &[&p.name, &date_s, "errand_pick"], &pl.errand_facilities).cloned())
                        .flatten()
                        .filter(|f| f != work && self.graph.facility(f).is_some())
                });
                if let Some(f) = errand {
                    let postponed = pending.contains(&f);
                    if postponed {
                        scheduled_pending.push(f.clone());
                    }
                    entries.push(PlanEntry::new(
                        f.clone(),
                        Some(we),
                        Some(pl.errand_minutes),
                        mode,
                        self.leg_path(&last, &f, mode, &avoid),
                        if postponed { format!("Errand at {f} (postponed from an earlier day).") } else { format!("Errand at {f}.") },
                    ));
                    last = f;
                    leave = None;
                }
            }
            entries.push(PlanEntry::new(home, leave, None, mode, self.leg_path(&last, home, mode, &avoid), "Return home."));
        } else {
            let outing = (self.unit(&[&p.name, &date_s, "outing"]) < pl.weekend_outing_probability)
                .then(|| pick(self.seed, &[&p.name, &date_s, "outing_pick"], &pl.outing_facilities).cloned())
                .flatten()
                .or_else(|| pending.first().cloned())
                .filter(|f| self.graph.facility(f).is_some());
            if let Some(f) = outing {
                if pending.contains(&f) {
                    scheduled_pending.push(f.clone());
                }
                let hour = 10 + (self.unit(&[&p.name, &date_s, "outing_hour"]) * 4.0) as u32;
                entries.push(PlanEntry::new(
                    f.clone(),
                    Some(ClockTime::hm(hour, 0)),
                    Some(120),
                    mode,
                    self.leg_path(home, &f, mode, &avoid),
                    format!("Visit {f}."),
                ));
                entries.push(PlanEntry::new(home, None, None, mode, self.leg_path(&f, home, mode, &avoid), "Return home."));
            }
        }

        for (l, d) in &avoid_list {
            lines.push(format!("Avoid: {l} until {d}"));
            concepts.push(format!("Avoid {l} for a while after severe delays there."));
        }
        for f in pending.iter().filter(|f| !scheduled_pending.contains(f)) {
            lines.push(format!("Pending: {f}"));
        }
        PlanOutput { longterm_reflection: lines.join("\n"), plan: ActivityPlan::new(entries), concepts }
    }

    pub fn react(&self, ctx: &ReactionContext) -> ReactionOutput {
        let next = ctx.plan.entries.get(ctx.current_index + 1);
        let home = ctx.profile.home_facility.as_str();
        let work = ctx.profile.work_facility.as_deref();
        let cont = |why: &str| ReactionOutput { decision: "continue".into(), path: None, departure: None, entries: None, rationale: why.into() };
        for rule in &self.policy.reaction.rules {
            if rule.trigger != ctx.trigger {
                continue;
            }
            match rule.action {
                Decision::PathUpdate => {
                    if let Some(out) = self.path_rule(ctx, rule) {
                        return out;
                    }
                }
                Decision::DepartureAdjust | Decision::PartialReplace => {
                    if ctx.overstay < rule.min_overstay.unwrap_or(0) {
                        continue;
                    }
                    let Some(n) = next else { continue };
                    let errand = n.facility != home && Some(n.facility.as_str()) != work;
                    if rule.next_is_errand.is_some_and(|want| want != errand) {
                        continue;
                    }
                    if rule.action == Decision::PartialReplace {
                        let rest: Vec<PlanEntry> = ctx.plan.entries[ctx.current_index + 1..]
                            .iter()
                            .filter(|e| e.facility != n.facility)
                            .cloned()
                            .collect();
                        return ReactionOutput {
                            decision: "partial_replace".into(),
                            path: None,
                            departure: None,
                            entries: Some(rest),
                            rationale: format!("Running {} min behind schedule; skipping {} today.", ctx.overstay, n.facility),
                        };
                    }
                    let stay = ctx.plan.entries.get(ctx.current_index).and_then(|e| e.duration).unwrap_or(30).min(30);
                    let dep = ctx.now.shifted(i64::from(stay)).min(ClockTime::hm(23, 59));
                    return ReactionOutput {
                        decision: "departure_adjust".into(),
                        path: None,
                        departure: Some(dep.to_string()),
                        entries: None,
                        rationale: format!("Running {} min behind schedule; leaving for {} at {dep}.", ctx.overstay, n.facility),
                    };
                }
                Decision::Continue => return cont("Policy says to continue."),
                Decision::FullReplace => {}
            }
        }
        cont("No reason to change the plan.")
    }

    fn path_rule(&self, ctx: &ReactionContext, rule: &ReactionRule) -> Option<ReactionOutput> {
        if ctx.mode != TravelMode::Drive || ctx.remaining_path.is_empty() {
            return None;
        }
        let worst = ctx.remaining_path.iter().filter_map(|l| ctx.link_waits.get(l)).copied().max().unwrap_or(0);
        let worst_link = ctx.remaining_path.iter().max_by_key(|l| ctx.link_waits.get(*l).copied().unwrap_or(0))?;
        if CongestionLevel::from_wait(worst) < rule.min_level.unwrap_or(CongestionLevel::Free) {
            return None;
        }
        let g = &self.graph;
        let from = g.node_idx(ctx.decision_node.as_deref()?)?;
        let dest = g.facility_node(ctx.destination.as_deref()?).ok()?;
        let mut opts = RouteOptions::default();
        for (l, w) in &ctx.link_waits {
            if let Some(i) = g.link_idx(l) {
                opts.delays.insert(i, *w);
            }
        }
        let current: u64 = ctx
            .remaining_path
            .iter()
            .filter_map(|l| g.link_idx(l))
            .map(|i| u64::from(g.traversal_time(i, ctx.mode).unwrap_or(0)) + u64::from(opts.delays.get(&i).copied().unwrap_or(0)))
            .sum();
        let alt = shortest_path_between(g, from, dest, ctx.mode, &opts).ok()?;
        if alt.links == ctx.remaining_path || current < alt.cost + u64::from(rule.alternative_saves.unwrap_or(0)) {
            return None;
        }
        Some(ReactionOutput {
            decision: "path_update".into(),
            path: Some(alt.links.join(", ")),
            departure: None,
            entries: None,
            rationale: format!(
                "Severe congestion on {worst_link} ({worst} min wait); switching to a route expected to take {} min instead of {current}.",
                alt.cost
            ),
        })
    }

    pub fn daily_reflection(&self, ctx: &ReflectionContext) -> ReflectionOutput {
        let log = &ctx.day_log;
        if log.is_empty() {
            return ReflectionOutput { reflection: "An uneventful day.".into() };
        }
        let mut lines = Vec::new();
        let work = ctx.profile.work_facility.as_deref();
        if let Some(t) = log.trips.iter().find(|t| Some(t.destination.as_str()) == work && t.arrive.is_some()) {
            let arrive = t.arrive.unwrap().minutes() as i64;
            let due = t.due.map(|d| d.minutes() as i64).unwrap_or(arrive);
            let delta = arrive - due;
            let timing = match delta {
                0 => "on time".to_string(),
                d if d > 0 => format!("{d} min late"),
                d => format!("{} min early", -d),
            };
            lines.push(format!("Arrived at {} {timing} (departed {} by {}).", t.destination, t.depart, t.mode));
        }
        let threshold = self.policy.planning.avoid_wait_threshold;
        let mut severe: Vec<(String, u32)> = Vec::new();
        for w in log.waits.iter().filter(|w| w.minutes >= threshold) {
            match severe.iter_mut().find(|(l, _)| *l == w.link) {
                Some(e) => e.1 = e.1.max(w.minutes),
                None => severe.push((w.link.clone(), w.minutes)),
            }
        }
        for (l, m) in severe {
            lines.push(format!("Severe delay on {l} (waited {m} min)."));
        }
        for l in &log.incidents {
            lines.push(format!("Incident on {l} (capacity reduced)."));
        }
        for w in log.avoided.iter().filter(|w| w.minutes >= threshold) {
            lines.push(format!("Severe congestion on {} (expected {} min wait); took another route.", w.link, w.minutes));
        }
        for m in &log.missed {
            lines.push(format!("Missed {m}."));
        }
        for c in &log.completed_errands {
            lines.push(format!("Completed {c}."));
        }
        if log.teleported {
            lines.push("Failed to get home before midnight and was teleported home; should plan to leave earlier.".into());
        }
        if lines.is_empty() {
            lines.push("A routine day without notable delays.".into());
        }
        ReflectionOutput { reflection: lines.join(" ") }
    }

    pub fn chat_initiate(&self, ctx: &ChatInitiateContext) -> ChatInitiateOutput {
        let none = ChatInitiateOutput { initiate: false, partner: None, topic: None, message: None };
        let p = &ctx.profile;
        let discussed = |partner: &str, topic: &str| ctx.discussed.iter().any(|d| d == &format!("{partner}|{topic}"));
        if p.licensed_driver && !p.prefers_transit() && ctx.household_vehicles > 0 {
            let mut drivers: Vec<&SocialContact> =
                ctx.contacts.iter().filter(|c| c.household_member && c.licensed_driver && !c.prefers_transit).collect();
            drivers.sort_by(|a, b| a.name.cmp(&b.name));
            if drivers.len() + 1 > ctx.household_vehicles as usize && drivers.first().is_some_and(|d| p.name < d.name) {
                let partner = &drivers[0].name;
                if !discussed(partner, "car use") {
                    return ChatInitiateOutput {
                        initiate: true,
                        partner: Some(partner.clone()),
                        topic: Some("car use".into()),
                        message: Some(format!("{partner}, we both need the car today. Which of us should take it?")),
                    };
                }
            }
        }
        let pl = &self.policy.planning;
        let date_s = ctx.date.to_string();
        let (Some(_), Some((_, my_end))) = (&p.work_facility, p.work_window()) else { return none };
        if is_weekend(ctx.date) || self.unit(&[&p.name, &date_s, "meetup"]) >= pl.friend_meetup_probability {
            return none;
        }
        let friends: Vec<&SocialContact> = ctx.contacts.iter().filter(|c| !c.household_member && c.work_end.is_some()).collect();
        if friends.is_empty() {
            return none;
        }
        let f = friends[((self.unit(&[&p.name, &date_s, "friend"]) * friends.len() as f64) as usize).min(friends.len() - 1)];
        if discussed(&f.name, "meetup") {
            return none;
        }
        let Some(place) = pick(self.seed, &[&p.name, &date_s, "meet_place"], &pl.meetup_facilities) else { return none };
        let end = my_end.max(f.work_end.unwrap());
        let at = ClockTime::from_minutes((end.minutes() + 60).div_ceil(30) * 30).unwrap_or(ClockTime::hm(20, 0));
        if at > ClockTime::hm(21, 30) {
            return none;
        }
        ChatInitiateOutput {
            initiate: true,
            partner: Some(f.name.clone()),
            topic: Some("meetup".into()),
            message: Some(format!("Hi {}, want to meet at {place} at {at} today?", f.name)),
        }
    }

    pub fn chat_response(&self, ctx: &ChatContext) -> ChatResponseOutput {
        let me = &ctx.profile.name;
        match ctx.topic.as_str() {
            "car use" => {
                let gap = |who: &str| -> i64 {
                    let get = |k: &str| ctx.facts.get(&format!("{who}.{k}")).and_then(|v| v.parse::<i64>().ok()).unwrap_or(0);
                    get("transit_minutes") - get("drive_minutes")
                };
                let (a, b) = if me < &ctx.partner { (me.as_str(), ctx.partner.as_str()) } else { (ctx.partner.as_str(), me.as_str()) };
                let (winner, loser) = if gap(b) > gap(a) { (b, a) } else { (a, b) };
                ChatResponseOutput {
                    message: format!("Transit costs {winner} more time, so {winner} takes the car today and {loser} travels by transit."),
                    end: true,
                }
            }
            "meetup" => {
                let proposal = ctx.transcript.iter().find_map(|t| MEET.captures(&t.text).map(|c| (c["f"].trim().to_string(), c["t"].to_string())));
                let accept = self.unit(&[me, &ctx.partner, &ctx.date.to_string(), "accept"]) < 0.8;
                let message = match proposal {
                    Some((f, t)) if accept => format!("Sounds good, see you there. Agreed to meet at {f} at {t}."),
                    _ => "Sorry, I can't make it today.".to_string(),
                };
                ChatResponseOutput { message, end: true }
            }
            _ => ChatResponseOutput { message: "Okay, talk later.".into(), end: true },
        }
    }

    pub fn interview(&self, ctx: &InterviewContext) -> ChatResponseOutput {
        let message = match ctx.retrieved.first() {
            Some(m) => format!("What stands out in my memory is this: {m}"),
            None => "I don't remember anything in particular about that.".to_string(),
        };
        ChatResponseOutput { message, end: true }
    }

    pub fn chat_summary(&self, ctx: &ChatContext) -> ChatSummaryOutput {
        let initiator = ctx.transcript.first().map(|t| t.speaker.clone()).unwrap_or_else(|| ctx.profile.name.clone());
        let other = if initiator == ctx.profile.name { ctx.partner.clone() } else { ctx.profile.name.clone() };
        let text: Vec<&str> = ctx.transcript.iter().map(|t| t.text.as_str()).collect();
        let summary = match ctx.topic.as_str() {
            "car use" => match text.iter().find_map(|t| CAR.captures(t)) {
                Some(c) => format!("{} takes the car today; {} travels by transit.", c["a"].trim(), c["b"].trim()),
                None => format!("{initiator} and {other} did not settle who takes the car today."),
            },
            "meetup" => match text.iter().filter(|t| t.contains("Agreed")).find_map(|t| MEET.captures(t)) {
                Some(c) => format!("{initiator} and {other} agreed to meet at {} at {}.", c["f"].trim(), &c["t"]),
                None => format!("{initiator} and {other} could not find time to meet today."),
            },
            t => format!("{initiator} and {other} chatted about {t}."),
        };
        ChatSummaryOutput { summary }
    }

    pub fn path_info(&self, ctx: &PathInfoContext) -> PathInfoOutput {
        PathInfoOutput { links: LINK_TOKEN.find_iter(&ctx.path_string).map(|m| m.as_str().to_string()).collect() }
    }
}

fn parse_ctx<T: DeserializeOwned>(req: &CompletionRequest) -> Result<T, GatewayError> {
    serde_json::from_value(req.context.clone()).map_err(|e| GatewayError::Schema { task: req.task, reason: format!("stub context: {e}") })
}

fn to_json<T: Serialize>(task: TaskKind, v: &T) -> Result<String, GatewayError> {
    serde_json::to_string(v).map_err(|e| GatewayError::Schema { task, reason: e.to_string() })
}

impl CognitionBackend for ScriptedStub {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let t = req.task;
        match t {
            TaskKind::InitialPlan => to_json(t, &self.plan(&parse_ctx(req)?)),
            TaskKind::Reaction => to_json(t, &self.react(&parse_ctx(req)?)),
            TaskKind::ExtractPathInfo => to_json(t, &self.path_info(&parse_ctx(req)?)),
            TaskKind::DailyReflection => to_json(t, &self.daily_reflection(&parse_ctx(req)?)),
            TaskKind::ChatInitiateNewDay => to_json(t, &self.chat_initiate(&parse_ctx(req)?)),
            TaskKind::ChatInitiateDuringDay => {
                to_json(t, &ChatInitiateOutput { initiate: false, partner: None, topic: None, message: None })
            }
            TaskKind::ChatResponse => {
                if req.context.get("question").is_some() {
                    to_json(t, &self.interview(&parse_ctx(req)?))
                } else {
                    to_json(t, &self.chat_response(&parse_ctx(req)?))
                }
            }
            TaskKind::ChatSummary => to_json(t, &self.chat_summary(&parse_ctx(req)?)),
            TaskKind::ImportanceScore => {
                let c: ImportanceContext = parse_ctx(req)?;
                to_json(t, &ImportanceOutput { score: self.importance(&c.description) })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cognition::{AgentProfile, Population};
    use std::collections::BTreeMap;

    fn stub() -> ScriptedStub {
        ScriptedStub::new(StubPolicy::default(), 7, Arc::new(NetworkGraph::nguyen_dupuis()))
    }

    fn worker() -> AgentProfile {
        let pop = Population::bundled();
        pop.agents
            .iter()
            .find(|a| a.work_facility.as_deref() == Some("Office") && a.licensed_driver && !a.prefers_transit())
            .unwrap()
            .clone()
    }

    fn plan_ctx(profile: AgentProfile) -> PlanContext {
        PlanContext {
            profile,
            date: NaiveDate::from_ymd_opt(2025, 3, 10).unwrap(),
            prev_longterm: String::new(),
            prev_daily: String::new(),
            household_vehicles: 1,
            car_claim: None,
            recent_chats: vec![],
            broadcasts: vec![],
        }
    }

    #[test]
    fn default_policy_parses_and_rejects_bad_values() {
        let p = StubPolicy::default();
        assert_eq!(p.reaction.rules.len(), 3);
        let broken = DEFAULT_POLICY.replace("early_return_rate = 0.3", "early_return_rate = 3.0");
        assert!(matches!(StubPolicy::from_toml(&broken), Err(GatewayError::Policy(_))));
    }

    #[test]
    fn importance_table() {
        let s = stub();
        assert_eq!(s.importance("routine commute"), 0.2);
        assert_eq!(s.importance("Arrived at Office 12 min late"), 0.6);
        assert_eq!(s.importance("Road closure on Ave_2_link_2"), 0.8);
        assert_eq!(s.importance("thinking about dinner"), 0.3);
    }

    #[test]
    fn first_day_plan_departs_before_work() {
        let s = stub();
        let out = s.plan(&plan_ctx(worker()));
        let e = &out.plan.entries;
        assert_eq!(e[0].mode, TravelMode::None);
        assert_eq!(e[1].facility, "Office");
        assert!(e[1].departure.unwrap() < ClockTime::hm(8, 0));
        assert_eq!(e.last().unwrap().facility, worker().home_facility);
        assert!(out.longterm_reflection.contains("Work departure:"));
    }

    #[test]
    fn lateness_moves_departure_earlier() {
        let s = stub();
        let mut ctx = plan_ctx(worker());
        let first = s.plan(&ctx).plan.entries[1].departure.unwrap();
        ctx.prev_daily = format!("Arrived at Office 12 min late (departed {first} by drive).");
        let second = s.plan(&ctx).plan.entries[1].departure.unwrap();
        assert!(second < first);
        assert!(first.minutes() - second.minutes() >= 6);
    }

    #[test]
    fn missed_errand_is_rescheduled() {
        let s = stub();
        let mut ctx = plan_ctx(worker());
        ctx.prev_daily = "Missed Supermarket.".into();
        let out = s.plan(&ctx);
        assert!(out.plan.entries.iter().any(|e| e.facility == "Supermarket"));
        assert!(!out.longterm_reflection.contains("Pending: Supermarket"));
    }

    #[test]
    fn severe_delay_sets_avoidance() {
        let s = stub();
        let mut ctx = plan_ctx(worker());
        ctx.prev_daily = "Severe delay on Ave_2_link_2 (waited 16 min).".into();
        let out = s.plan(&ctx);
        assert!(out.longterm_reflection.contains("Avoid: Ave_2_link_2 until 2025-03-"));
        for e in out.plan.entries.iter().filter(|e| e.mode == TravelMode::Drive) {
            if let PathSpec::Explicit(links) = &e.path {
                assert!(!links.iter().any(|l| l == "Ave_2_link_2"));
            }
        }
    }

    #[test]
    fn children_stay_home() {
        let pop = Population::bundled();
        let child = pop.agents.iter().find(|a| a.is_child()).unwrap().clone();
        let out = stub().plan(&plan_ctx(child));
        assert_eq!(out.plan.entries.len(), 1);
    }

    #[test]
    fn severe_queue_triggers_path_update() {
        let s = stub();
        let plan = s.plan(&plan_ctx(worker())).plan;
        let mut waits = BTreeMap::new();
        waits.insert("Ave_2_link_2".to_string(), 16);
        let ctx = ReactionContext {
            profile: worker(),
            date: NaiveDate::from_ymd_opt(2025, 3, 10).unwrap(),
            now: ClockTime::hm(7, 20),
            trigger: "waiting_at_node".into(),
            plan: plan.clone(),
            current_index: 1,
            location: AgentLocation::Queued { node: "Node_5".into(), link: "Ave_2_link_2".into(), waited: 3 },
            mode: TravelMode::Drive,
            destination: Some("Office".into()),
            remaining_path: vec!["Ave_2_link_2".into(), "Ave_2_link_3".into(), "St_4_link_1".into(), "Ave_3_link_3".into()],
            decision_node: Some("Node_5".into()),
            link_waits: waits,
            overstay: 0,
            broadcasts: vec![],
        };
        let out = s.react(&ctx);
        assert_eq!(out.decision, "path_update");
        assert!(!out.path.unwrap().contains("Ave_2_link_2"));
        let calm = ReactionContext { link_waits: BTreeMap::new(), ..ctx };
        assert_eq!(s.react(&calm).decision, "continue");
    }

    #[test]
    fn overstay_drops_errand_or_adjusts_departure() {
        let s = stub();
        let mut ctx = plan_ctx(worker());
        ctx.prev_daily = "Missed Supermarket.".into();
        let plan = s.plan(&ctx).plan;
        let base = ReactionContext {
            profile: worker(),
            date: ctx.date,
            now: ClockTime::hm(18, 20),
            trigger: "activity_transition".into(),
            plan: plan.clone(),
            current_index: 1,
            location: AgentLocation::Facility { name: "Office".into(), arrived: ClockTime::hm(8, 0) },
            mode: TravelMode::Drive,
            destination: None,
            remaining_path: vec![],
            decision_node: None,
            link_waits: BTreeMap::new(),
            overstay: 80,
            broadcasts: vec![],
        };
        let out = s.react(&base);
        assert_eq!(out.decision, "partial_replace");
        assert!(out.entries.unwrap().iter().all(|e| e.facility != "Supermarket"));
        let at_errand = ReactionContext { current_index: 2, ..base };
        assert_eq!(s.react(&at_errand).decision, "departure_adjust");
    }

    #[test]
    fn reflection_names_link_and_lateness() {
        let s = stub();
        let log = DayLog {
            trips: vec![TripRecord {
                destination: "Office".into(),
                purpose: TripPurpose::Work,
                depart: ClockTime::hm(7, 30),
                arrive: Some(ClockTime::hm(8, 12)),
                due: Some(ClockTime::hm(8, 0)),
                mode: TravelMode::Drive,
                links: vec!["Ave_2_link_2".into()],
            }],
            waits: vec![WaitRecord { link: "Ave_2_link_2".into(), at: ClockTime::hm(7, 40), minutes: 12 }],
            ..Default::default()
        };
        let r = s.daily_reflection(&ReflectionContext { profile: worker(), date: NaiveDate::from_ymd_opt(2025, 3, 10).unwrap(), day_log: log }).reflection;
        assert!(r.contains("12 min late"));
        assert!(r.contains("Ave_2_link_2"));
        let empty = s.daily_reflection(&ReflectionContext { profile: worker(), date: NaiveDate::from_ymd_opt(2025, 3, 10).unwrap(), day_log: DayLog::default() });
        assert!(empty.reflection.contains("uneventful"));
    }

    #[test]
    fn car_chat_settles_and_summarizes() {
        let s = stub();
        let mut facts = BTreeMap::new();
        facts.insert("Ann.transit_minutes".to_string(), "40".to_string());
        facts.insert("Ann.drive_minutes".to_string(), "20".to_string());
        facts.insert("Bob.transit_minutes".to_string(), "30".to_string());
        facts.insert("Bob.drive_minutes".to_string(), "20".to_string());
        let mut profile = worker();
        profile.name = "Bob".into();
        let mut ctx = ChatContext {
            profile,
            partner: "Ann".into(),
            topic: "car use".into(),
            date: NaiveDate::from_ymd_opt(2025, 3, 10).unwrap(),
            transcript: vec![ChatTurn { speaker: "Ann".into(), text: "Which of us should take it?".into() }],
            facts,
        };
        let reply = s.chat_response(&ctx);
        assert!(reply.message.contains("Ann takes the car today"));
        ctx.transcript.push(ChatTurn { speaker: "Bob".into(), text: reply.message });
        assert_eq!(s.chat_summary(&ctx).summary, "Ann takes the car today; Bob travels by transit.");
    }

    #[test]
    fn path_info_tokens() {
        let out = stub().path_info(&PathInfoContext { path_string: "update current path to ['Ave_2', 'St_4_link_1']".into() });
        assert_eq!(out.links, vec!["Ave_2", "St_4_link_1"]);
    }

    #[test]
    fn unit_is_stable() {
        assert_eq!(unit(1, &["a", "b"]), unit(1, &["a", "b"]));
        assert_ne!(unit(1, &["a", "b"]), unit(1, &["ab"]));
        assert!((0.0..1.0).contains(&unit(99, &["x"])));
    }
}
