use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::log::{LogEvent, RunInfo, RunLog, TrafficRow, TripRow};
use super::runtime::{needs_plan_update, AgentRuntime, AgentState, Place, Trigger, Trip, VehicleRegistry};
use super::{BackendChoice, EventKind, ScenarioEvent, SimConfig, SimError};
use crate::clock::{date_of_tick, tick_to_datetime, ClockTime};
use crate::cognition::{
    coordinate_chat, repair_plan, resolve_path, resolve_path_between, validate_plan, ActivityPlan, CognitionEnv,
    InterviewExchange, Mind, Participant, PathSpec, PlanEntry, PlanInputs, PlanRevision, Population, RevisionAction,
    ValidationContext,
};
use crate::exec;
use crate::gateway::{
    AgentLocation, CognitionBackend, Gateway, ReactionContext, RemoteBackend, ScriptedStub, SocialContact, StubPolicy,
    TemplateSet, TripPurpose, TripRecord, WaitRecord,
};
use crate::memory::{ConceptKind, HashEmbedder, TimeScope};
use crate::net::{
    shortest_path, CongestionLevel, LinkKind, NetworkGraph, RouteOptions, TokenPlace, TrafficState, TravelMode,
};
use crate::{Tick, MINUTES_PER_DAY};

/// Waits at least this long become event memories.
const SEVERE_WAIT: u32 = 10;
/// Agents do not run periodic checks at home before this minute of the day.
const WAKE_MINUTE: u32 = 6 * 60;

/// Everything that changes while a run advances. Serialized into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: Tick,
    pub finished: bool,
    pub population: Population,
    pub traffic: TrafficState,
    pub agents: Vec<AgentState>,
    pub vehicles: VehicleRegistry,
    pub events: Vec<ScenarioEvent>,
    /// Indices into `events` currently in their window.
    pub active_events: BTreeSet<usize>,
    pub rng: ChaCha8Rng,
    pub log: RunLog,
}

impl WorldState {
    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("world state serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Saved world plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: SimConfig,
    pub config_digest: String,
    pub hash: String,
    pub state: WorldState,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| SimError::Io(format!("{}: {e}", dir.display())))?;
        }
        let bytes = serde_json::to_vec(self).map_err(|e| SimError::Checkpoint(e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let bytes = std::fs::read(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| SimError::Checkpoint(format!("{}: {e}", path.display())))
    }
}

struct ReactionJob {
    trigger: Trigger,
    ctx: ReactionContext,
    progress: String,
    perceptions: Vec<String>,
}

/// A running simulation: immutable services plus [`WorldState`].
pub struct World {
    config: SimConfig,
    graph: Arc<NetworkGraph>,
    gateway: Gateway,
    embedder: HashEmbedder,
    out_dir: Option<PathBuf>,
    pub state: WorldState,
}

fn load_graph(config: &SimConfig) -> Result<NetworkGraph, SimError> {
    let g = match &config.network {
        Some(p) => NetworkGraph::from_path(p)?,
        None => NetworkGraph::nguyen_dupuis(),
    };
    Ok(match config.road_capacity {
        Some(c) => g.with_road_capacity(c),
        None => g,
    })
}

fn load_population(config: &SimConfig) -> Result<Population, SimError> {
    let mut pop = match &config.population {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| SimError::Config(format!("{}: {e}", p.display())))?;
            Population::from_json(&text).map_err(|e| SimError::Config(format!("{}: {e}", p.display())))?
        }
        None => Population::bundled(),
    };
    if let Some(n) = config.agent_limit {
        pop.agents.truncate(n);
        let names: BTreeSet<String> = pop.agents.iter().map(|a| a.name.clone()).collect();
        for h in &mut pop.households {
            h.members.retain(|m| names.contains(m));
        }
        pop.households.retain(|h| !h.members.is_empty());
        for a in &mut pop.agents {
            a.friends.retain(|f| names.contains(f));
        }
    }
    Ok(pop)
}

fn build_gateway(config: &SimConfig, graph: Arc<NetworkGraph>) -> Result<Gateway, SimError> {
    let policy = match &config.stub_policy {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| SimError::Config(format!("{}: {e}", p.display())))?;
            StubPolicy::from_toml(&text)?
        }
        None => StubPolicy::default(),
    };
    let templates = match &config.templates {
        Some(d) => TemplateSet::from_dir(d)?,
        None => TemplateSet::default(),
    };
    let describe = describe_network(&graph);
    let stub: Arc<dyn CognitionBackend> = Arc::new(ScriptedStub::new(policy, config.seed, graph));
    let mut gw = match config.backend {
        BackendChoice::Stub => Gateway::new(stub, templates, config.max_in_flight),
        BackendChoice::Remote => {
            let remote = RemoteBackend::new(config.remote.clone().expect("validated"));
            let gw = Gateway::new(Arc::new(remote), templates, config.max_in_flight);
            if config.stub_fallback {
                gw.with_fallback(stub)
            } else {
                gw
            }
        }
    };
    gw.simulation_description =
        "Residents of a small city plan their days, travel on a road and metro network in one-minute steps, and learn from what happens to them.".into();
    gw.network_description = describe;
    Ok(gw)
}

/// Facility locations and road/metro links as prompt text.
pub fn describe_network(g: &NetworkGraph) -> String {
    let mut s = String::from("Facilities: ");
    s.push_str(&g.facilities().iter().map(|f| format!("{} ({})", f.name, f.node_id)).collect::<Vec<_>>().join(", "));
    s.push_str("\nRoad links: ");
    let roads: Vec<String> = g
        .links()
        .iter()
        .filter(|l| l.kind == LinkKind::Road)
        .map(|l| format!("{} {}-{} {} min", l.id, l.from, l.to, l.free_flow_time))
        .collect();
    s.push_str(&roads.join(", "));
    for line in g.transit_lines() {
        s.push_str(&format!("\n{}: {} (every {} min)", line.id, line.links.join(", "), line.headway));
    }
    s
}

/// Mutable references to two distinct elements.
fn pair_mut<T>(v: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    assert_ne!(i, j);
    if i < j {
        let (a, b) = v.split_at_mut(j);
        (&mut a[i], &mut b[0])
    } else {
        let (a, b) = v.split_at_mut(i);
        (&mut b[0], &mut a[j])
    }
}

impl World {
    /// Loads network and population named by `config` and sets every agent at home.
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let graph = load_graph(&config)?;
        let pop = load_population(&config)?;
        Self::with_parts(config, graph, pop)
    }

    /// Builds a world from an explicit network and population (`road_capacity` is still
    /// applied).
    pub fn with_parts(mut config: SimConfig, graph: NetworkGraph, population: Population) -> Result<Self, SimError> {
        config.validate()?;
        config.merge_scenario_file()?;
        let graph = match config.road_capacity {
            Some(c) if config.network.is_none() && graph.links().iter().any(|l| l.kind == LinkKind::Road && l.capacity != Some(c)) => {
                graph.with_road_capacity(c)
            }
            _ => graph,
        };
        for e in &config.events {
            e.validate(&graph)?;
        }
        let graph = Arc::new(graph);
        let gateway = build_gateway(&config, graph.clone())?;
        let agents = population
            .agents
            .iter()
            .map(|p| {
                let mut mind = Mind::new(&p.name);
                if let Some(d) = config.decay {
                    mind.store = mind.store.with_policy(d);
                }
                AgentState { profile: p.clone(), mind, rt: AgentRuntime::at_home(p, 0) }
            })
            .collect();
        for p in &population.agents {
            graph.facility_node(&p.home_facility)?;
        }
        let state = WorldState {
            tick: 0,
            finished: false,
            vehicles: VehicleRegistry::from_population(&population),
            population,
            traffic: TrafficState::new(&graph),
            agents,
            events: config.events.clone(),
            active_events: BTreeSet::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            log: RunLog::default(),
        };
        Ok(World { config, graph, gateway, embedder: HashEmbedder::default(), out_dir: None, state })
    }

    /// Rebuilds a world from a checkpoint after verifying its digest and hash.
    pub fn restore(cp: Checkpoint) -> Result<Self, SimError> {
        if cp.config.digest() != cp.config_digest {
            return Err(SimError::Checkpoint("configuration digest does not match".into()));
        }
        if cp.state.hash() != cp.hash {
            return Err(SimError::Checkpoint("state hash does not match its content".into()));
        }
        let graph = Arc::new(load_graph(&cp.config)?);
        let gateway = build_gateway(&cp.config, graph.clone())?;
        Ok(World { config: cp.config, graph, gateway, embedder: HashEmbedder::default(), out_dir: None, state: cp.state })
    }

    /// Write checkpoints and logs under `dir` while running.
    pub fn set_out_dir(&mut self, dir: Option<PathBuf>) {
        self.out_dir = dir;
    }

    pub fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn tick(&self) -> Tick {
        self.state.tick
    }

    pub fn is_finished(&self) -> bool {
        self.state.finished
    }

    pub fn now(&self) -> NaiveDateTime {
        tick_to_datetime(self.config.start_date, self.state.tick)
    }

    pub fn date(&self) -> NaiveDate {
        date_of_tick(self.config.start_date, self.state.tick)
    }

    pub fn log(&self) -> &RunLog {
        &self.state.log
    }

    pub fn agent_index(&self, name: &str) -> Option<usize> {
        self.state.agents.iter().position(|a| a.profile.name == name)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            config_digest: self.config.digest(),
            hash: self.state.hash(),
            state: self.state.clone(),
        }
    }

    pub fn run_info(&self, final_hash: Option<String>) -> RunInfo {
        RunInfo {
            name: self.config.name.clone(),
            start_date: self.config.start_date,
            days: self.config.days,
            seed: self.config.seed,
            config_digest: self.config.digest(),
            ticks: self.state.tick,
            final_hash,
            road_links: self.graph.road_link_indices().map(|i| self.graph.link(i).id.clone()).collect(),
            network: self.config.network.clone(),
            road_capacity: self.config.road_capacity,
        }
    }

    /// Queues a validated scenario event.
    pub fn schedule_event(&mut self, event: ScenarioEvent) -> Result<usize, SimError> {
        event.validate(&self.graph)?;
        self.state.events.push(event);
        Ok(self.state.events.len() - 1)
    }

    /// Runs to the end of the horizon.
    pub fn run(&mut self) -> Result<(), SimError> {
        while !self.state.finished {
            self.step()?;
        }
        Ok(())
    }

    /// Advances until `tick` (exclusive) or the end of the run.
    pub fn run_until(&mut self, tick: Tick) -> Result<(), SimError> {
        while !self.state.finished && self.state.tick < tick {
            self.step()?;
        }
        Ok(())
    }

    /// One simulated minute: plan updates, activity updates, network movement,
    /// reflections, persistence.
    pub fn step(&mut self) -> Result<(), SimError> {
        if self.state.finished {
            return Ok(());
        }
        let t = self.state.tick;
        if t.is_multiple_of(MINUTES_PER_DAY) {
            if t > 0 {
                self.end_day(t)?;
            }
            if t >= self.config.end_tick() {
                self.state.finished = true;
                self.persist_final()?;
                return Ok(());
            }
            self.start_day(t)?;
        }
        self.apply_scenario_events(t);
        self.cognition_step(t)?;
        self.activity_step(t)?;
        self.movement_step(t)?;
        self.reflection_step(t)?;
        self.state.tick += 1;
        self.persist_periodic()?;
        Ok(())
    }

    fn day_start(t: Tick) -> Tick {
        t - t % MINUTES_PER_DAY
    }

    fn clock(t: Tick) -> ClockTime {
        ClockTime::from_tick(t)
    }

    // ---- day boundaries -------------------------------------------------------------

    fn start_day(&mut self, t: Tick) -> Result<(), SimError> {
        let date = date_of_tick(self.config.start_date, t);
        tracing::info!(%date, "day start");
        self.state.vehicles.reset_day();
        let interval = self.config.periodic_interval;
        for a in &mut self.state.agents {
            let phase = self.state.rng.random_range(0..interval);
            let yesterday = a.rt.plan.take();
            a.mind.begin_day(date, yesterday);
            let rt = &mut a.rt;
            rt.current = 0;
            rt.day_log = Default::default();
            rt.reflected = false;
            rt.has_car = false;
            rt.just_arrived = false;
            rt.queue_episode = None;
            rt.broadcasts.clear();
            rt.last_check = t + phase;
        }
        self.morning_chats(t)
    }

    /// Teleports stragglers home, closes the day's reflections and forgets expired memories.
    fn end_day(&mut self, t: Tick) -> Result<(), SimError> {
        let now = tick_to_datetime(self.config.start_date, t);
        let n = self.state.agents.len();
        for i in 0..n {
            let home = self.state.agents[i].profile.home_facility.clone();
            let work = self.state.agents[i].profile.work_facility.clone();
            let mut missed = Vec::new();
            let from = match self.state.agents[i].rt.place.clone() {
                Place::Travelling(trip) => {
                    self.state.traffic.remove(trip.token);
                    self.finish_trip(i, &trip, None);
                    Some(format!("en route to {}", trip.destination))
                }
                Place::AtFacility { facility, .. } if facility != home => Some(facility),
                Place::AtFacility { .. } => None,
            };
            let a = &mut self.state.agents[i];
            if let Some(plan) = &a.rt.plan {
                let first_unreached = if from.is_some() && a.rt.trip().is_some() { a.rt.current } else { a.rt.current + 1 };
                for e in plan.entries.iter().skip(first_unreached) {
                    if e.facility != home && Some(&e.facility) != work.as_ref() && !missed.contains(&e.facility) {
                        missed.push(e.facility.clone());
                    }
                }
            }
            for m in &missed {
                a.rt.day_log.add_missed(m);
            }
            if let Some(from) = from {
                a.rt.day_log.teleported = true;
                a.rt.place = Place::AtFacility { facility: home.clone(), since: t };
                a.rt.current = a.rt.plan.as_ref().map(|p| p.entries.len().saturating_sub(1)).unwrap_or(0);
                let name = a.profile.name.clone();
                self.state.vehicles.set_in_use(&a.profile.household, &name, false);
                tracing::debug!(agent = %name, %from, "teleported home");
                self.state.log.events.push(LogEvent::Teleport { tick: t, agent: name, from });
                let env = CognitionEnv { gateway: &self.gateway, embedder: &self.embedder, graph: &self.graph, weights: &self.config.retrieval };
                if let Err(e) = self.state.agents[i].mind.note_failure(&env, &missed, now) {
                    tracing::warn!(error = %e, "could not store teleport memory");
                }
            }
        }
        self.reflect(t, |rt, _| !rt.reflected)?;
        let sweep = now;
        exec::map_selected_mut(self.config.exec, &mut self.state.agents, |_| true, |_, a| a.mind.store.sweep_expired(sweep));
        if let Some(dir) = self.out_dir.clone() {
            let day = t / MINUTES_PER_DAY;
            self.checkpoint().save(&dir.join("checkpoints").join(format!("day-{day:02}.json")))?;
            self.state.log.write_dir(&dir)?;
            self.run_info(None).write(&dir)?;
        }
        Ok(())
    }

    fn morning_chats(&mut self, t: Tick) -> Result<(), SimError> {
        let now = tick_to_datetime(self.config.start_date, t);
        let n = self.state.agents.len();
        for i in 0..n {
            if self.state.agents[i].profile.is_child() {
                continue;
            }
            let profile = self.state.agents[i].profile.clone();
            let network = self.state.population.social_network(&profile);
            let contacts: Vec<SocialContact> = network
                .iter()
                .filter_map(|name| self.state.population.agent(name))
                .map(|c| SocialContact {
                    name: c.name.clone(),
                    household_member: c.household == profile.household,
                    licensed_driver: c.licensed_driver,
                    prefers_transit: c.prefers_transit(),
                    work_facility: c.work_facility.clone(),
                    work_end: c.work_window().map(|w| w.1),
                })
                .collect();
            let vehicles = self.state.vehicles.vehicles(&profile.household);
            let env = CognitionEnv { gateway: &self.gateway, embedder: &self.embedder, graph: &self.graph, weights: &self.config.retrieval };
            let out = match self.state.agents[i].mind.consider_chat(&env, &profile, contacts, vehicles, now) {
                Ok(o) => o,
                Err(e) => {
                    tracing::warn!(agent = %profile.name, error = %e, "chat initiation failed");
                    continue;
                }
            };
            let (true, Some(partner), Some(topic)) = (out.initiate, out.partner, out.topic) else { continue };
            let Some(j) = self.agent_index(&partner).filter(|j| *j != i) else { continue };
            let mut facts = BTreeMap::new();
            for p in [&profile, &self.state.agents[j].profile] {
                let to = p.work_facility.clone().unwrap_or_else(|| p.home_facility.clone());
                for (key, mode) in [("drive_minutes", TravelMode::Drive), ("transit_minutes", TravelMode::Transit)] {
                    let m = shortest_path(&self.graph, &p.home_facility, &to, mode, &RouteOptions::default()).map(|p| p.cost).unwrap_or(0);
                    facts.insert(format!("{}.{key}", p.name), m.to_string());
                }
            }
            let opening = out.message.unwrap_or_else(|| format!("Hi {partner}, can we talk about {topic}?"));
            let (a, b) = pair_mut(&mut self.state.agents, i, j);
            let result = coordinate_chat(
                &env,
                Participant { profile: &a.profile, mind: &mut a.mind },
                Participant { profile: &b.profile, mind: &mut b.mind },
                &network,
                &topic,
                &opening,
                &facts,
                now,
            );
            match result {
                Ok(c) => self.state.log.events.push(LogEvent::Chat { tick: t, initiator: profile.name.clone(), partner, topic, summary: c.summary }),
                Err(e) => tracing::debug!(agent = %profile.name, error = %e, "chat skipped"),
            }
        }
        Ok(())
    }

    // ---- scenario events ------------------------------------------------------------

    fn apply_scenario_events(&mut self, t: Tick) {
        let start = self.config.start_date;
        let mut caps: BTreeMap<usize, u32> = BTreeMap::new();
        let mut changed = Vec::new();
        for (k, ev) in self.state.events.iter().enumerate() {
            let active = ev.is_active(start, t);
            if active && ev.kind == EventKind::CapacityChange {
                if let (Some(li), Some(c)) = (self.graph.link_idx(&ev.target), ev.capacity) {
                    let e = caps.entry(li).or_insert(c);
                    *e = (*e).min(c);
                }
            }
            if active != self.state.active_events.contains(&k) {
                changed.push((k, active));
            }
        }
        for (k, active) in changed {
            let ev = self.state.events[k].clone();
            if active {
                self.state.active_events.insert(k);
            } else {
                self.state.active_events.remove(&k);
            }
            tracing::info!(active, event = %ev.describe(), "scenario event");
            self.state.log.events.push(LogEvent::Scenario { tick: t, active, description: ev.describe() });
            if active && ev.kind == EventKind::Broadcast {
                let msg = ev.message.clone().unwrap_or_default();
                let now = tick_to_datetime(start, t);
                let env = CognitionEnv { gateway: &self.gateway, embedder: &self.embedder, graph: &self.graph, weights: &self.config.retrieval };
                for a in &mut self.state.agents {
                    a.rt.broadcasts.push(msg.clone());
                    let cover = crate::cognition::mentioned_elements(&self.graph, &msg);
                    if let Err(e) = a.mind.remember(&env, ConceptKind::Event, &format!("Announcement: {msg}"), now, cover, TimeScope::span(now, 60)) {
                        tracing::warn!(error = %e, "could not store broadcast");
                    }
                }
            }
        }
        let stale: Vec<usize> = self.state.traffic.capacity_overrides().keys().filter(|l| !caps.contains_key(l)).copied().collect();
        for li in stale {
            self.state.traffic.set_capacity_override(li, None);
        }
        for (li, c) in caps {
            if self.state.traffic.capacity_overrides().get(&li) != Some(&c) {
                self.state.traffic.set_capacity_override(li, Some(c));
            }
        }
    }

    /// Broadcast messages scheduled for `date`.
    fn broadcasts_on(&self, date: NaiveDate) -> Vec<String> {
        self.state
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Broadcast && e.date == date)
            .filter_map(|e| e.message.clone())
            .collect()
    }

    // ---- step 1: plan generation and revision ---------------------------------------

    fn cognition_step(&mut self, t: Tick) -> Result<(), SimError> {
        let interval = self.config.periodic_interval;
        let triggers: Vec<Option<Trigger>> = self
            .state
            .agents
            .iter()
            .map(|a| {
                let trig = needs_plan_update(&a.rt, &self.state.traffic, t, interval);
                // Asleep: no periodic checks at home before the day starts.
                if trig == Some(Trigger::Periodic) && a.rt.current == 0 && t % MINUTES_PER_DAY < WAKE_MINUTE {
                    None
                } else {
                    trig
                }
            })
            .collect();
        if triggers.contains(&Some(Trigger::Initial)) {
            let sel: Vec<bool> = triggers.iter().map(|t| *t == Some(Trigger::Initial)).collect();
            self.plan_day(t, &sel)?;
        }
        let jobs: Vec<Option<ReactionJob>> = {
            let waits = self.link_waits();
            triggers
                .iter()
                .enumerate()
                .map(|(i, trig)| match trig {
                    Some(tr) if *tr != Trigger::Initial => self.reaction_job(i, *tr, t, &waits),
                    _ => None,
                })
                .collect()
        };
        if jobs.iter().all(Option::is_none) {
            return Ok(());
        }
        let traffic_text = self.traffic_text();
        let now = tick_to_datetime(self.config.start_date, t);
        let World { state, gateway, graph, embedder, config, .. } = self;
        let env = CognitionEnv { gateway, embedder, graph, weights: &config.retrieval };
        let jobs_ref = &jobs;
        let results = exec::map_selected_mut(
            config.exec,
            &mut state.agents,
            |i| jobs_ref[i].is_some(),
            |i, a| {
                let job = jobs_ref[i].as_ref().unwrap();
                a.mind.short_term.perceptions = job.perceptions.clone();
                a.mind.revise_plan(&env, &job.ctx, &job.progress, &traffic_text, now)
            },
        );
        for (i, r) in results {
            let trigger = jobs[i].as_ref().unwrap().trigger;
            match r {
                Ok(rev) => self.apply_revision(i, t, rev),
                Err(e) => {
                    tracing::warn!(agent = %self.state.agents[i].profile.name, %trigger, error = %e, "revision failed");
                    self.mark_checked(i, t);
                }
            }
        }
        Ok(())
    }

    fn plan_day(&mut self, t: Tick, selected: &[bool]) -> Result<(), SimError> {
        let date = date_of_tick(self.config.start_date, t);
        let now = tick_to_datetime(self.config.start_date, t);
        let broadcasts = self.broadcasts_on(date);
        let inputs: Vec<PlanInputs> = self
            .state
            .agents
            .iter()
            .map(|a| PlanInputs {
                date,
                now,
                household_vehicles: self.state.vehicles.vehicles(&a.profile.household),
                vehicles_claimed: 0,
                car_claim: None,
                broadcasts: broadcasts.clone(),
            })
            .collect();
        let World { state, gateway, graph, embedder, config, .. } = self;
        let env = CognitionEnv { gateway, embedder, graph, weights: &config.retrieval };
        let results = exec::map_selected_mut(
            config.exec,
            &mut state.agents,
            |i| selected[i],
            |i, a| a.mind.generate_daily_plan(&env, &a.profile, &inputs[i]),
        );
        for (i, r) in results {
            let home = self.state.agents[i].profile.home_facility.clone();
            let plan = match r {
                Ok(pr) => pr.plan,
                Err(e) => {
                    tracing::warn!(agent = %self.state.agents[i].profile.name, error = %e, "planning failed; staying home");
                    ActivityPlan::new(vec![PlanEntry::new(home, None, None, TravelMode::None, PathSpec::None, "Stay at home.")])
                }
            };
            let a = &self.state.agents[i];
            let (name, household) = (a.profile.name.clone(), a.profile.household.clone());
            let drives = plan.entries.iter().any(|e| e.mode == TravelMode::Drive);
            let plan = if drives && !self.state.vehicles.claim(&household, &name) {
                tracing::info!(agent = %name, "no vehicle left in the household; switching the day to transit");
                let vehicles = self.state.vehicles.vehicles(&household);
                let ctx = ValidationContext { graph: &self.graph, household_vehicles: vehicles, vehicles_claimed: vehicles, now: ClockTime::hm(0, 0), start: None };
                repair_plan(&plan, &a.profile, &ctx)
            } else {
                plan
            };
            let has_car = plan.entries.iter().any(|e| e.mode == TravelMode::Drive);
            let a = &mut self.state.agents[i];
            a.mind.short_term.initial_plan = Some(plan.clone());
            a.rt.plan = Some(plan);
            a.rt.current = 0;
            a.rt.has_car = has_car;
        }
        Ok(())
    }

    /// Expected entry wait on every road link with a nonzero wait.
    fn link_waits(&self) -> BTreeMap<String, u32> {
        self.graph
            .road_link_indices()
            .filter_map(|li| {
                let w = self.state.traffic.expected_wait(&self.graph, li);
                (w > 0).then(|| (self.graph.link(li).id.clone(), w))
            })
            .collect()
    }

    fn traffic_text(&self) -> String {
        let lines: Vec<String> = self
            .graph
            .road_link_indices()
            .filter_map(|li| {
                let w = self.state.traffic.expected_wait(&self.graph, li);
                let occ = self.state.traffic.occupancy(li);
                (w > 0 || self.state.traffic.queue_len(li) > 0).then(|| {
                    format!(
                        "{}: {} (about {w} min to enter, {occ}/{} vehicles)",
                        self.graph.link(li).id,
                        CongestionLevel::from_wait(w),
                        self.state.traffic.effective_capacity(li).map(|c| c.to_string()).unwrap_or_else(|| "-".into())
                    )
                })
            })
            .collect();
        if lines.is_empty() {
            "All roads are flowing freely.".into()
        } else {
            lines.join("\n")
        }
    }

    fn reaction_job(&self, i: usize, trigger: Trigger, t: Tick, waits: &BTreeMap<String, u32>) -> Option<ReactionJob> {
        let a = &self.state.agents[i];
        let plan = a.rt.plan.clone()?;
        let g = &self.graph;
        let traffic = &self.state.traffic;
        let date = date_of_tick(self.config.start_date, t);
        let now = Self::clock(t);
        let mut nearby: BTreeSet<String> = BTreeSet::new();
        let (location, mode, destination, remaining, decision_node, current_index, progress) = match &a.rt.place {
            Place::Travelling(trip) => {
                let place = traffic.place(trip.token)?;
                let remaining: Vec<String> = traffic.remaining_links(trip.token).iter().map(|l| g.link(*l).id.clone()).collect();
                let dn = traffic.decision_node(trip.token);
                let (location, where_) = match place {
                    TokenPlace::Queued { node, link, since } => (
                        AgentLocation::Queued { node: g.node(node).id.clone(), link: g.link(link).id.clone(), waited: t - since },
                        format!("waiting at {} for {} min to enter {}", g.node(node).id, t - since, g.link(link).id),
                    ),
                    TokenPlace::OnLink { link, .. } => (AgentLocation::OnLink { link: g.link(link).id.clone() }, format!("on {}", g.link(link).id)),
                };
                if let Some(n) = dn {
                    nearby.extend(g.arcs(n).iter().map(|arc| g.link(arc.link).id.clone()));
                }
                let progress = format!(
                    "Travelling from {} to {} by {}, departed {}; currently {where_}.",
                    trip.origin,
                    trip.destination,
                    trip.mode,
                    Self::clock(trip.depart)
                );
                (location, trip.mode, Some(trip.destination.clone()), remaining, dn.map(|n| g.node(n).id.clone()), trip.entry, progress)
            }
            Place::AtFacility { facility, since } => {
                let next = plan.entries.get(a.rt.current + 1);
                if let Ok(n) = g.facility_node(facility) {
                    nearby.extend(g.arcs(n).iter().map(|arc| g.link(arc.link).id.clone()));
                }
                let next_text = match next {
                    Some(e) => format!(
                        "next: {} {}",
                        e.facility,
                        e.departure.map(|d| format!("departing {d}")).unwrap_or_else(|| "after this activity".into())
                    ),
                    None => "no further activities today".into(),
                };
                let progress = format!("At {facility} since {}; {next_text}.", Self::clock(*since));
                (
                    AgentLocation::Facility { name: facility.clone(), arrived: Self::clock(*since) },
                    next.map(|e| e.mode).unwrap_or(TravelMode::None),
                    next.map(|e| e.facility.clone()),
                    Vec::new(),
                    None,
                    a.rt.current,
                    progress,
                )
            }
        };
        let overstay = if trigger == Trigger::ActivityTransition {
            plan.entries
                .get(current_index + 1)
                .and_then(|e| e.departure)
                .map(|d| now.minutes().saturating_sub(d.minutes()))
                .unwrap_or(0)
        } else {
            0
        };
        nearby.extend(remaining.iter().cloned());
        let mut perceptions: Vec<String> = nearby
            .iter()
            .filter_map(|l| waits.get(l).map(|w| format!("Congestion on {l}: {} (about {w} min to enter).", CongestionLevel::from_wait(*w))))
            .collect();
        for l in &nearby {
            if let Some(c) = g.link_idx(l).and_then(|li| traffic.capacity_overrides().get(&li)) {
                perceptions.push(format!("Incident on {l}: capacity reduced to {c}."));
            }
        }
        let ctx = ReactionContext {
            profile: a.profile.clone(),
            date,
            now,
            trigger: trigger.as_str().into(),
            plan,
            current_index,
            location,
            mode,
            destination,
            remaining_path: remaining,
            decision_node,
            link_waits: waits.clone(),
            overstay,
            broadcasts: a.rt.broadcasts.clone(),
        };
        Some(ReactionJob { trigger, ctx, progress, perceptions })
    }

    fn mark_checked(&mut self, i: usize, t: Tick) {
        let token_place = self.state.agents[i].rt.trip().and_then(|trip| self.state.traffic.place(trip.token));
        let rt = &mut self.state.agents[i].rt;
        rt.last_check = t;
        rt.just_arrived = false;
        if let Some(TokenPlace::Queued { node, link, since }) = token_place {
            rt.queue_episode = Some((node, link, since));
        }
    }

    fn apply_revision(&mut self, i: usize, t: Tick, rev: PlanRevision) {
        let applied = match rev.action.clone() {
            RevisionAction::Continue => true,
            RevisionAction::PathUpdate { path } => self.apply_path_update(i, &path),
            RevisionAction::DepartureAdjust { departure } => {
                let a = &self.state.agents[i];
                match (&a.rt.place, &a.rt.plan) {
                    (Place::AtFacility { .. }, Some(plan)) if a.rt.has_remaining() => {
                        let mut entries = plan.entries.clone();
                        entries[a.rt.current + 1].departure = Some(departure);
                        self.adopt_plan(i, entries)
                    }
                    _ => false,
                }
            }
            RevisionAction::PartialReplace { entries } => self.replace_remaining(i, entries),
            RevisionAction::FullReplace { plan } => {
                let here = self.state.agents[i].rt.facility().map(str::to_string);
                let mut entries = plan.entries;
                while entries.len() > 1 && here.as_deref() == Some(entries[0].facility.as_str()) {
                    entries.remove(0);
                }
                self.replace_remaining(i, entries)
            }
        };
        let name = self.state.agents[i].profile.name.clone();
        if !applied {
            tracing::debug!(agent = %name, decision = rev.decision().as_str(), "revision rejected");
        }
        self.state.log.events.push(LogEvent::Revision {
            tick: t,
            agent: name,
            trigger: rev.trigger.clone(),
            decision: rev.decision().as_str().into(),
            applied,
            rationale: rev.rationale.clone(),
        });
        self.mark_checked(i, t);
    }

    fn replace_remaining(&mut self, i: usize, tail: Vec<PlanEntry>) -> bool {
        let a = &self.state.agents[i];
        let Some(plan) = &a.rt.plan else { return false };
        if a.rt.trip().is_some() {
            // Keep the trip in progress; replace what follows it.
        }
        let keep = a.rt.current + 1;
        let mut entries: Vec<PlanEntry> = plan.entries[..keep.min(plan.entries.len())].to_vec();
        entries.extend(tail);
        self.adopt_plan(i, entries)
    }

    /// Installs a revised full-day plan if it validates; records dropped errands as missed.
    fn adopt_plan(&mut self, i: usize, entries: Vec<PlanEntry>) -> bool {
        let a = &self.state.agents[i];
        let new = ActivityPlan::new(entries);
        let household = a.profile.household.clone();
        let ctx = ValidationContext {
            graph: &self.graph,
            household_vehicles: self.state.vehicles.vehicles(&household),
            vehicles_claimed: self.state.vehicles.claimed_by_others(&household, &a.profile.name),
            now: ClockTime::hm(0, 0),
            start: None,
        };
        let report = validate_plan(&new, &a.profile, &ctx);
        if !report.is_valid() {
            tracing::debug!(agent = %a.profile.name, violations = ?report.violations, "revised plan invalid");
            return false;
        }
        let drives = new.entries.iter().any(|e| e.mode == TravelMode::Drive);
        let name = a.profile.name.clone();
        if drives && !a.rt.has_car && !self.state.vehicles.claim(&household, &name) {
            return false;
        }
        let a = &mut self.state.agents[i];
        a.rt.has_car |= drives;
        let home = a.profile.home_facility.clone();
        let work = a.profile.work_facility.clone();
        let cur = a.rt.current;
        let old_rest: Vec<String> = a.rt.plan.as_ref().map(|p| p.entries.iter().skip(cur + 1).map(|e| e.facility.clone()).collect()).unwrap_or_default();
        let new_rest: BTreeSet<&String> = new.entries.iter().skip(cur + 1).map(|e| &e.facility).collect();
        for f in old_rest {
            if !new_rest.contains(&f) && f != home && Some(&f) != work.as_ref() {
                a.rt.day_log.add_missed(&f);
            }
        }
        a.rt.plan = Some(new);
        true
    }

    fn apply_path_update(&mut self, i: usize, spec: &PathSpec) -> bool {
        let g = self.graph.clone();
        let a = &self.state.agents[i];
        match &a.rt.place {
            Place::Travelling(trip) => {
                let (Some(dn), Ok(dest)) = (self.state.traffic.decision_node(trip.token), g.facility_node(&trip.destination)) else {
                    return false;
                };
                let links = match resolve_path_between(&g, dn, dest, trip.mode, spec, &RouteOptions::default()) {
                    Ok(l) => l,
                    Err(e) => {
                        tracing::debug!(agent = %a.profile.name, error = %e, "path update does not resolve");
                        return false;
                    }
                };
                let idx: Vec<usize> = links.iter().filter_map(|l| g.link_idx(l)).collect();
                let token = trip.token;
                let before = self.state.traffic.place(token);
                match self.state.traffic.reroute(&g, token, &idx) {
                    Ok(()) => {
                        if let Some(TokenPlace::Queued { link, since, .. }) = before {
                            if idx.first() != Some(&link) {
                                let minutes = self.state.traffic.expected_wait(&g, link);
                                let rec = WaitRecord { link: g.link(link).id.clone(), at: Self::clock(since), minutes };
                                let log = &mut self.state.agents[i].rt.day_log;
                                if self.state.traffic.capacity_overrides().contains_key(&link) {
                                    log.add_incident(&rec.link);
                                }
                                log.avoided.push(rec);
                            }
                        }
                        true
                    }
                    Err(e) => {
                        tracing::debug!(error = %e, "reroute failed");
                        false
                    }
                }
            }
            Place::AtFacility { .. } => {
                let Some(plan) = &a.rt.plan else { return false };
                if !a.rt.has_remaining() {
                    return false;
                }
                let mut entries = plan.entries.clone();
                entries[a.rt.current + 1].path = spec.clone();
                self.adopt_plan(i, entries)
            }
        }
    }

    // ---- step 2: activity state updates ---------------------------------------------

    fn activity_step(&mut self, t: Tick) -> Result<(), SimError> {
        let day0 = Self::day_start(t);
        for i in 0..self.state.agents.len() {
            let a = &self.state.agents[i];
            let (Place::AtFacility { since, .. }, Some(plan)) = (&a.rt.place, &a.rt.plan) else { continue };
            if !a.rt.has_remaining() {
                continue;
            }
            let cur = &plan.entries[a.rt.current];
            let next = &plan.entries[a.rt.current + 1];
            let due = match next.departure {
                Some(d) => day0 + d.minutes(),
                None => {
                    let began = if a.rt.current == 0 {
                        (*since).max(day0 + cur.departure.map(|d| d.minutes()).unwrap_or(0))
                    } else {
                        *since
                    };
                    began + cur.duration.unwrap_or(0)
                }
            };
            if t >= due {
                self.depart(i, t)?;
            }
        }
        Ok(())
    }

    fn depart(&mut self, i: usize, t: Tick) -> Result<(), SimError> {
        let g = self.graph.clone();
        let a = &self.state.agents[i];
        let Some(from) = a.rt.facility().map(str::to_string) else { return Ok(()) };
        let plan = a.rt.plan.as_ref().expect("checked by caller");
        let idx = a.rt.current + 1;
        let e = plan.entries[idx].clone();
        let name = a.profile.name.clone();
        if e.facility == from {
            let rt = &mut self.state.agents[i].rt;
            rt.current = idx;
            rt.place = Place::AtFacility { facility: from, since: t };
            rt.just_arrived = true;
            return Ok(());
        }
        let mut mode = e.mode;
        if mode == TravelMode::None || (mode == TravelMode::Drive && !a.rt.has_car) {
            tracing::debug!(agent = %name, planned = %mode, "leg without a usable mode; taking transit");
            mode = TravelMode::Transit;
        }
        let opts = RouteOptions::default();
        let links = resolve_path(&g, &from, &e.facility, mode, &e.path, &opts)
            .or_else(|_| resolve_path(&g, &from, &e.facility, mode, &PathSpec::Shortest, &opts))
            .or_else(|_| {
                mode = TravelMode::Transit;
                resolve_path(&g, &from, &e.facility, mode, &PathSpec::Shortest, &opts)
            });
        let links = match links {
            Ok(l) => l,
            Err(err) => {
                tracing::warn!(agent = %name, to = %e.facility, error = %err, "no route; skipping entry");
                let home = self.state.agents[i].profile.home_facility.clone();
                let rt = &mut self.state.agents[i].rt;
                if e.facility != home {
                    rt.day_log.add_missed(&e.facility);
                }
                rt.current = idx;
                return Ok(());
            }
        };
        let link_idx: Vec<usize> = links.iter().filter_map(|l| g.link_idx(l)).collect();
        let origin = g.facility_node(&from)?;
        self.state.traffic.depart(&g, i as u64, origin, &link_idx, mode)?;
        let a = &self.state.agents[i];
        let purpose = if e.facility == a.profile.home_facility {
            TripPurpose::Home
        } else if Some(&e.facility) == a.profile.work_facility.as_ref() {
            TripPurpose::Work
        } else {
            TripPurpose::Errand
        };
        let due = match purpose {
            TripPurpose::Work => a.profile.work_window().map(|(ws, _)| Self::day_start(t) + ws.minutes()),
            _ => None,
        };
        let household = a.profile.household.clone();
        if mode == TravelMode::Drive {
            self.state.vehicles.set_in_use(&household, &name, true);
        }
        let rt = &mut self.state.agents[i].rt;
        rt.current = idx;
        rt.place = Place::Travelling(Trip {
            token: i as u64,
            entry: idx,
            origin: from,
            destination: e.facility,
            mode,
            depart: t,
            due,
            purpose,
            traversed: Vec::new(),
        });
        rt.queue_episode = None;
        Ok(())
    }

    // ---- step 3: network movement ---------------------------------------------------

    fn movement_step(&mut self, t: Tick) -> Result<(), SimError> {
        let g = self.graph.clone();
        self.state.traffic.step(&g);
        let now = tick_to_datetime(self.config.start_date, t);
        for e in self.state.traffic.drain_entries() {
            let i = e.token as usize;
            let link = g.link(e.link).id.clone();
            let wait = e.wait();
            let a = &mut self.state.agents[i];
            if let Place::Travelling(trip) = &mut a.rt.place {
                trip.traversed.push(link.clone());
            }
            if wait > 0 {
                a.rt.day_log.waits.push(WaitRecord { link: link.clone(), at: Self::clock(e.queued_at), minutes: wait });
            }
            self.state.log.events.push(LogEvent::LinkEnter { tick: e.tick, agent: a.profile.name.clone(), link: link.clone(), wait });
            if self.state.traffic.capacity_overrides().contains_key(&e.link) && !a.rt.day_log.incidents.contains(&link) {
                a.rt.day_log.add_incident(&link);
                let text = format!("Passed an incident on {link}; the road was running at reduced capacity.");
                let env = CognitionEnv { gateway: &self.gateway, embedder: &self.embedder, graph: &self.graph, weights: &self.config.retrieval };
                self.state.agents[i].mind.remember(&env, ConceptKind::Event, &text, now, [link.clone()].into_iter().collect(), TimeScope::span(now, 60))?;
            }
            if wait >= SEVERE_WAIT {
                let text = format!("Waited {wait} min in a queue to enter {link}.");
                let env = CognitionEnv { gateway: &self.gateway, embedder: &self.embedder, graph: &self.graph, weights: &self.config.retrieval };
                let scope = TimeScope::span(tick_to_datetime(self.config.start_date, e.queued_at), i64::from(wait));
                self.state.agents[i].mind.remember(&env, ConceptKind::Event, &text, now, [link].into_iter().collect(), scope)?;
            }
        }
        for arr in self.state.traffic.drain_arrivals() {
            self.arrive(arr.token as usize, arr.tick)?;
        }
        for li in g.road_link_indices() {
            let occ = self.state.traffic.on_link(li);
            let queue = self.state.traffic.queue_len(li);
            if occ == 0 && queue == 0 {
                continue;
            }
            let wait = self.state.traffic.expected_wait(&g, li);
            self.state.log.traffic.push(TrafficRow {
                tick: t,
                link: g.link(li).id.clone(),
                occupancy: self.state.traffic.occupancy(li),
                queue,
                capacity: self.state.traffic.effective_capacity(li),
                wait,
                level: CongestionLevel::from_wait(wait),
            });
        }
        Ok(())
    }

    fn arrive(&mut self, i: usize, tick: Tick) -> Result<(), SimError> {
        let Place::Travelling(trip) = self.state.agents[i].rt.place.clone() else { return Ok(()) };
        self.finish_trip(i, &trip, Some(tick));
        let a = &mut self.state.agents[i];
        a.rt.place = Place::AtFacility { facility: trip.destination.clone(), since: tick };
        a.rt.just_arrived = true;
        a.rt.queue_episode = None;
        if trip.purpose == TripPurpose::Errand {
            a.rt.day_log.completed_errands.push(trip.destination.clone());
        }
        if trip.mode == TravelMode::Drive {
            let (h, n) = (a.profile.household.clone(), a.profile.name.clone());
            self.state.vehicles.set_in_use(&h, &n, false);
        }
        if let (TripPurpose::Work, Some(due)) = (trip.purpose, trip.due) {
            let late = i64::from(tick) - i64::from(due);
            let timing = match late {
                0 => "on time".to_string(),
                l if l > 0 => format!("{l} min late"),
                l => format!("{} min early", -l),
            };
            let text = format!("Arrived at {} {timing} after leaving at {} by {}.", trip.destination, Self::clock(trip.depart), trip.mode);
            let env = CognitionEnv { gateway: &self.gateway, embedder: &self.embedder, graph: &self.graph, weights: &self.config.retrieval };
            let now = tick_to_datetime(self.config.start_date, tick);
            let cover: BTreeSet<String> = trip.traversed.iter().cloned().chain([trip.destination.clone()]).collect();
            let scope = TimeScope::single(tick_to_datetime(self.config.start_date, trip.depart), now);
            self.state.agents[i].mind.remember(&env, ConceptKind::Event, &text, now, cover, scope)?;
        }
        Ok(())
    }

    /// Records a trip in the day log and trip table; `arrived` is `None` for trips cut short.
    fn finish_trip(&mut self, i: usize, trip: &Trip, arrived: Option<Tick>) {
        let start = self.config.start_date;
        let a = &mut self.state.agents[i];
        let free_flow = self.graph.free_flow_cost(&trip.traversed, trip.mode) as i64;
        a.rt.day_log.trips.push(TripRecord {
            destination: trip.destination.clone(),
            purpose: trip.purpose,
            depart: Self::clock(trip.depart),
            arrive: arrived.map(Self::clock),
            due: trip.due.map(Self::clock),
            mode: trip.mode,
            links: trip.traversed.clone(),
        });
        self.state.log.trips.push(TripRow {
            agent: a.profile.name.clone(),
            origin: trip.origin.clone(),
            destination: trip.destination.clone(),
            depart: tick_to_datetime(start, trip.depart),
            arrive: arrived.map(|t| tick_to_datetime(start, t)),
            mode: trip.mode,
            path: trip.traversed.join(";"),
            delay: arrived.map(|t| i64::from(t - trip.depart) - free_flow),
            purpose: trip.purpose,
            due: trip.due.map(|d| tick_to_datetime(start, d)),
            lateness: arrived.zip(trip.due).map(|(t, d)| i64::from(t) - i64::from(d)),
        });
    }

    // ---- step 4: reflection -------------------------------------------------------------

    fn reflection_step(&mut self, t: Tick) -> Result<(), SimError> {
        self.reflect(t, |rt, home| !rt.reflected && rt.finished_day(home))
    }

    fn reflect(&mut self, t: Tick, pick: impl Fn(&AgentRuntime, &str) -> bool + Sync + Send) -> Result<(), SimError> {
        let sel: Vec<bool> = self.state.agents.iter().map(|a| pick(&a.rt, &a.profile.home_facility)).collect();
        if !sel.iter().any(|s| *s) {
            return Ok(());
        }
        // At a day boundary the reflection belongs to the day that just ended.
        let day_tick = if t.is_multiple_of(MINUTES_PER_DAY) && t > 0 { t - 1 } else { t };
        let date = date_of_tick(self.config.start_date, day_tick);
        let now = tick_to_datetime(self.config.start_date, t);
        let World { state, gateway, graph, embedder, config, .. } = self;
        let env = CognitionEnv { gateway, embedder, graph, weights: &config.retrieval };
        let results = exec::map_selected_mut(
            config.exec,
            &mut state.agents,
            |i| sel[i],
            |_, a| a.mind.daily_reflection(&env, &a.profile, date, &a.rt.day_log, now),
        );
        for (i, r) in results {
            let a = &mut self.state.agents[i];
            a.rt.reflected = true;
            match r {
                Ok(rec) => self.state.log.events.push(LogEvent::Reflection { tick: t, agent: a.profile.name.clone(), content: rec.content }),
                Err(e) => tracing::warn!(agent = %a.profile.name, error = %e, "reflection failed"),
            }
        }
        Ok(())
    }

    // ---- step 5: persistence --------------------------------------------------------

    fn persist_periodic(&mut self) -> Result<(), SimError> {
        if let Some(dir) = &self.out_dir {
            if self.state.tick.is_multiple_of(self.config.checkpoint_interval) && !self.state.tick.is_multiple_of(MINUTES_PER_DAY) {
                self.checkpoint().save(&dir.join("checkpoint.json"))?;
            }
        }
        Ok(())
    }

    fn persist_final(&mut self) -> Result<(), SimError> {
        if let Some(dir) = self.out_dir.clone() {
            let cp = self.checkpoint();
            cp.save(&dir.join("checkpoint.json"))?;
            self.state.log.write_dir(&dir)?;
            self.run_info(Some(cp.hash)).write(&dir)?;
        }
        Ok(())
    }

    /// Answers an operator's question as the named agent. With `persist` the exchange is
    /// stored as a chat memory.
    pub fn interview(&mut self, agent: &str, question: &str, persist: bool) -> Result<InterviewExchange, SimError> {
        let i = self.agent_index(agent).ok_or_else(|| SimError::UnknownAgent(agent.to_string()))?;
        let now = self.now();
        let World { state, gateway, graph, embedder, config, .. } = self;
        let env = CognitionEnv { gateway, embedder, graph, weights: &config.retrieval };
        let a = &mut state.agents[i];
        Ok(a.mind.interview(&env, &a.profile, question, a.rt.plan.as_ref(), persist, now)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_mut_returns_both_orders() {
        let mut v = vec![1, 2, 3];
        let (a, b) = pair_mut(&mut v, 2, 0);
        std::mem::swap(a, b);
        assert_eq!(v, vec![3, 2, 1]);
    }

    #[test]
    fn network_description_lists_facilities_and_lines() {
        let d = describe_network(&NetworkGraph::nguyen_dupuis());
        assert!(d.contains("Office"));
        assert!(d.contains("Ave_2_link_2"));
        assert!(d.contains("Metro_1"));
    }

    #[test]
    fn state_hash_changes_with_tick() {
        let c = SimConfig::new(NaiveDate::from_ymd_opt(2025, 3, 3).unwrap(), 1, 1);
        let mut w = World::with_parts(c, NetworkGraph::nguyen_dupuis(), Population::bundled()).unwrap();
        let h0 = w.state.hash();
        w.step().unwrap();
        assert_ne!(h0, w.state.hash());
    }
}
