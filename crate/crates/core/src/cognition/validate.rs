use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ActivityPlan, AgentProfile, PathSpec};
use crate::clock::ClockTime;
use crate::net::{shortest_path_between, LinkKind, NetError, NetworkGraph, RouteOptions, TravelMode};

/// Stable violation codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    VehicleInconsistent,
    TimeNonmonotone,
    NotHomeFinal,
    UnlicensedDriver,
    PathInvalid,
    UnknownFacility,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::VehicleInconsistent => "VEHICLE_INCONSISTENT",
            ViolationCode::TimeNonmonotone => "TIME_NONMONOTONE",
            ViolationCode::NotHomeFinal => "NOT_HOME_FINAL",
            ViolationCode::UnlicensedDriver => "UNLICENSED_DRIVER",
            ViolationCode::PathInvalid => "PATH_INVALID",
            ViolationCode::UnknownFacility => "UNKNOWN_FACILITY",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Offending plan entry, if the problem is local to one.
    pub entry: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.entry {
            Some(i) => write!(f, "{} (entry {i}): {}", self.code, self.message),
            None => write!(f, "{}: {}", self.code, self.message),
        }
    }
}

/// World facts a plan is checked against.
#[derive(Debug, Clone)]
pub struct ValidationContext<'a> {
    pub graph: &'a NetworkGraph,
    pub household_vehicles: u32,
    /// Vehicles already claimed today by other household members.
    pub vehicles_claimed: u32,
    /// Plan generation time; earlier departures are in the past.
    pub now: ClockTime,
    /// Where the agent is when the plan starts. Defaults to home.
    pub start: Option<String>,
}

impl<'a> ValidationContext<'a> {
    pub fn new(graph: &'a NetworkGraph, household_vehicles: u32) -> Self {
        ValidationContext { graph, household_vehicles, vehicles_claimed: 0, now: ClockTime::hm(0, 0), start: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Commonsense issues that do not block a plan.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

/// Resolves a leg's path spec into link ids.
///
/// `Shortest` and `None` route with `opts` (which may carry live delays). Explicit full
/// link ids must already form a valid path, except that transit specs may omit walk,
/// boarding and alighting links. Street or line names (`Ave_2`, `Metro_1`) restrict the
/// search to links carrying that prefix.
pub fn resolve_path(
    graph: &NetworkGraph,
    from: &str,
    to: &str,
    mode: TravelMode,
    spec: &PathSpec,
    opts: &RouteOptions,
) -> Result<Vec<String>, NetError> {
    let o = graph.facility_node(from)?;
    let d = graph.facility_node(to)?;
    resolve_path_between(graph, o, d, mode, spec, opts)
}

/// Node-to-node form of [`resolve_path`], used for en-route reroutes.
pub fn resolve_path_between(
    graph: &NetworkGraph,
    o: usize,
    d: usize,
    mode: TravelMode,
    spec: &PathSpec,
    opts: &RouteOptions,
) -> Result<Vec<String>, NetError> {
    if o == d {
        return Ok(Vec::new());
    }
    let (from, to) = (graph.node(o).id.as_str(), graph.node(d).id.as_str());
    let items = match spec {
        PathSpec::Shortest | PathSpec::None => return Ok(shortest_path_between(graph, o, d, mode, opts)?.links),
        PathSpec::Explicit(items) => items,
    };
    let all_ids = items.iter().all(|i| graph.link_idx(i).is_some());
    if all_ids && graph.validate_path(o, d, items, mode).is_ok() {
        return Ok(items.clone());
    }
    if all_ids && mode != TravelMode::Transit {
        graph.validate_path(o, d, items, mode)?;
    }
    let mut only = BTreeSet::new();
    for item in items {
        let before = only.len();
        for (i, l) in graph.links().iter().enumerate() {
            if l.id == *item || NetworkGraph::street_of(&l.id) == item || l.line_id.as_deref() == Some(item.as_str()) {
                only.insert(i);
            }
        }
        if only.len() == before {
            return Err(NetError::InvalidPath(format!("unknown link or street {item}")));
        }
    }
    if mode == TravelMode::Transit {
        for (i, l) in graph.links().iter().enumerate() {
            if matches!(l.kind, LinkKind::Walk | LinkKind::Boarding | LinkKind::Alighting) {
                only.insert(i);
            }
        }
    }
    let restricted = RouteOptions { only: Some(only), ..opts.clone() };
    let path = shortest_path_between(graph, o, d, mode, &restricted)
        .map_err(|_| NetError::InvalidPath(format!("no {mode} path from {from} to {to} along {}", items.join(", "))))?;
    if all_ids {
        // Only implicit links may be added to a fully listed transit path.
        let used: Vec<&String> = path.links.iter().filter(|l| graph.link_idx(l).is_some_and(|i| graph.link(i).kind == LinkKind::Transit)).collect();
        let named: Vec<&String> = items.iter().filter(|l| graph.link_idx(l).is_some_and(|i| graph.link(i).kind == LinkKind::Transit)).collect();
        if used != named {
            return Err(NetError::InvalidPath(format!("transit links {} do not connect {from} to {to}", items.join(", "))));
        }
    }
    Ok(path.links)
}

/// Checks a plan against the hard rules. Time-of-day plausibility only produces warnings.
pub fn validate_plan(plan: &ActivityPlan, agent: &AgentProfile, ctx: &ValidationContext<'_>) -> ValidationReport {
    let mut r = ValidationReport::default();
    let home = agent.home_facility.as_str();
    let mut push = |code, entry, message: String| r.violations.push(Violation { code, entry, message });

    match plan.entries.last() {
        None => push(ViolationCode::NotHomeFinal, None, "plan is empty".into()),
        Some(e) if e.facility != home => {
            push(ViolationCode::NotHomeFinal, Some(plan.entries.len() - 1), format!("final entry is {} instead of {home}", e.facility))
        }
        _ => {}
    }

    let mut last_dep: Option<ClockTime> = None;
    for (i, e) in plan.entries.iter().enumerate() {
        if let Some(t) = e.departure {
            if i > 0 && t < ctx.now {
                push(ViolationCode::TimeNonmonotone, Some(i), format!("departure {t} is before the current time {}", ctx.now));
            }
            if let Some(prev) = last_dep {
                if t <= prev {
                    push(ViolationCode::TimeNonmonotone, Some(i), format!("departure {t} does not follow {prev}"));
                }
            }
            last_dep = Some(t);
        }
    }

    let drives = plan.entries.iter().any(|e| e.mode == TravelMode::Drive);
    if drives && !agent.licensed_driver {
        for (i, _) in plan.entries.iter().enumerate().filter(|(_, e)| e.mode == TravelMode::Drive) {
            push(ViolationCode::UnlicensedDriver, Some(i), format!("{} has no driving licence", agent.name));
        }
    }
    if drives && ctx.vehicles_claimed >= ctx.household_vehicles {
        push(
            ViolationCode::VehicleInconsistent,
            None,
            format!("household has {} vehicle(s) and {} already claimed", ctx.household_vehicles, ctx.vehicles_claimed),
        );
    }

    // Follow the agent and the car through the day.
    let start = ctx.start.clone().unwrap_or_else(|| home.to_string());
    let mut at = start.clone();
    let mut car_at = home.to_string();
    for (i, e) in plan.entries.iter().enumerate() {
        if ctx.graph.facility(&e.facility).is_none() {
            push(ViolationCode::UnknownFacility, Some(i), format!("unknown facility {}", e.facility));
            continue;
        }
        if e.facility == at {
            continue;
        }
        match e.mode {
            TravelMode::None => {
                push(ViolationCode::PathInvalid, Some(i), format!("travel from {at} to {} has no mode", e.facility));
            }
            TravelMode::Drive => {
                if car_at != at {
                    push(ViolationCode::VehicleInconsistent, Some(i), format!("drive leg from {at} but the car is at {car_at}"));
                }
                car_at = e.facility.clone();
            }
            TravelMode::Transit | TravelMode::Walk => {}
        }
        if e.mode != TravelMode::None {
            if let Err(err) = resolve_path(ctx.graph, &at, &e.facility, e.mode, &e.path, &RouteOptions::default()) {
                push(ViolationCode::PathInvalid, Some(i), err.to_string());
            }
        }
        at = e.facility.clone();
    }
    if drives && car_at != home {
        push(ViolationCode::VehicleInconsistent, None, format!("the car is left at {car_at}"));
    }

    for (i, e) in plan.entries.iter().enumerate() {
        let text = e.description.to_lowercase();
        if let Some(t) = e.departure {
            if text.contains("lunch") && !(ClockTime::hm(10, 30)..=ClockTime::hm(14, 30)).contains(&t) {
                r.warnings.push(format!("entry {i}: lunch at {t}"));
            }
            if text.contains("breakfast") && t > ClockTime::hm(11, 0) {
                r.warnings.push(format!("entry {i}: breakfast at {t}"));
            }
        }
        if i + 1 < plan.entries.len() {
            if let (Some(a), Some(b)) = (e.departure, plan.entries[i + 1].departure) {
                if b.minutes() - a.minutes().min(b.minutes()) < 10 && e.facility != plan.entries[i + 1].facility {
                    r.warnings.push(format!("entry {}: only {} min after the previous departure", i + 1, b.minutes().saturating_sub(a.minutes())));
                }
            }
        }
    }
    r
}

/// Makes a plan valid by construction: unknown facilities dropped, modes fixed, paths set
/// to shortest, times made increasing and a final home return appended.
pub fn repair_plan(plan: &ActivityPlan, agent: &AgentProfile, ctx: &ValidationContext<'_>) -> ActivityPlan {
    let home = agent.home_facility.clone();
    let can_drive = agent.licensed_driver && ctx.vehicles_claimed < ctx.household_vehicles;
    let mut entries: Vec<_> = plan.entries.iter().filter(|e| ctx.graph.facility(&e.facility).is_some()).cloned().collect();
    if entries.last().map(|e| e.facility != home).unwrap_or(true) {
        entries.push(super::PlanEntry::new(home.clone(), None, None, TravelMode::Transit, PathSpec::Shortest, "Return home."));
    }
    let any_drive = can_drive && entries.iter().any(|e| e.mode == TravelMode::Drive);
    let day_mode = if any_drive { TravelMode::Drive } else { TravelMode::Transit };
    let mut at = ctx.start.clone().unwrap_or_else(|| home.clone());
    let mut last_dep: Option<ClockTime> = None;
    for (i, e) in entries.iter_mut().enumerate() {
        if e.facility == at {
            e.mode = TravelMode::None;
            e.path = PathSpec::None;
        } else {
            e.mode = day_mode;
            if resolve_path(ctx.graph, &at, &e.facility, e.mode, &e.path, &RouteOptions::default()).is_err() {
                e.path = PathSpec::Shortest;
            }
        }
        if let Some(t) = e.departure {
            let floor = last_dep.map(|p| p.shifted(1)).unwrap_or(ctx.now);
            if i > 0 && t < floor {
                e.departure = None;
            } else {
                last_dep = Some(t);
            }
        }
        at = e.facility.clone();
    }
    ActivityPlan::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cognition::Population;

    fn agent(home: &str) -> AgentProfile {
        let mut a = Population::bundled().agents.into_iter().find(|a| a.licensed_driver).unwrap();
        a.home_facility = home.into();
        a
    }

    const REASONING_PLAN: &str = r#"[["Midtown apartment", "06:00", "20", "none", "none", "Morning at home."],
        ["Office", "07:15", "none", "drive", "Ave_2, St_5", "Commute to work."],
        ["Museum", "12:00", "none", "drive", "shortest", "Museum visit with a friend."],
        ["Office", "13:00", "120", "drive", "shortest", "Back to work."],
        ["Midtown apartment", "19:30", "none", "drive", "shortest", "Home for the evening."]]"#;

    #[test]
    fn street_prefixes_resolve() {
        let g = NetworkGraph::nguyen_dupuis();
        let p = resolve_path(&g, "Midtown apartment", "Office", TravelMode::Drive, &PathSpec::parse("Ave_2, St_5"), &RouteOptions::default()).unwrap();
        assert_eq!(p, vec!["Ave_2_link_1", "Ave_2_link_2", "Ave_2_link_3", "Ave_2_link_4", "St_5_link_1"]);
    }

    #[test]
    fn transit_lines_resolve_with_implicit_links() {
        let g = NetworkGraph::nguyen_dupuis();
        let p = resolve_path(&g, "Uptown apartment", "Food court", TravelMode::Transit, &PathSpec::parse("Metro_2"), &RouteOptions::default()).unwrap();
        assert!(p.iter().any(|l| l.starts_with("Metro_2_link")));
        assert!(g.validate_path(g.facility_node("Uptown apartment").unwrap(), g.facility_node("Food court").unwrap(), &p, TravelMode::Transit).is_ok());
    }

    #[test]
    fn clean_fixture_has_no_violations() {
        let g = NetworkGraph::nguyen_dupuis();
        let plan = ActivityPlan::from_json(REASONING_PLAN).unwrap();
        let r = validate_plan(&plan, &agent("Midtown apartment"), &ValidationContext::new(&g, 1));
        assert!(r.is_valid(), "{:?}", r.violations);
    }

    #[test]
    fn missing_home_return() {
        let g = NetworkGraph::nguyen_dupuis();
        let mut plan = ActivityPlan::from_json(REASONING_PLAN).unwrap();
        plan.entries.pop();
        let r = validate_plan(&plan, &agent("Midtown apartment"), &ValidationContext::new(&g, 1));
        assert!(r.has(ViolationCode::NotHomeFinal));
    }

    #[test]
    fn repair_yields_valid_plan() {
        let g = NetworkGraph::nguyen_dupuis();
        let mut plan = ActivityPlan::from_json(REASONING_PLAN).unwrap();
        plan.entries.pop();
        plan.entries[1].path = PathSpec::parse("Ave_4_link_1, St_4_link_2");
        plan.entries[3].departure = Some(ClockTime::hm(11, 0));
        let a = agent("Midtown apartment");
        let ctx = ValidationContext::new(&g, 1);
        assert!(!validate_plan(&plan, &a, &ctx).is_valid());
        let fixed = repair_plan(&plan, &a, &ctx);
        let r = validate_plan(&fixed, &a, &ctx);
        assert!(r.is_valid(), "{:?}", r.violations);
    }

    #[test]
    fn unlicensed_and_claimed_car() {
        let g = NetworkGraph::nguyen_dupuis();
        let plan = ActivityPlan::from_json(REASONING_PLAN).unwrap();
        let mut a = agent("Midtown apartment");
        a.licensed_driver = false;
        assert!(validate_plan(&plan, &a, &ValidationContext::new(&g, 1)).has(ViolationCode::UnlicensedDriver));
        let mut ctx = ValidationContext::new(&g, 1);
        ctx.vehicles_claimed = 1;
        assert!(validate_plan(&plan, &agent("Midtown apartment"), &ctx).has(ViolationCode::VehicleInconsistent));
    }

    #[test]
    fn past_departure_is_flagged() {
        let g = NetworkGraph::nguyen_dupuis();
        let plan = ActivityPlan::from_json(REASONING_PLAN).unwrap();
        let mut ctx = ValidationContext::new(&g, 1);
        ctx.now = ClockTime::hm(8, 0);
        assert!(validate_plan(&plan, &agent("Midtown apartment"), &ctx).has(ViolationCode::TimeNonmonotone));
    }

    #[test]
    fn midday_drive_without_car_is_inconsistent() {
        let g = NetworkGraph::nguyen_dupuis();
        let plan = ActivityPlan::from_json(
            r#"[["Midtown apartment", "06:00", "30", "none", "none", "Morning routine."],
            ["Factory", "07:00", "none", "transit", "shortest", "Take the metro to work."],
            ["Supermarket", "17:00", "30", "drive", "shortest", "Drive to the supermarket after work."],
            ["Midtown apartment", "18:00", "none", "transit", "shortest", "Head home."]]"#,
        )
        .unwrap();
        let r = validate_plan(&plan, &agent("Midtown apartment"), &ValidationContext::new(&g, 1));
        assert!(r.has(ViolationCode::VehicleInconsistent), "{:?}", r.violations);
    }
}
