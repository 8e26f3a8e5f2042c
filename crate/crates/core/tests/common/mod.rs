//! Brute-force oracles shared by the property suites and the acceptance run. Each one
//! recomputes a library result from first principles instead of calling into it.

#![allow(dead_code, clippy::type_complexity, clippy::too_many_arguments)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::{NaiveDate, NaiveDateTime};
use civitas_core::memory::{ConceptNode, RetrievalQuery, RetrievalWeights, TimeScope};
use civitas_core::net::{Link, LinkKind, NetworkDocument, NetworkGraph, Node, TrafficState, TravelMode};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn t0() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2025, 3, 10).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

// ---------------------------------------------------------------- memory

fn minute_set(t: &TimeScope) -> HashSet<i64> {
    let mut out = HashSet::new();
    for iv in t.intervals() {
        let mut m = iv.start;
        while m < iv.end {
            out.insert(m.and_utc().timestamp() / 60);
            m += chrono::Duration::minutes(1);
        }
    }
    out
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let a: HashSet<&String> = a.iter().collect();
    let b: HashSet<&String> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    }
}

pub fn overlap<T: std::hash::Hash + Eq>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let m = a.len().min(b.len());
    if m == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / m as f64
    }
}

pub fn spatiotemporal(q: &RetrievalQuery, n: &ConceptNode) -> f64 {
    let sq: HashSet<&String> = q.spatial.iter().collect();
    let sm: HashSet<&String> = n.spatial.iter().collect();
    overlap(&sq, &sm) * overlap(&minute_set(&q.temporal), &minute_set(&n.temporal))
}

pub fn semantic(a: &[f32], b: &[f32]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2)).sum::<f64>().sqrt();
    (1.0 - d / 2.0).clamp(0.0, 1.0)
}

pub fn recency(q: &RetrievalQuery, n: &ConceptNode, lambda: f64) -> f64 {
    let reference = n.created_at.max(n.last_access);
    let days = ((q.now - reference).num_seconds() as f64 / 86_400.0).max(0.0);
    lambda.powf(days)
}

pub fn full_score(q: &RetrievalQuery, n: &ConceptNode, w: &RetrievalWeights) -> f64 {
    let base = w.delta * recency(q, n, w.lambda) + w.gamma * n.importance;
    [
        (w.w_keyword, jaccard(&q.keywords, &n.keywords)),
        (w.w_semantic, semantic(&q.embedding, &n.embedding)),
        (w.w_spatiotemporal, spatiotemporal(q, n)),
    ]
    .iter()
    .map(|(wr, m)| (wr * m + base) / (wr + w.delta + w.gamma))
    .fold(f64::NEG_INFINITY, f64::max)
}

/// Full scan, sort by score desc, newer first, then smaller id; keep top_k.
pub fn oracle_retrieve(nodes: &[ConceptNode], q: &RetrievalQuery, w: &RetrievalWeights) -> Vec<(u64, f64)> {
    let mut scored: Vec<(&ConceptNode, f64)> = nodes.iter().map(|n| (n, full_score(q, n, w))).collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap().then(b.0.created_at.cmp(&a.0.created_at)).then(a.0.id.cmp(&b.0.id))
    });
    scored.into_iter().take(w.top_k).map(|(n, s)| (n.id, s)).collect()
}

// ---------------------------------------------------------------- routing

/// Every node-simple path by DFS over raw link endpoints; min by (cost, link ids).
pub fn oracle_shortest(g: &NetworkGraph, o: usize, d: usize, mode: TravelMode) -> Option<(u64, Vec<String>)> {
    if o == d {
        return Some((0, Vec::new()));
    }
    let mut out: Vec<(u64, Vec<String>)> = Vec::new();
    let mut seen = vec![false; g.nodes().len()];
    seen[o] = true;
    fn dfs(g: &NetworkGraph, at: usize, d: usize, mode: TravelMode, seen: &mut [bool], path: &mut Vec<String>, cost: u64, out: &mut Vec<(u64, Vec<String>)>) {
        if at == d {
            out.push((cost, path.clone()));
            return;
        }
        for (li, l) in g.links().iter().enumerate() {
            let (a, b) = g.link_ends(li);
            let next = if a == at {
                b
            } else if b == at && matches!(l.kind, LinkKind::Road | LinkKind::Walk | LinkKind::Transit) {
                a
            } else {
                continue;
            };
            if seen[next] {
                continue;
            }
            let Some(c) = g.traversal_time(li, mode) else { continue };
            seen[next] = true;
            path.push(l.id.clone());
            dfs(g, next, d, mode, seen, path, cost + u64::from(c), out);
            path.pop();
            seen[next] = false;
        }
    }
    dfs(g, o, d, mode, &mut seen, &mut Vec::new(), 0, &mut out);
    out.into_iter().min()
}

// ---------------------------------------------------------------- point queue

/// Ring of `n` nodes plus random chords, all two-way road links.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize) -> NetworkGraph {
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node { id: format!("N{i:02}"), position: [i as f64, (i * i % 7) as f64], facility_id: None })
        .collect();
    let mut links = Vec::new();
    let mut pairs = BTreeSet::new();
    let mut add = |a: usize, b: usize, rng: &mut ChaCha8Rng, links: &mut Vec<Link>| {
        if a == b || !pairs.insert((a.min(b), a.max(b))) {
            return;
        }
        links.push(Link {
            id: format!("L{:02}", links.len()),
            kind: LinkKind::Road,
            from: format!("N{a:02}"),
            to: format!("N{b:02}"),
            free_flow_time: rng.random_range(1..=5),
            capacity: Some(rng.random_range(1..=3)),
            line_id: None,
        });
    };
    for i in 0..n {
        add(i, (i + 1) % n, rng, &mut links);
    }
    for _ in 0..rng.random_range(0..=n) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        add(a, b, rng, &mut links);
    }
    let doc = NetworkDocument { name: "random".into(), walk_multiplier: 4, nodes, links, facilities: Vec::new(), transit_lines: Vec::new() };
    NetworkGraph::from_document(doc).expect("ring networks are connected")
}

pub struct Trip {
    pub id: u64,
    pub origin: usize,
    pub links: Vec<usize>,
    pub depart: u32,
}

pub fn random_trips(rng: &mut ChaCha8Rng, g: &NetworkGraph, count: usize) -> Vec<Trip> {
    let n = g.nodes().len();
    (0..count as u64)
        .map(|id| {
            let origin = rng.random_range(0..n);
            let dest = rng.random_range(0..n);
            let p = civitas_core::net::shortest_path_between(g, origin, dest, TravelMode::Drive, &Default::default()).unwrap();
            let links = p.links.iter().map(|l| g.link_idx(l).unwrap()).collect();
            Trip { id, origin, links, depart: rng.random_range(0..40) }
        })
        .collect()
}

/// Runs `trips` for `ticks` minutes and checks conservation, capacity, FIFO and (when
/// `free_flow`) exact free-flow travel times. Returns the final state for determinism
/// checks.
pub fn check_point_queue(g: &NetworkGraph, trips: &[Trip], ticks: u32, free_flow: bool) -> Result<TrafficState, String> {
    let mut st = TrafficState::new(g);
    let total = trips.len();
    let mut pending: usize = total;
    let mut arrived: BTreeMap<u64, u32> = BTreeMap::new();
    // (node, link) -> entries as (queued_at, entered)
    let mut entries: BTreeMap<(usize, usize), Vec<(u32, u32, u64)>> = BTreeMap::new();
    for tick in 0..ticks {
        for t in trips.iter().filter(|t| t.depart == tick) {
            st.depart(g, t.id, t.origin, &t.links, TravelMode::Drive).map_err(|e| e.to_string())?;
            pending -= 1;
        }
        let node_before: BTreeMap<u64, usize> = st
            .token_ids()
            .map(|id| {
                let node = match st.place(id).unwrap() {
                    civitas_core::net::TokenPlace::Queued { node, .. } => node,
                    civitas_core::net::TokenPlace::OnLink { toward, .. } => toward,
                };
                (id, node)
            })
            .collect();
        st.step(g);
        for e in st.drain_entries() {
            let node = node_before[&e.token];
            entries.entry((node, e.link)).or_default().push((e.queued_at, e.tick, e.token));
        }
        for a in st.drain_arrivals() {
            arrived.insert(a.token, a.tick - a.departed);
        }
        let live = st.token_count();
        if pending + live + arrived.len() != total {
            return Err(format!("tick {tick}: conservation {pending} + {live} + {} != {total}", arrived.len()));
        }
        if st.queued_count() + st.on_link_count() != live {
            return Err(format!("tick {tick}: token in two places or none"));
        }
        for li in g.road_link_indices() {
            let cap = st.effective_capacity(li).unwrap() as usize;
            if st.occupancy(li) > cap {
                return Err(format!("tick {tick}: link {} holds {} > {cap}", g.link(li).id, st.occupancy(li)));
            }
        }
    }
    for ((node, link), es) in &entries {
        for a in es {
            for b in es {
                if a.0 < b.0 && a.1 > b.1 {
                    return Err(format!("FIFO broken at node {node} link {link}: {a:?} overtaken by {b:?}"));
                }
            }
        }
    }
    for t in trips {
        let Some(&took) = arrived.get(&t.id) else { continue };
        let ff: u32 = t.links.iter().map(|&l| g.link(l).free_flow_time).sum();
        if free_flow && took != ff {
            return Err(format!("trip {} took {took} min, free flow {ff}", t.id));
        }
        if took < ff {
            return Err(format!("trip {} beat free flow: {took} < {ff}", t.id));
        }
    }
    if free_flow && arrived.len() != total {
        return Err(format!("free-flow run left {} trips unfinished", total - arrived.len()));
    }
    Ok(st)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- binomial

fn choose(n: u64, k: u64) -> BigUint {
    let mut c = BigUint::one();
    for i in 0..k {
        c = c * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    c
}

/// P(X >= k), X ~ Bin(n, num/den), as an exact rational sum rounded once at the end.
pub fn exact_upper_tail(k: u64, n: u64, num: u64, den: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut sum = BigUint::zero();
    for i in k..=n {
        sum += choose(n, i) * BigUint::from(num).pow(i as u32) * BigUint::from(den - num).pow((n - i) as u32);
    }
    let total = BigUint::from(den).pow(n as u32);
    sum.to_f64().unwrap() / total.to_f64().unwrap()
}

// ---------------------------------------------------------------- plans

pub const REASONING_PLAN: &str = r#"[["Midtown apartment", "06:00", "20", "none", "none", "Morning at home."],
    ["Office", "07:15", "none", "drive", "Ave_2, St_5", "Commute to work."],
    ["Museum", "12:00", "none", "drive", "shortest", "Museum visit with a friend."],
    ["Office", "13:00", "120", "drive", "shortest", "Back to work."],
    ["Midtown apartment", "19:30", "none", "drive", "shortest", "Home for the evening."]]"#;

pub const VEHICLE_PLAN: &str = r#"[["Midtown apartment", "06:15", 20, "none", "none", "Morning at home."],
    ["Factory", "06:45", 120, "transit", "Metro_2_link_1, Metro_2_link_2, Metro_2_link_3", "Metro to the factory shift."],
    ["Supermarket", "17:10", 20, "drive", "shortest", "Grocery run by car."],
    ["Gym", "17:30", 60, "transit", "Metro_1_link_1, Metro_1_link_2, Metro_1_link_3, Metro_1_link_4", "Metro to the gym."],
    ["Midtown apartment", "19:00", "none", "transit", "Metro_1_link_4, Metro_1_link_3, Metro_1_link_2, Metro_1_link_1", "Metro home."]]"#;

/// A licensed driver living at `home`.
pub fn driver(home: &str) -> civitas_core::cognition::AgentProfile {
    let mut a = civitas_core::cognition::Population::bundled().agents.into_iter().find(|a| a.licensed_driver).unwrap();
    a.home_facility = home.into();
    a
}

/// Named fixture plans with the violation each must raise (`None` for the clean plan).
pub fn plan_corpus() -> Vec<(&'static str, civitas_core::cognition::ActivityPlan, Option<civitas_core::cognition::ViolationCode>)> {
    use civitas_core::cognition::{ActivityPlan, PathSpec, ViolationCode};
    let clean = ActivityPlan::from_json(REASONING_PLAN).unwrap();
    let mut no_home = clean.clone();
    no_home.entries.pop();
    let mut bad_path = clean.clone();
    bad_path.entries[1].path = PathSpec::parse("Ave_4_link_1, St_4_link_2");
    vec![
        ("clean", clean, None),
        ("inconsistent vehicle usage", ActivityPlan::from_json(VEHICLE_PLAN).unwrap(), Some(ViolationCode::VehicleInconsistent)),
        ("missing home return", no_home, Some(ViolationCode::NotHomeFinal)),
        ("invalid path", bad_path, Some(ViolationCode::PathInvalid)),
    ]
}

// ---------------------------------------------------------------- random stores

const STORE_WORDS: &[&str] = &["metro", "delay", "morning", "office", "queue", "coffee", "late", "park", "lunch", "exhibition"];
const STORE_LINKS: &[&str] = &["Ave_2_link_2", "St_1_link_1", "St_4_link_2", "Metro_1_link_1", "Ave_4_link_1"];

fn pick<'a>(rng: &mut ChaCha8Rng, from: &[&'a str], lo: usize, hi: usize) -> Vec<&'a str> {
    (0..rng.random_range(lo..hi)).map(|_| from[rng.random_range(0..from.len())]).collect()
}

fn random_scope(rng: &mut ChaCha8Rng) -> TimeScope {
    if rng.random_bool(0.5) {
        TimeScope::span(t0() + chrono::Duration::minutes(rng.random_range(0..24 * 60)), rng.random_range(1..180))
    } else {
        TimeScope::empty()
    }
}

/// A store of up to `max` nodes over a small vocabulary (so ties occur) and a query
/// against it.
pub fn random_store(rng: &mut ChaCha8Rng, max: usize) -> (civitas_core::memory::MemoryStore, RetrievalQuery) {
    use civitas_core::memory::{ConceptKind, HashEmbedder, MemoryStore, NewConcept};
    let e = HashEmbedder::default();
    let mut s = MemoryStore::new("random");
    for _ in 0..rng.random_range(0..=max) {
        let kind = [ConceptKind::Event, ConceptKind::Chat, ConceptKind::Thought][rng.random_range(0..3)];
        let text = pick(rng, STORE_WORDS, 1, 4).join(" ");
        let importance = f64::from(rng.random_range(0u8..=10)) / 10.0;
        let created = t0() + chrono::Duration::hours(4 * rng.random_range(0..6));
        let c = NewConcept::new(kind, text, importance, created).spatial(pick(rng, STORE_LINKS, 0, 3)).temporal(random_scope(rng));
        s.add(c, &e).unwrap();
    }
    let text = pick(rng, STORE_WORDS, 1, 4).join(" ");
    let spatial = pick(rng, STORE_LINKS, 0, 3).into_iter().map(String::from).collect();
    let now = t0() + chrono::Duration::hours(rng.random_range(24..24 * 40));
    let q = RetrievalQuery::from_text(&text, &e, spatial, random_scope(rng), now);
    (s, q)
}
