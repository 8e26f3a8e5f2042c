use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::{NetError, NetworkGraph, TravelMode};

/// A routed path: link ids in travel order plus its cost in minutes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub links: Vec<String>,
    pub mode: TravelMode,
    pub cost: u64,
}

/// Optional extras for a routing query.
#[derive(Debug, Clone, Default)]
pub struct RouteOptions {
    /// Extra minutes added to a link's cost (expected entry-queue wait), keyed by link index.
    pub delays: BTreeMap<usize, u32>,
    /// Link indices that may not be used.
    pub avoid: BTreeSet<usize>,
    /// Restrict the search to these link indices when set.
    pub only: Option<BTreeSet<usize>>,
}

impl RouteOptions {
    fn link_cost(&self, graph: &NetworkGraph, link: usize, mode: TravelMode) -> Option<u64> {
        if self.avoid.contains(&link) || self.only.as_ref().is_some_and(|o| !o.contains(&link)) {
            return None;
        }
        let base = graph.traversal_time(link, mode)?;
        Some(u64::from(base) + u64::from(self.delays.get(&link).copied().unwrap_or(0)))
    }
}

/// Minimum-cost path between two facilities. See [`shortest_path_between`].
pub fn shortest_path(
    graph: &NetworkGraph,
    origin_facility: &str,
    dest_facility: &str,
    mode: TravelMode,
    opts: &RouteOptions,
) -> Result<Path, NetError> {
    let o = graph.facility_node(origin_facility)?;
    let d = graph.facility_node(dest_facility)?;
    shortest_path_between(graph, o, d, mode, opts)
}

/// Label-setting search whose labels are `(cost, link-id sequence)` compared
/// lexicographically, so equal-cost paths resolve to the smallest id sequence.
pub fn shortest_path_between(
    graph: &NetworkGraph,
    origin: usize,
    dest: usize,
    mode: TravelMode,
    opts: &RouteOptions,
) -> Result<Path, NetError> {
    if matches!(mode, TravelMode::None) {
        return Err(NetError::UnsupportedMode(mode));
    }
    if origin == dest {
        return Ok(Path { links: Vec::new(), mode, cost: 0 });
    }
    let n = graph.nodes().len();
    let mut best: Vec<Option<(u64, Vec<String>)>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[origin] = Some((0, Vec::new()));
    heap.push(Reverse((0u64, Vec::<String>::new(), origin)));

    while let Some(Reverse((cost, seq, node))) = heap.pop() {
        if settled[node] {
            continue;
        }
        settled[node] = true;
        if node == dest {
            return Ok(Path { links: seq, mode, cost });
        }
        for arc in graph.arcs(node) {
            if settled[arc.to] {
                continue;
            }
            let Some(c) = opts.link_cost(graph, arc.link, mode) else {
                continue;
            };
            let mut next = seq.clone();
            next.push(graph.link(arc.link).id.clone());
            let label = (cost + c, next);
            let improves = match &best[arc.to] {
                None => true,
                Some(cur) => label < *cur,
            };
            if improves {
                best[arc.to] = Some(label.clone());
                heap.push(Reverse((label.0, label.1, arc.to)));
            }
        }
    }
    Err(NetError::Unreachable {
        origin: graph.node(origin).id.clone(),
        dest: graph.node(dest).id.clone(),
        mode,
    })
}

/// Every node-simple path from `origin` to `dest` usable by `mode`, with its cost.
/// Exponential; intended for small graphs and test oracles.
pub fn enumerate_simple_paths(
    graph: &NetworkGraph,
    origin: usize,
    dest: usize,
    mode: TravelMode,
    opts: &RouteOptions,
) -> Vec<Path> {
    let mut out = Vec::new();
    let mut visited = vec![false; graph.nodes().len()];
    let mut stack = Vec::new();
    visited[origin] = true;
    dfs(graph, origin, dest, mode, opts, &mut visited, &mut stack, 0, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    graph: &NetworkGraph,
    at: usize,
    dest: usize,
    mode: TravelMode,
    opts: &RouteOptions,
    visited: &mut [bool],
    stack: &mut Vec<String>,
    cost: u64,
    out: &mut Vec<Path>,
) {
    if at == dest {
        out.push(Path { links: stack.clone(), mode, cost });
        return;
    }
    for arc in graph.arcs(at) {
        if visited[arc.to] {
            continue;
        }
        let Some(c) = opts.link_cost(graph, arc.link, mode) else {
            continue;
        };
        visited[arc.to] = true;
        stack.push(graph.link(arc.link).id.clone());
        dfs(graph, arc.to, dest, mode, opts, visited, stack, cost + c, out);
        stack.pop();
        visited[arc.to] = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::LinkKind;

    fn oracle(g: &NetworkGraph, o: usize, d: usize, mode: TravelMode, opts: &RouteOptions) -> Option<Path> {
        enumerate_simple_paths(g, o, d, mode, opts)
            .into_iter()
            .min_by(|a, b| (a.cost, &a.links).cmp(&(b.cost, &b.links)))
    }

    #[test]
    fn identity_route_is_empty() {
        let g = NetworkGraph::nguyen_dupuis();
        let p = shortest_path(&g, "Office", "Office", TravelMode::Drive, &RouteOptions::default()).unwrap();
        assert!(p.links.is_empty());
        assert_eq!(p.cost, 0);
    }

    #[test]
    fn apartments_drive_matches_enumeration() {
        let g = NetworkGraph::nguyen_dupuis();
        let opts = RouteOptions::default();
        let p = shortest_path(&g, "Uptown apartment", "Midtown apartment", TravelMode::Drive, &opts).unwrap();
        let o = g.facility_node("Uptown apartment").unwrap();
        let d = g.facility_node("Midtown apartment").unwrap();
        assert_eq!(Some(p), oracle(&g, o, d, TravelMode::Drive, &opts));
    }

    #[test]
    fn cross_line_transit_uses_both_lines() {
        let g = NetworkGraph::nguyen_dupuis();
        let p = shortest_path(&g, "Factory", "Uptown apartment", TravelMode::Transit, &RouteOptions::default()).unwrap();
        let kinds: Vec<_> = p.links.iter().map(|l| (g.link(g.link_idx(l).unwrap()).kind, l.clone())).collect();
        assert!(kinds.iter().any(|(k, _)| *k == LinkKind::Boarding));
        assert!(kinds.iter().any(|(k, _)| *k == LinkKind::Alighting));
        assert!(kinds.iter().any(|(k, l)| *k == LinkKind::Transit && l.starts_with("Metro_1")));
        assert!(kinds.iter().any(|(k, l)| *k == LinkKind::Transit && l.starts_with("Metro_2")));
        let o = g.facility_node("Factory").unwrap();
        let d = g.facility_node("Uptown apartment").unwrap();
        assert_eq!(Some(p), oracle(&g, o, d, TravelMode::Transit, &RouteOptions::default()));
    }

    #[test]
    fn delays_and_avoidance_shift_route() {
        let g = NetworkGraph::nguyen_dupuis();
        let base = shortest_path(&g, "Midtown apartment", "Office", TravelMode::Drive, &RouteOptions::default()).unwrap();
        let first = g.link_idx(&base.links[1]).unwrap();
        let mut opts = RouteOptions::default();
        opts.avoid.insert(first);
        let alt = shortest_path(&g, "Midtown apartment", "Office", TravelMode::Drive, &opts).unwrap();
        assert!(!alt.links.contains(&base.links[1]));
        assert!(alt.cost >= base.cost);
        let mut delayed = RouteOptions::default();
        delayed.delays.insert(first, 1000);
        let d = shortest_path(&g, "Midtown apartment", "Office", TravelMode::Drive, &delayed).unwrap();
        assert_eq!(d.links, alt.links);
    }

    #[test]
    fn drive_cannot_use_metro() {
        let g = NetworkGraph::nguyen_dupuis();
        let p = shortest_path(&g, "Factory", "Amusement park", TravelMode::Drive, &RouteOptions::default()).unwrap();
        assert!(p.links.iter().all(|l| g.link(g.link_idx(l).unwrap()).kind == LinkKind::Road));
    }
}
