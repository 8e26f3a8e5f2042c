use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{LinkKind, NetError, NetworkGraph, TravelMode};

pub type TokenId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Leg {
    link: usize,
    to: usize,
}

/// Where a traveling token currently is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum TokenPlace {
    Queued { node: usize, link: usize, since: u32 },
    OnLink { link: usize, entered: u32, toward: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Token {
    mode: TravelMode,
    origin: usize,
    departed: u32,
    place: TokenPlace,
    /// Legs after the current one.
    legs: VecDeque<Leg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Occupant {
    token: TokenId,
    entered: u32,
    traverse: u32,
    constrained: bool,
    toward: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
struct QueueKey {
    node: usize,
    link: usize,
    pedestrian: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Waiting {
    token: TokenId,
    since: u32,
    toward: usize,
}

/// Emitted when a token enters a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub token: TokenId,
    pub link: usize,
    pub tick: u32,
    pub queued_at: u32,
}

impl LinkEntry {
    pub fn wait(&self) -> u32 {
        self.tick - self.queued_at
    }
}

/// Emitted when a token reaches the end of its path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub token: TokenId,
    pub node: usize,
    pub origin: usize,
    pub departed: u32,
    pub tick: u32,
    pub mode: TravelMode,
}

/// Point-queue network state: per-link occupants and per-node FIFO entry queues.
///
/// Only drive tokens count against road capacity. Walkers on road links and transit
/// riders use their own queues and are never held back (unless a transit capacity is set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficState {
    tick: u32,
    base_capacity: Vec<Option<u32>>,
    link_kind: Vec<LinkKind>,
    capacity_override: BTreeMap<usize, u32>,
    transit_capacity: Option<u32>,
    tokens: BTreeMap<TokenId, Token>,
    occupants: Vec<Vec<Occupant>>,
    #[serde(with = "queue_map")]
    queues: BTreeMap<QueueKey, VecDeque<Waiting>>,
    entries: Vec<LinkEntry>,
    arrivals: Vec<Arrival>,
}

mod queue_map {
    use super::{QueueKey, Waiting};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::{BTreeMap, VecDeque};

    pub fn serialize<S: Serializer>(m: &BTreeMap<QueueKey, VecDeque<Waiting>>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<_> = m.iter().collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<QueueKey, VecDeque<Waiting>>, D::Error> {
        let v: Vec<(QueueKey, VecDeque<Waiting>)> = Vec::deserialize(d)?;
        Ok(v.into_iter().collect())
    }
}

impl TrafficState {
    pub fn new(graph: &NetworkGraph) -> Self {
        TrafficState {
            tick: 0,
            base_capacity: graph.links().iter().enumerate().map(|(i, _)| graph.capacity(i)).collect(),
            link_kind: graph.links().iter().map(|l| l.kind).collect(),
            capacity_override: BTreeMap::new(),
            transit_capacity: None,
            tokens: BTreeMap::new(),
            occupants: vec![Vec::new(); graph.links().len()],
            queues: BTreeMap::new(),
            entries: Vec::new(),
            arrivals: Vec::new(),
        }
    }

    pub fn tick(&self) -> u32 {
        self.tick
    }

    pub fn set_tick(&mut self, tick: u32) {
        self.tick = tick;
    }

    /// Caps concurrent riders per transit link; `None` leaves transit unbounded.
    pub fn set_transit_capacity(&mut self, cap: Option<u32>) {
        self.transit_capacity = cap.map(|c| c.max(1));
    }

    pub fn base_capacity(&self, link: usize) -> Option<u32> {
        self.base_capacity[link]
    }

    /// Capacity currently in force for constrained tokens on `link`.
    pub fn effective_capacity(&self, link: usize) -> Option<u32> {
        match self.link_kind[link] {
            LinkKind::Road => self.capacity_override.get(&link).copied().or(self.base_capacity[link]),
            LinkKind::Transit => self.transit_capacity,
            _ => None,
        }
    }

    /// Temporarily replaces a road link's capacity; `None` restores the base value.
    pub fn set_capacity_override(&mut self, link: usize, cap: Option<u32>) {
        match cap {
            Some(c) => {
                self.capacity_override.insert(link, c.max(1));
            }
            None => {
                self.capacity_override.remove(&link);
            }
        }
    }

    pub fn capacity_overrides(&self) -> &BTreeMap<usize, u32> {
        &self.capacity_override
    }

    fn constrained(&self, link: usize, mode: TravelMode) -> bool {
        match self.link_kind[link] {
            LinkKind::Road => mode == TravelMode::Drive,
            LinkKind::Transit => self.transit_capacity.is_some(),
            _ => false,
        }
    }

    /// Number of tokens in queues or on links.
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.tokens.contains_key(&id)
    }

    pub fn place(&self, id: TokenId) -> Option<TokenPlace> {
        self.tokens.get(&id).map(|t| t.place)
    }

    pub fn token_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.tokens.keys().copied()
    }

    /// Current link (queued for or on) followed by the remaining legs.
    pub fn remaining_links(&self, id: TokenId) -> Vec<usize> {
        let Some(t) = self.tokens.get(&id) else {
            return Vec::new();
        };
        let cur = match t.place {
            TokenPlace::Queued { link, .. } | TokenPlace::OnLink { link, .. } => link,
        };
        std::iter::once(cur).chain(t.legs.iter().map(|l| l.link)).collect()
    }

    /// Vehicles currently on `link`.
    pub fn occupancy(&self, link: usize) -> usize {
        self.occupants[link].iter().filter(|o| o.constrained).count()
    }

    /// Every token on `link`, vehicles or not.
    pub fn on_link(&self, link: usize) -> usize {
        self.occupants[link].len()
    }

    /// Constrained tokens waiting to enter `link` at either end.
    pub fn queue_len(&self, link: usize) -> usize {
        self.queues.iter().filter(|(k, _)| k.link == link && !k.pedestrian).map(|(_, q)| q.len()).sum()
    }

    /// Starts a trip of `mode` from `origin` along `links`. An empty path arrives immediately.
    pub fn depart(
        &mut self,
        graph: &NetworkGraph,
        id: TokenId,
        origin: usize,
        links: &[usize],
        mode: TravelMode,
    ) -> Result<(), NetError> {
        if self.tokens.contains_key(&id) {
            return Err(NetError::InvalidPath(format!("token {id} is already travelling")));
        }
        let legs = build_legs(graph, origin, links, mode)?;
        if legs.is_empty() {
            self.arrivals.push(Arrival { token: id, node: origin, origin, departed: self.tick, tick: self.tick, mode });
            return Ok(());
        }
        let mut legs: VecDeque<Leg> = legs.into();
        let first = legs.pop_front().unwrap();
        self.tokens.insert(
            id,
            Token {
                mode,
                origin,
                departed: self.tick,
                place: TokenPlace::Queued { node: origin, link: first.link, since: self.tick },
                legs,
            },
        );
        self.enqueue(origin, first, id, mode, self.tick);
        Ok(())
    }

    fn enqueue(&mut self, node: usize, leg: Leg, id: TokenId, mode: TravelMode, since: u32) {
        let key = QueueKey { node, link: leg.link, pedestrian: !self.constrained(leg.link, mode) };
        self.queues.entry(key).or_default().push_back(Waiting { token: id, since, toward: leg.to });
    }

    fn dequeue(&mut self, id: TokenId, node: usize, link: usize) {
        let keys: Vec<QueueKey> = self.queues.keys().filter(|k| k.node == node && k.link == link).copied().collect();
        for k in keys {
            if let Some(q) = self.queues.get_mut(&k) {
                q.retain(|w| w.token != id);
                if q.is_empty() {
                    self.queues.remove(&k);
                }
            }
        }
    }

    /// Node from which a new path for `id` must start: the queue node, or the far end of
    /// the link being traversed.
    pub fn decision_node(&self, id: TokenId) -> Option<usize> {
        self.tokens.get(&id).map(|t| match t.place {
            TokenPlace::Queued { node, .. } => node,
            TokenPlace::OnLink { toward, .. } => toward,
        })
    }

    /// Replaces the not-yet-entered part of a token's path with `links`, which must start
    /// at [`Self::decision_node`]. A queued token keeps its waiting time.
    pub fn reroute(&mut self, graph: &NetworkGraph, id: TokenId, links: &[usize]) -> Result<(), NetError> {
        let t = self.tokens.get(&id).ok_or_else(|| NetError::InvalidPath(format!("token {id} is not travelling")))?;
        let mode = t.mode;
        let place = t.place;
        let start = self.decision_node(id).unwrap();
        let legs = build_legs(graph, start, links, mode)?;
        match place {
            TokenPlace::OnLink { .. } => {
                self.tokens.get_mut(&id).unwrap().legs = legs.into();
            }
            TokenPlace::Queued { node, link, since } => {
                if legs.is_empty() {
                    // Already at the destination node.
                    self.dequeue(id, node, link);
                    let t = self.tokens.remove(&id).unwrap();
                    self.arrivals.push(Arrival {
                        token: id,
                        node,
                        origin: t.origin,
                        departed: t.departed,
                        tick: self.tick,
                        mode,
                    });
                    return Ok(());
                }
                let mut legs: VecDeque<Leg> = legs.into();
                let first = legs.pop_front().unwrap();
                if first.link != link {
                    self.dequeue(id, node, link);
                    self.enqueue(node, first, id, mode, since);
                }
                let t = self.tokens.get_mut(&id).unwrap();
                t.place = TokenPlace::Queued { node, link: first.link, since };
                t.legs = legs;
            }
        }
        Ok(())
    }

    /// Removes a token wherever it is. Returns false when it was not travelling.
    pub fn remove(&mut self, id: TokenId) -> bool {
        let Some(t) = self.tokens.remove(&id) else {
            return false;
        };
        match t.place {
            TokenPlace::Queued { node, link, .. } => self.dequeue(id, node, link),
            TokenPlace::OnLink { link, .. } => self.occupants[link].retain(|o| o.token != id),
        }
        true
    }

    /// Advances one minute: exits first, then queue heads enter while capacity allows.
    pub fn step(&mut self, graph: &NetworkGraph) {
        let now = self.tick;
        // Exits, in link order then entry order.
        let mut exiting = Vec::new();
        for (link, occ) in self.occupants.iter_mut().enumerate() {
            let mut i = 0;
            while i < occ.len() {
                if now.saturating_sub(occ[i].entered) >= occ[i].traverse {
                    exiting.push((link, occ.remove(i)));
                } else {
                    i += 1;
                }
            }
        }
        for (_, o) in exiting {
            let t = self.tokens.get_mut(&o.token).expect("occupant has a token");
            match t.legs.pop_front() {
                None => {
                    let t = self.tokens.remove(&o.token).unwrap();
                    self.arrivals.push(Arrival {
                        token: o.token,
                        node: o.toward,
                        origin: t.origin,
                        departed: t.departed,
                        tick: now,
                        mode: t.mode,
                    });
                }
                Some(next) => {
                    t.place = TokenPlace::Queued { node: o.toward, link: next.link, since: now };
                    let mode = t.mode;
                    self.enqueue(o.toward, next, o.token, mode, now);
                }
            }
        }

        // Entries, in queue-key order, FIFO within each queue.
        let keys: Vec<QueueKey> = self.queues.keys().copied().collect();
        for key in keys {
            while let Some(head) = self.queues.get(&key).and_then(|q| q.front()).copied() {
                if !key.pedestrian {
                    if let Some(cap) = self.effective_capacity(key.link) {
                        if self.occupancy_constrained(key.link) >= cap as usize {
                            break;
                        }
                    }
                }
                let q = self.queues.get_mut(&key).unwrap();
                q.pop_front();
                if q.is_empty() {
                    self.queues.remove(&key);
                }
                let t = self.tokens.get_mut(&head.token).expect("queued token exists");
                let traverse = graph.traversal_time(key.link, t.mode).unwrap_or(1).max(1);
                t.place = TokenPlace::OnLink { link: key.link, entered: now, toward: head.toward };
                self.occupants[key.link].push(Occupant {
                    token: head.token,
                    entered: now,
                    traverse,
                    constrained: !key.pedestrian,
                    toward: head.toward,
                });
                self.entries.push(LinkEntry { token: head.token, link: key.link, tick: now, queued_at: head.since });
            }
        }
        self.tick += 1;
    }

    fn occupancy_constrained(&self, link: usize) -> usize {
        self.occupants[link].iter().filter(|o| o.constrained).count()
    }

    /// Minutes a vehicle joining the entry queue of `link` now would wait, given current
    /// occupants and everyone already queued for it.
    pub fn expected_wait(&self, graph: &NetworkGraph, link: usize) -> u32 {
        let Some(cap) = self.effective_capacity(link) else {
            return 0;
        };
        let cap = cap as usize;
        let now = self.tick;
        let mut heap: BinaryHeap<Reverse<u32>> = self.occupants[link]
            .iter()
            .filter(|o| o.constrained)
            .map(|o| Reverse(o.entered + o.traverse))
            .collect();
        let fft = graph.traversal_time(link, TravelMode::Drive).or(graph.traversal_time(link, TravelMode::Transit)).unwrap_or(1);
        let ahead = self.queue_len(link);
        let mut t = now;
        for _ in 0..=ahead {
            while heap.len() >= cap {
                let Reverse(e) = heap.pop().unwrap();
                t = t.max(e);
            }
            heap.push(Reverse(t + fft));
        }
        t - now
    }

    pub fn drain_entries(&mut self) -> Vec<LinkEntry> {
        std::mem::take(&mut self.entries)
    }

    pub fn drain_arrivals(&mut self) -> Vec<Arrival> {
        std::mem::take(&mut self.arrivals)
    }

    /// Tokens waiting at nodes, for invariant checks.
    pub fn queued_count(&self) -> usize {
        self.queues.values().map(|q| q.len()).sum()
    }

    /// Tokens on links, for invariant checks.
    pub fn on_link_count(&self) -> usize {
        self.occupants.iter().map(|o| o.len()).sum()
    }

    /// Ids queued at `node` for `link` in FIFO order (vehicles, then others).
    pub fn queue_order(&self, node: usize, link: usize) -> Vec<TokenId> {
        let mut out = Vec::new();
        for pedestrian in [false, true] {
            if let Some(q) = self.queues.get(&QueueKey { node, link, pedestrian }) {
                out.extend(q.iter().map(|w| w.token));
            }
        }
        out
    }
}

fn build_legs(graph: &NetworkGraph, origin: usize, links: &[usize], mode: TravelMode) -> Result<Vec<Leg>, NetError> {
    let mut at = origin;
    let mut legs = Vec::with_capacity(links.len());
    for &l in links {
        if l >= graph.links().len() {
            return Err(NetError::InvalidPath(format!("link index {l} out of range")));
        }
        if graph.traversal_time(l, mode).is_none() {
            return Err(NetError::InvalidPath(format!("link {} not usable in {mode} mode", graph.link(l).id)));
        }
        let to = graph
            .traverse(l, at)
            .ok_or_else(|| NetError::InvalidPath(format!("link {} does not continue from {}", graph.link(l).id, graph.node(at).id)))?;
        legs.push(Leg { link: l, to });
        at = to;
    }
    Ok(legs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(g: &NetworkGraph, id: &str) -> usize {
        g.link_idx(id).unwrap()
    }

    #[test]
    fn capacity_two_admits_two_per_tick() {
        let g = NetworkGraph::nguyen_dupuis();
        let mut s = TrafficState::new(&g);
        let origin = g.node_idx("Node_5").unwrap();
        let l = idx(&g, "Ave_2_link_2");
        for id in 0..3 {
            s.depart(&g, id, origin, &[l], TravelMode::Drive).unwrap();
        }
        s.step(&g);
        assert_eq!(s.occupancy(l), 2);
        assert_eq!(s.queue_len(l), 1);
        assert_eq!(s.queue_order(origin, l), vec![2]);
    }

    #[test]
    fn empty_state_is_fixed_point() {
        let g = NetworkGraph::nguyen_dupuis();
        let mut s = TrafficState::new(&g);
        let before = s.clone();
        s.step(&g);
        s.set_tick(0);
        assert_eq!(s, before);
    }

    #[test]
    fn single_token_arrives_after_free_flow_time() {
        let g = NetworkGraph::nguyen_dupuis();
        let mut s = TrafficState::new(&g);
        let l = idx(&g, "St_2_link_1");
        let origin = g.node_idx("Node_1").unwrap();
        s.depart(&g, 9, origin, &[l], TravelMode::Drive).unwrap();
        for _ in 0..6 {
            assert!(s.drain_arrivals().is_empty());
            s.step(&g);
        }
        s.step(&g);
        let arr = s.drain_arrivals();
        assert_eq!(arr.len(), 1);
        assert_eq!(arr[0].tick - arr[0].departed, 6);
        assert_eq!(arr[0].node, g.node_idx("Node_5").unwrap());
    }

    #[test]
    fn walkers_bypass_vehicle_capacity() {
        let g = NetworkGraph::nguyen_dupuis();
        let mut s = TrafficState::new(&g);
        let l = idx(&g, "Ave_2_link_2");
        let origin = g.node_idx("Node_5").unwrap();
        for id in 0..5 {
            s.depart(&g, id, origin, &[l], TravelMode::Walk).unwrap();
        }
        s.step(&g);
        assert_eq!(s.on_link(l), 5);
        assert_eq!(s.occupancy(l), 0);
    }

    #[test]
    fn expected_wait_counts_queue() {
        let g = NetworkGraph::nguyen_dupuis();
        let mut s = TrafficState::new(&g);
        let l = idx(&g, "Ave_2_link_2");
        let origin = g.node_idx("Node_5").unwrap();
        assert_eq!(s.expected_wait(&g, l), 0);
        for id in 0..2 {
            s.depart(&g, id, origin, &[l], TravelMode::Drive).unwrap();
        }
        s.step(&g);
        // Both slots busy until tick 5, so a newcomer at tick 1 waits 4.
        assert_eq!(s.expected_wait(&g, l), 4);
        s.depart(&g, 2, origin, &[l], TravelMode::Drive).unwrap();
        s.depart(&g, 3, origin, &[l], TravelMode::Drive).unwrap();
        // Two queued ahead take the slots freed at tick 5; next free at 10.
        assert_eq!(s.expected_wait(&g, l), 9);
    }

    #[test]
    fn reroute_while_queued_changes_link() {
        let g = NetworkGraph::nguyen_dupuis();
        let mut s = TrafficState::new(&g);
        let n5 = g.node_idx("Node_5").unwrap();
        let a = idx(&g, "Ave_2_link_2");
        let b = idx(&g, "St_2_link_2");
        for id in 0..3 {
            s.depart(&g, id, n5, &[a], TravelMode::Drive).unwrap();
        }
        s.step(&g);
        s.reroute(&g, 2, &[b]).unwrap();
        s.step(&g);
        assert_eq!(s.occupancy(b), 1);
        assert_eq!(s.queue_len(a), 0);
    }

    #[test]
    fn capacity_override_holds_new_entries() {
        let g = NetworkGraph::nguyen_dupuis();
        let mut s = TrafficState::new(&g);
        let l = idx(&g, "Ave_2_link_2");
        let n5 = g.node_idx("Node_5").unwrap();
        s.set_capacity_override(l, Some(1));
        for id in 0..2 {
            s.depart(&g, id, n5, &[l], TravelMode::Drive).unwrap();
        }
        s.step(&g);
        assert_eq!(s.occupancy(l), 1);
        s.set_capacity_override(l, None);
        s.step(&g);
        assert_eq!(s.occupancy(l), 2);
    }

    #[test]
    fn serde_roundtrip() {
        let g = NetworkGraph::nguyen_dupuis();
        let mut s = TrafficState::new(&g);
        let n5 = g.node_idx("Node_5").unwrap();
        for id in 0..3 {
            s.depart(&g, id, n5, &[idx(&g, "Ave_2_link_2")], TravelMode::Drive).unwrap();
        }
        s.step(&g);
        let text = serde_json::to_string(&s).unwrap();
        let back: TrafficState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
