use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Road,
    Walk,
    Transit,
    Boarding,
    Alighting,
}

impl LinkKind {
    /// Road, walk and transit links can be traversed in both directions; boarding and
    /// alighting links only from `from` to `to`.
    pub fn bidirectional(self) -> bool {
        matches!(self, LinkKind::Road | LinkKind::Walk | LinkKind::Transit)
    }
}

/// Travel mode of a path or plan leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TravelMode {
    Drive,
    Transit,
    Walk,
    #[default]
    None,
}

impl TravelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TravelMode::Drive => "drive",
            TravelMode::Transit => "transit",
            TravelMode::Walk => "walk",
            TravelMode::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "drive" | "car" => Some(TravelMode::Drive),
            "transit" | "metro" => Some(TravelMode::Transit),
            "walk" => Some(TravelMode::Walk),
            "none" | "" => Some(TravelMode::None),
            _ => None,
        }
    }
}

impl fmt::Display for TravelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub position: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facility_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub kind: LinkKind,
    pub from: String,
    pub to: String,
    /// Minutes; boarding links may omit it and inherit half the line headway.
    #[serde(default)]
    pub free_flow_time: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facility {
    pub id: String,
    pub name: String,
    pub node_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitLine {
    pub id: String,
    pub links: Vec<String>,
    #[serde(default = "default_headway")]
    pub headway: u32,
}

fn default_headway() -> u32 {
    10
}

fn default_walk_multiplier() -> u32 {
    4
}

/// On-disk network description (UTF-8 JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_walk_multiplier")]
    pub walk_multiplier: u32,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    #[serde(default)]
    pub facilities: Vec<Facility>,
    #[serde(default)]
    pub transit_lines: Vec<TransitLine>,
}

/// One traversable direction of a link out of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub link: usize,
    pub to: usize,
}

/// Validated multimodal network with index lookups.
///
/// Nodes, links, facilities and lines are held in canonical (id-sorted) order so that
/// indices are stable across loads of the same document.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    name: String,
    walk_multiplier: u32,
    nodes: Vec<Node>,
    links: Vec<Link>,
    facilities: Vec<Facility>,
    transit_lines: Vec<TransitLine>,
    node_index: BTreeMap<String, usize>,
    link_index: BTreeMap<String, usize>,
    facility_by_name: BTreeMap<String, usize>,
    link_ends: Vec<(usize, usize)>,
    adjacency: Vec<Vec<Arc>>,
}

impl NetworkGraph {
    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let doc: NetworkDocument = serde_json::from_str(text).map_err(|e| NetError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self, NetError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| NetError::Parse(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    /// The bundled 13-node Nguyen–Dupuis network with two metro lines.
    pub fn nguyen_dupuis() -> Self {
        Self::from_json(include_str!("../../data/nguyen_dupuis.json")).expect("bundled network is valid")
    }

    pub fn from_document(mut doc: NetworkDocument) -> Result<Self, NetError> {
        if doc.nodes.is_empty() {
            return Err(NetError::NoNodes);
        }
        doc.nodes.sort_by(|a, b| a.id.cmp(&b.id));
        doc.links.sort_by(|a, b| a.id.cmp(&b.id));
        doc.facilities.sort_by(|a, b| a.id.cmp(&b.id));
        doc.transit_lines.sort_by(|a, b| a.id.cmp(&b.id));

        let mut node_index = BTreeMap::new();
        for (i, n) in doc.nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(NetError::DuplicateId(n.id.clone()));
            }
        }
        let mut link_index = BTreeMap::new();
        for (i, l) in doc.links.iter().enumerate() {
            if node_index.contains_key(&l.id) || link_index.insert(l.id.clone(), i).is_some() {
                return Err(NetError::DuplicateId(l.id.clone()));
            }
        }

        let headways: BTreeMap<&str, u32> = doc.transit_lines.iter().map(|t| (t.id.as_str(), t.headway)).collect();
        let mut link_ends = Vec::with_capacity(doc.links.len());
        for l in doc.links.iter_mut() {
            let from = *node_index
                .get(&l.from)
                .ok_or_else(|| NetError::DanglingReference { owner: l.id.clone(), target: l.from.clone() })?;
            let to = *node_index
                .get(&l.to)
                .ok_or_else(|| NetError::DanglingReference { owner: l.id.clone(), target: l.to.clone() })?;
            if l.kind == LinkKind::Boarding && l.free_flow_time == 0 {
                let line = l.line_id.as_deref().unwrap_or_default();
                let h = headways.get(line).copied().unwrap_or_else(default_headway);
                l.free_flow_time = h.div_ceil(2).max(1);
            }
            if l.free_flow_time == 0 {
                return Err(NetError::InvalidLink { link: l.id.clone(), reason: "free_flow_time must be positive".into() });
            }
            match l.kind {
                LinkKind::Road => {
                    if l.capacity.is_some_and(|c| c < 1) {
                        return Err(NetError::InvalidLink { link: l.id.clone(), reason: "road capacity must be >= 1".into() });
                    }
                }
                _ => l.capacity = None,
            }
            link_ends.push((from, to));
        }

        let mut facility_by_name = BTreeMap::new();
        let mut facility_ids = BTreeSet::new();
        for (i, f) in doc.facilities.iter().enumerate() {
            if !facility_ids.insert(f.id.clone()) {
                return Err(NetError::DuplicateId(f.id.clone()));
            }
            if facility_by_name.insert(f.name.clone(), i).is_some() {
                return Err(NetError::DuplicateId(f.name.clone()));
            }
            if !node_index.contains_key(&f.node_id) {
                return Err(NetError::FacilityWithoutNode(f.name.clone()));
            }
        }
        for n in &doc.nodes {
            if let Some(fid) = &n.facility_id {
                let ok = doc.facilities.iter().any(|f| &f.id == fid && f.node_id == n.id);
                if !ok {
                    return Err(NetError::DanglingReference { owner: n.id.clone(), target: fid.clone() });
                }
            }
        }

        // Transit lines: links exist, are transit links, and chain end to end.
        for line in &doc.transit_lines {
            let mut prev_end: Option<usize> = None;
            for lid in &line.links {
                let li = *link_index
                    .get(lid)
                    .ok_or_else(|| NetError::DanglingReference { owner: line.id.clone(), target: lid.clone() })?;
                if doc.links[li].kind != LinkKind::Transit {
                    return Err(NetError::DiscontiguousLine(line.id.clone()));
                }
                let (a, b) = link_ends[li];
                if let Some(p) = prev_end {
                    if p != a {
                        return Err(NetError::DiscontiguousLine(line.id.clone()));
                    }
                }
                prev_end = Some(b);
            }
        }

        let mut adjacency = vec![Vec::new(); doc.nodes.len()];
        for (li, l) in doc.links.iter().enumerate() {
            let (a, b) = link_ends[li];
            adjacency[a].push(Arc { link: li, to: b });
            if l.kind.bidirectional() {
                adjacency[b].push(Arc { link: li, to: a });
            }
        }

        let graph = NetworkGraph {
            name: doc.name,
            walk_multiplier: doc.walk_multiplier.max(1),
            nodes: doc.nodes,
            links: doc.links,
            facilities: doc.facilities,
            transit_lines: doc.transit_lines,
            node_index,
            link_index,
            facility_by_name,
            link_ends,
            adjacency,
        };
        graph.check_street_connectivity()?;
        Ok(graph)
    }

    fn check_street_connectivity(&self) -> Result<(), NetError> {
        // Street nodes are those touched by road or walk links (or hosting a facility).
        let mut street: BTreeSet<usize> = BTreeSet::new();
        for (li, l) in self.links.iter().enumerate() {
            if matches!(l.kind, LinkKind::Road | LinkKind::Walk) {
                street.insert(self.link_ends[li].0);
                street.insert(self.link_ends[li].1);
            }
        }
        for f in &self.facilities {
            street.insert(self.node_index[&f.node_id]);
        }
        let Some(&start) = street.iter().next() else {
            return Ok(());
        };
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            for arc in &self.adjacency[n] {
                if matches!(self.links[arc.link].kind, LinkKind::Road | LinkKind::Walk) && seen.insert(arc.to) {
                    stack.push(arc.to);
                }
            }
        }
        if let Some(missing) = street.iter().find(|n| !seen.contains(n)) {
            return Err(NetError::Disconnected(self.nodes[*missing].id.clone()));
        }
        Ok(())
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            name: self.name.clone(),
            walk_multiplier: self.walk_multiplier,
            nodes: self.nodes.clone(),
            links: self.links.clone(),
            facilities: self.facilities.clone(),
            transit_lines: self.transit_lines.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn walk_multiplier(&self) -> u32 {
        self.walk_multiplier
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn facilities(&self) -> &[Facility] {
        &self.facilities
    }

    pub fn transit_lines(&self) -> &[TransitLine] {
        &self.transit_lines
    }

    pub fn node_idx(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn link_idx(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub fn link(&self, idx: usize) -> &Link {
        &self.links[idx]
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn link_ends(&self, idx: usize) -> (usize, usize) {
        self.link_ends[idx]
    }

    pub fn arcs(&self, node: usize) -> &[Arc] {
        &self.adjacency[node]
    }

    pub fn facility(&self, name: &str) -> Option<&Facility> {
        self.facility_by_name.get(name).map(|&i| &self.facilities[i])
    }

    pub fn facility_node(&self, name: &str) -> Result<usize, NetError> {
        let f = self.facility(name).ok_or_else(|| NetError::UnknownFacility(name.to_string()))?;
        Ok(self.node_index[&f.node_id])
    }

    /// Facility hosted at a node, if any.
    pub fn facility_at(&self, node: usize) -> Option<&Facility> {
        let id = &self.nodes[node].id;
        self.facilities.iter().find(|f| &f.node_id == id)
    }

    pub fn road_link_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.links.iter().enumerate().filter(|(_, l)| l.kind == LinkKind::Road).map(|(i, _)| i)
    }

    /// Node reached when traversing `link` from `from`, if that direction is allowed.
    pub fn traverse(&self, link: usize, from: usize) -> Option<usize> {
        let (a, b) = self.link_ends[link];
        if from == a {
            Some(b)
        } else if from == b && self.links[link].kind.bidirectional() {
            Some(a)
        } else {
            None
        }
    }

    /// Minutes to traverse `link` in `mode`, or `None` if the mode may not use it.
    pub fn traversal_time(&self, link: usize, mode: TravelMode) -> Option<u32> {
        let l = &self.links[link];
        match (mode, l.kind) {
            (TravelMode::Drive, LinkKind::Road) => Some(l.free_flow_time),
            (TravelMode::Walk | TravelMode::Transit, LinkKind::Road) => Some(l.free_flow_time * self.walk_multiplier),
            (TravelMode::Walk | TravelMode::Transit, LinkKind::Walk) => Some(l.free_flow_time),
            (TravelMode::Transit, LinkKind::Boarding | LinkKind::Transit | LinkKind::Alighting) => Some(l.free_flow_time),
            _ => None,
        }
    }

    /// Effective vehicle capacity of a link (road links only).
    pub fn capacity(&self, link: usize) -> Option<u32> {
        let l = &self.links[link];
        if l.kind == LinkKind::Road {
            l.capacity
        } else {
            None
        }
    }

    /// Returns a copy of the graph with every road capacity replaced.
    pub fn with_road_capacity(&self, capacity: u32) -> Self {
        let mut g = self.clone();
        for l in g.links.iter_mut().filter(|l| l.kind == LinkKind::Road) {
            l.capacity = Some(capacity.max(1));
        }
        g
    }

    /// Resolves a link-id sequence starting at `origin` into the visited node sequence,
    /// checking every link is usable by `mode` and adjacent to the previous one.
    pub fn walk_path(&self, origin: usize, links: &[String], mode: TravelMode) -> Result<Vec<usize>, NetError> {
        let mut at = origin;
        let mut nodes = vec![origin];
        for lid in links {
            let li = self.link_idx(lid).ok_or_else(|| NetError::InvalidPath(format!("unknown link {lid}")))?;
            if self.traversal_time(li, mode).is_none() {
                return Err(NetError::InvalidPath(format!("link {lid} not usable in {mode} mode")));
            }
            at = self
                .traverse(li, at)
                .ok_or_else(|| NetError::InvalidPath(format!("link {lid} does not continue from {}", self.nodes[at].id)))?;
            nodes.push(at);
        }
        Ok(nodes)
    }

    /// Checks that `links` is a valid `mode` path from `origin` to `dest`.
    pub fn validate_path(&self, origin: usize, dest: usize, links: &[String], mode: TravelMode) -> Result<(), NetError> {
        let nodes = self.walk_path(origin, links, mode)?;
        if *nodes.last().unwrap() != dest {
            return Err(NetError::InvalidPath(format!(
                "path ends at {} instead of {}",
                self.nodes[*nodes.last().unwrap()].id,
                self.nodes[dest].id
            )));
        }
        if mode == TravelMode::Drive && links.iter().any(|l| self.links[self.link_index[l]].kind != LinkKind::Road) {
            return Err(NetError::InvalidPath("drive path contains non-road links".into()));
        }
        Ok(())
    }

    /// Free-flow minutes of a path in `mode`.
    pub fn free_flow_cost(&self, links: &[String], mode: TravelMode) -> u64 {
        links
            .iter()
            .filter_map(|l| self.link_idx(l))
            .filter_map(|li| self.traversal_time(li, mode))
            .map(u64::from)
            .sum()
    }

    /// Street-level name prefix of a link id, e.g. `Ave_2` for `Ave_2_link_3`.
    pub fn street_of(link_id: &str) -> &str {
        match link_id.find("_link_") {
            Some(i) => &link_id[..i],
            None => link_id,
        }
    }
}
