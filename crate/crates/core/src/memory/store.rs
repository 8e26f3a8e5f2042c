use std::cmp::Ordering;
use std::collections::BTreeSet;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::node::hours;
use super::scoring::{recency, score_keyword, score_semantic, score_spatiotemporal};
use super::{assign_lifespan, ConceptKind, ConceptNode, DecayPolicy, Embedder, MemoryError, TimeScope};
use crate::exec::{self, ExecMode};

/// Stores at least this large are scored through [`exec::map`].
const PARALLEL_THRESHOLD: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalWeights {
    pub w_keyword: f64,
    pub w_semantic: f64,
    pub w_spatiotemporal: f64,
    pub delta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub top_k: usize,
}

impl Default for RetrievalWeights {
    fn default() -> Self {
        RetrievalWeights { w_keyword: 1.0, w_semantic: 1.0, w_spatiotemporal: 1.0, delta: 0.5, gamma: 0.5, lambda: 0.90, top_k: 5 }
    }
}

impl RetrievalWeights {
    pub fn validate(&self) -> Result<(), MemoryError> {
        let all = [self.w_keyword, self.w_semantic, self.w_spatiotemporal, self.delta, self.gamma];
        if all.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(MemoryError::InvalidWeights("weights must be nonnegative".into()));
        }
        for w in [self.w_keyword, self.w_semantic, self.w_spatiotemporal] {
            if w + self.delta + self.gamma <= 0.0 {
                return Err(MemoryError::InvalidWeights("w_r + delta + gamma must be positive".into()));
            }
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(MemoryError::InvalidWeights("lambda must lie in (0, 1)".into()));
        }
        if self.top_k == 0 {
            return Err(MemoryError::InvalidWeights("top_k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalQuery {
    pub text: String,
    pub keywords: BTreeSet<String>,
    pub embedding: Vec<f32>,
    pub spatial: BTreeSet<String>,
    pub temporal: TimeScope,
    pub now: NaiveDateTime,
}

impl RetrievalQuery {
    /// Builds a query whose keywords and embedding come from `text`.
    pub fn from_text(
        text: &str,
        embedder: &dyn Embedder,
        spatial: BTreeSet<String>,
        temporal: TimeScope,
        now: NaiveDateTime,
    ) -> Self {
        RetrievalQuery {
            text: text.to_string(),
            keywords: super::extract_keywords(text),
            embedding: embedder.embed(text),
            spatial,
            temporal,
            now,
        }
    }
}

/// Fields for a new node; keywords and embedding are derived when left empty.
#[derive(Debug, Clone)]
pub struct NewConcept {
    pub kind: ConceptKind,
    pub content: String,
    pub keywords: BTreeSet<String>,
    pub spatial: BTreeSet<String>,
    pub temporal: TimeScope,
    pub importance: f64,
    pub created_at: NaiveDateTime,
}

impl NewConcept {
    pub fn new(kind: ConceptKind, content: impl Into<String>, importance: f64, created_at: NaiveDateTime) -> Self {
        NewConcept {
            kind,
            content: content.into(),
            keywords: BTreeSet::new(),
            spatial: BTreeSet::new(),
            temporal: TimeScope::empty(),
            importance,
            created_at,
        }
    }

    pub fn spatial<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.spatial.extend(ids.into_iter().map(Into::into));
        self
    }

    pub fn temporal(mut self, scope: TimeScope) -> Self {
        self.temporal = scope;
        self
    }
}

/// Per-mode normalized scores combined by max.
pub fn combined_score(node: &ConceptNode, q: &RetrievalQuery, w: &RetrievalWeights) -> f64 {
    let rec = recency(q.now, node, w.lambda);
    let base = w.delta * rec + w.gamma * node.importance;
    let modes = [
        (w.w_keyword, score_keyword(&q.keywords, &node.keywords)),
        (w.w_semantic, score_semantic(&q.embedding, &node.embedding).unwrap_or(0.0)),
        (w.w_spatiotemporal, score_spatiotemporal(&q.spatial, &q.temporal, &node.spatial, &node.temporal)),
    ];
    modes
        .iter()
        .map(|(wr, m)| (wr * m + base) / (wr + w.delta + w.gamma))
        .fold(0.0, f64::max)
}

/// Ranking order: higher score, then newer, then smaller id.
pub fn rank_order(a: (&ConceptNode, f64), b: (&ConceptNode, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(b.0.created_at.cmp(&a.0.created_at)).then(a.0.id.cmp(&b.0.id))
}

/// One agent's memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryStore {
    pub agent: String,
    next_id: u64,
    nodes: Vec<ConceptNode>,
    #[serde(default)]
    policy: DecayPolicy,
    #[serde(skip, default)]
    exec: ExecMode,
}

impl MemoryStore {
    pub fn new(agent: impl Into<String>) -> Self {
        MemoryStore { agent: agent.into(), next_id: 1, nodes: Vec::new(), policy: DecayPolicy::default(), exec: ExecMode::default() }
    }

    pub fn with_policy(mut self, policy: DecayPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn set_exec_mode(&mut self, mode: ExecMode) {
        self.exec = mode;
    }

    pub fn policy(&self) -> &DecayPolicy {
        &self.policy
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ConceptNode] {
        &self.nodes
    }

    pub fn get(&self, id: u64) -> Option<&ConceptNode> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok().map(|i| &self.nodes[i])
    }

    pub fn count_kind(&self, kind: ConceptKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Inserts a node, deriving keywords/embedding from content and assigning its lifespan.
    pub fn add(&mut self, c: NewConcept, embedder: &dyn Embedder) -> Result<u64, MemoryError> {
        let lifespan = assign_lifespan(c.kind, c.importance, &self.policy)?;
        let keywords = if c.keywords.is_empty() { super::extract_keywords(&c.content) } else { c.keywords };
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.push(ConceptNode {
            id,
            kind: c.kind,
            embedding: embedder.embed(&c.content),
            content: c.content,
            keywords,
            spatial: c.spatial,
            temporal: c.temporal,
            importance: c.importance,
            created_at: c.created_at,
            last_access: c.created_at,
            expires_at: c.created_at + hours(lifespan),
            lifespan_hours: lifespan,
        });
        Ok(id)
    }

    /// Inserts a fully formed node (id reassigned). Used by tests and imports.
    pub fn insert_raw(&mut self, mut node: ConceptNode) -> u64 {
        node.id = self.next_id;
        self.next_id += 1;
        let id = node.id;
        self.nodes.push(node);
        id
    }

    /// Combined score of every node, in store order, without side effects.
    pub fn score_all(&self, q: &RetrievalQuery, w: &RetrievalWeights) -> Vec<f64> {
        let mode = if self.nodes.len() >= PARALLEL_THRESHOLD { self.exec } else { ExecMode::Sequential };
        exec::map(mode, &self.nodes, |n| combined_score(n, q, w))
    }

    /// Top-k nodes by combined score. Returned nodes get `last_access = now` and their
    /// expiry pushed out by their initial lifespan.
    pub fn retrieve(&mut self, q: &RetrievalQuery, w: &RetrievalWeights) -> Vec<(ConceptNode, f64)> {
        let (idx, scores) = self.ranked(q, w);
        let mut out = Vec::with_capacity(idx.len());
        for i in idx {
            let n = &mut self.nodes[i];
            out.push((n.clone(), scores[i]));
            n.last_access = n.last_access.max(q.now);
            n.expires_at += n.initial_lifespan();
        }
        out
    }

    /// Same ranking as [`retrieve`](Self::retrieve) but leaves access times and expiry
    /// untouched.
    pub fn peek(&self, q: &RetrievalQuery, w: &RetrievalWeights) -> Vec<(ConceptNode, f64)> {
        let (idx, scores) = self.ranked(q, w);
        idx.into_iter().map(|i| (self.nodes[i].clone(), scores[i])).collect()
    }

    fn ranked(&self, q: &RetrievalQuery, w: &RetrievalWeights) -> (Vec<usize>, Vec<f64>) {
        let scores = self.score_all(q, w);
        let mut idx: Vec<usize> = (0..self.nodes.len()).collect();
        idx.sort_by(|&a, &b| rank_order((&self.nodes[a], scores[a]), (&self.nodes[b], scores[b])));
        idx.truncate(w.top_k);
        (idx, scores)
    }

    /// Removes nodes whose expiry is before `now`.
    pub fn sweep_expired(&mut self, now: NaiveDateTime) -> usize {
        let before = self.nodes.len();
        self.nodes.retain(|n| n.expires_at >= now);
        before - self.nodes.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("store serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MemoryError> {
        serde_json::from_str(text).map_err(|e| MemoryError::Parse(e.to_string()))
    }
}
