use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{LinkKind, NetworkGraph, TrafficState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CongestionLevel {
    Free,
    Light,
    Moderate,
    Severe,
}

impl CongestionLevel {
    /// Level for an expected wait of `w` minutes.
    pub fn from_wait(w: u32) -> Self {
        match w {
            0 => CongestionLevel::Free,
            1..=4 => CongestionLevel::Light,
            5..=9 => CongestionLevel::Moderate,
            _ => CongestionLevel::Severe,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CongestionLevel::Free => "free",
            CongestionLevel::Light => "light",
            CongestionLevel::Moderate => "moderate",
            CongestionLevel::Severe => "severe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "free" => Some(CongestionLevel::Free),
            "light" => Some(CongestionLevel::Light),
            "moderate" => Some(CongestionLevel::Moderate),
            "severe" => Some(CongestionLevel::Severe),
            _ => None,
        }
    }
}

impl fmt::Display for CongestionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCongestion {
    pub link_id: String,
    pub occupancy: usize,
    pub queue_len: usize,
    pub capacity: Option<u32>,
    pub wait: u32,
    pub level: CongestionLevel,
}

/// Per-link level and wait estimate for every link, in canonical link order.
pub fn congestion_snapshot(state: &TrafficState, graph: &NetworkGraph) -> Vec<LinkCongestion> {
    graph
        .links()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let wait = state.expected_wait(graph, i);
            LinkCongestion {
                link_id: l.id.clone(),
                occupancy: if l.kind == LinkKind::Road { state.occupancy(i) } else { state.on_link(i) },
                queue_len: state.queue_len(i),
                capacity: state.effective_capacity(i),
                wait,
                level: CongestionLevel::from_wait(wait),
            }
        })
        .collect()
}

/// Writes snapshot rows as `tick,link_id,occupancy,queue_len,level`.
pub fn write_snapshot_csv<W: Write>(out: W, tick: u32, rows: &[LinkCongestion], header: bool) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        w.write_record(["tick", "link_id", "occupancy", "queue_len", "level"])?;
    }
    for r in rows {
        w.write_record([
            tick.to_string(),
            r.link_id.clone(),
            r.occupancy.to_string(),
            r.queue_len.to_string(),
            r.level.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
