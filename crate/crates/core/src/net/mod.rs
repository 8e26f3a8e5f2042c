//! Multimodal network, routing and point-queue traffic dynamics.

mod congestion;
mod graph;
mod routing;
mod traffic;

pub use congestion::{congestion_snapshot, write_snapshot_csv, CongestionLevel, LinkCongestion};
pub use graph::{
    Arc, Facility, Link, LinkKind, NetworkDocument, NetworkGraph, Node, TransitLine, TravelMode,
};
pub use routing::{enumerate_simple_paths, shortest_path, shortest_path_between, Path, RouteOptions};
pub use traffic::{Arrival, LinkEntry, TokenId, TokenPlace, TrafficState};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("network document does not parse: {0}")]
    Parse(String),
    #[error("no nodes")]
    NoNodes,
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("{owner} references unknown element {target}")]
    DanglingReference { owner: String, target: String },
    #[error("facility {0} has no node")]
    FacilityWithoutNode(String),
    #[error("discontiguous transit line {0}")]
    DiscontiguousLine(String),
    #[error("invalid link {link}: {reason}")]
    InvalidLink { link: String, reason: String },
    #[error("street network is not connected at {0}")]
    Disconnected(String),
    #[error("unknown facility {0}")]
    UnknownFacility(String),
    #[error("unknown link {0}")]
    UnknownLink(String),
    #[error("mode {0} is not routable")]
    UnsupportedMode(TravelMode),
    #[error("{dest} is unreachable from {origin} by {mode}")]
    Unreachable { origin: String, dest: String, mode: TravelMode },
    #[error("invalid path: {0}")]
    InvalidPath(String),
}
