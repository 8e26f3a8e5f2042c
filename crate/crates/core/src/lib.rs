//! Generative-agent urban mobility simulation.
//!
//! The crate is organised around the simulation loop:
//!
//! * [`net`] holds the multimodal network, routing and point-queue traffic dynamics.
//! * [`memory`] is the per-agent concept store with multi-modal retrieval and forgetting.
//! * [`gateway`] routes cognition tasks to a foundation-model backend (remote or scripted).
//! * [`cognition`] plans, revises, reflects, chats and validates activity plans.
//! * [`sim`] drives the per-minute loop, scenario events and checkpoints.
//! * [`analysis`] turns run logs into snapshots, flow reports and statistics.
//!
//! Data-parallel work (per-agent cognition, memory scans, batch property checks) goes
//! through [`exec`], which uses rayon when the `parallel` feature is enabled and falls
//! back to plain iteration otherwise.

pub mod analysis;
pub mod clock;
pub mod cognition;
pub mod exec;
pub mod gateway;
pub mod memory;
pub mod net;
pub mod sim;

pub use clock::{ClockTime, Tick, MINUTES_PER_DAY};
