//! Deterministic simulator of event-based trust management in vehicular
//! ad-hoc networks.
//!
//! Vehicles drive a one-way multi-lane highway past road events. Witnesses
//! broadcast the event status they observe, approaching vehicles record those
//! messages inside distance shells around the event, decide once, and later
//! score the senders. A central decision unit (CDU) turns the scores into
//! global trust values and blacklists nodes whose trust collapses.
//!
//! Two feedback policies are modelled:
//!
//! * [`Policy::Tcemd`]: recording stops at the decision point and every
//!   sender is scored once, against the status seen on entering the witness
//!   area.
//! * [`Policy::Safe`]: recording continues through the witness area, scores
//!   are checked against the observation closest in time to each message,
//!   and a superseding report is sent on leaving the witness area.
//!
//! The [`engine`] runs a fixed-tick simulation and produces a replayable
//! [`runlog::RunLog`]; the [`oracle`] recomputes every score, trust value and
//! metric from that log independently.

pub mod agent;
pub mod cdu;
pub mod channel;
pub mod config;
pub mod engine;
pub mod error;
pub mod event;
pub mod metrics;
pub mod mobility;
pub mod oracle;
pub mod output;
pub mod runlog;
pub mod sweep;
pub mod time;

pub use config::{EventSpec, Policy, ScenarioConfig, Severity};
pub use engine::{run, RunResult};
pub use error::{ConfigError, SimError};
pub use event::{Event, EventStatus};

/// Identifier of a vehicle (node) in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
