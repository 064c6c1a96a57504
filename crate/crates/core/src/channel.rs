//! Message transport.
//!
//! Event messages are single-hop geometric broadcasts: every on-road vehicle
//! within the coverage radius of the sender receives them, optionally thinned
//! by an independent per-recipient loss draw. Feedback reports travel over the
//! RSU uplink, which always succeeds and adds no latency.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::event::EventStatus;
use crate::mobility::Position;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventMessage {
    pub sender: NodeId,
    pub event_id: u32,
    pub reported_status: EventStatus,
    pub sent_time: f64,
    pub sender_position: Position,
}

/// A score in {+1, -1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Score {
    Negative,
    Positive,
}

impl Score {
    pub fn matching(reported: EventStatus, reference: EventStatus) -> Self {
        if reported == reference {
            Score::Positive
        } else {
            Score::Negative
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Score::Positive => 1,
            Score::Negative => -1,
        }
    }
}

impl From<Score> for i8 {
    fn from(s: Score) -> i8 {
        s.value()
    }
}

impl TryFrom<i8> for Score {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Score::Positive),
            -1 => Ok(Score::Negative),
            other => Err(format!("score must be +1 or -1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub reporter: NodeId,
    pub subject: NodeId,
    pub event_id: u32,
    pub score: Score,
    pub created_time: f64,
    /// 0 for the initial report, 1 for a superseding exit report.
    pub revision: u8,
}

impl FeedbackReport {
    /// Ordering used for reports created in the same tick.
    pub fn uplink_key(&self) -> (NodeId, NodeId, u32, u8) {
        (self.reporter, self.subject, self.event_id, self.revision)
    }
}

/// Recipients of a broadcast from `msg.sender_position`: every other on-road
/// vehicle within `radius`, in ascending id order.
pub fn broadcast(msg: &EventMessage, fleet: &[(NodeId, Position)], radius: f64) -> Vec<NodeId> {
    let origin = msg.sender_position;
    let mut out: Vec<NodeId> = fleet
        .iter()
        .filter(|(id, p)| *id != msg.sender && p.on_road && (p.x - origin.x).hypot(p.y - origin.y) <= radius)
        .map(|(id, _)| *id)
        .collect();
    out.sort_unstable();
    out
}

/// Broadcast medium with an optional uniform loss probability.
#[derive(Debug, Clone)]
pub struct Channel {
    radius: f64,
    loss_probability: f64,
    rng: ChaCha8Rng,
}

impl Channel {
    pub fn new(radius: f64, loss_probability: f64, rng: ChaCha8Rng) -> Self {
        Self { radius, loss_probability, rng }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn transmit(&mut self, msg: &EventMessage, fleet: &[(NodeId, Position)]) -> Vec<NodeId> {
        let mut recipients = broadcast(msg, fleet, self.radius);
        if self.loss_probability > 0.0 {
            let p = self.loss_probability;
            let rng = &mut self.rng;
            recipients.retain(|_| !rng.gen_bool(p));
        }
        recipients
    }
}

/// A report as it reaches the CDU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkDelivery {
    pub report: FeedbackReport,
    pub arrival_time: f64,
    /// Set when the reporter is blacklisted; the CDU discards such reports.
    pub reject: bool,
}

pub fn uplink(report: FeedbackReport, reporter_blacklisted: bool) -> UplinkDelivery {
    UplinkDelivery { report, arrival_time: report.created_time, reject: reporter_blacklisted }
}

/// Uplinks a batch created in one tick, in (reporter, subject) order.
pub fn uplink_batch(mut reports: Vec<FeedbackReport>, is_blacklisted: impl Fn(NodeId) -> bool) -> Vec<UplinkDelivery> {
    reports.sort_by(|a, b| a.created_time.total_cmp(&b.created_time).then(a.uplink_key().cmp(&b.uplink_key())));
    reports.into_iter().map(|r| uplink(r, is_blacklisted(r.reporter))).collect()
}
