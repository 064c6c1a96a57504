//! Event lifetime: the ground-truth status and the broadcast window.
//!
//! An event is Active on `[t_start, t_stop)` and Inactive otherwise. Witnesses
//! may broadcast on `[t_start, t_lasting)`, which covers the Active window
//! plus a tail in which they announce that the event is over.

use serde::{Deserialize, Serialize};

use crate::config::EventSpec;
use crate::time::{Clock, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventStatus {
    Inactive,
    Active,
}

impl EventStatus {
    pub fn as_bit(self) -> u8 {
        match self {
            EventStatus::Inactive => 0,
            EventStatus::Active => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub spec: EventSpec,
    pub t_stop: f64,
}

impl Event {
    pub fn new(spec: EventSpec) -> Self {
        let t_stop = spec.t_stop();
        Self { spec, t_stop }
    }

    pub fn id(&self) -> u32 {
        self.spec.id
    }

    pub fn status_at(&self, t: f64) -> EventStatus {
        if self.spec.t_start <= t && t < self.t_stop {
            EventStatus::Active
        } else {
            EventStatus::Inactive
        }
    }

    pub fn broadcast_allowed(&self, t: f64) -> bool {
        self.spec.t_start <= t && t < self.spec.t_lasting
    }

    /// Distance from `(x, y)` to the event location.
    pub fn distance_from(&self, x: f64, y: f64) -> f64 {
        (x - self.spec.location.x).hypot(y - self.spec.location.y)
    }

    pub fn ticked(&self, clock: &Clock) -> TickedEvent {
        TickedEvent {
            start: clock.ticks(self.spec.t_start),
            stop: clock.ticks(self.t_stop),
            lasting: clock.ticks(self.spec.t_lasting),
        }
    }
}

/// Event boundaries snapped to the tick grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickedEvent {
    pub start: Tick,
    pub stop: Tick,
    pub lasting: Tick,
}

impl TickedEvent {
    pub fn status_at(&self, k: Tick) -> EventStatus {
        if self.start <= k && k < self.stop {
            EventStatus::Active
        } else {
            EventStatus::Inactive
        }
    }

    pub fn broadcast_allowed(&self, k: Tick) -> bool {
        self.start <= k && k < self.lasting
    }
}
