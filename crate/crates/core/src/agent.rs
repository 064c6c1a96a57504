//! Per-vehicle protocol state machine.
//!
//! Each vehicle keeps one [`EventState`] per road event. The state is driven
//! by the vehicle's distance `d_e` to the event relative to three shells,
//! `d_w < d_d < d_i`:
//!
//! ```text
//!   beyond d_i      ignore messages about the event
//!   (d_d, d_i]      record messages (Interested)
//!   crossing d_d    decide once from the recorded messages (Decided)
//!   within d_w      observe the true status, broadcast it, score senders (Witnessing)
//!   leaving d_w     SAFE only: superseding feedback (Departed)
//! ```
//!
//! Under TCEMD recording stops at the decision and the senders are scored
//! against the status seen on entering the witness area. Under SAFE recording
//! continues until the vehicle leaves the witness area, each sender's latest
//! message is checked against the observation closest to it in time, and a
//! second round of reports goes out on exit when something changed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdu::TrustSnapshot;
use crate::channel::{EventMessage, FeedbackReport, Score};
use crate::config::Policy;
use crate::event::{Event, EventStatus, TickedEvent};
use crate::mobility::Position;
use crate::time::{Clock, Tick};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Unaware,
    Interested,
    Decided,
    Witnessing,
    Departed,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("vehicle {vehicle} decided twice on event {event_id}")]
    DoubleDecision { vehicle: NodeId, event_id: u32 },
    #[error("vehicle {vehicle} evaluated event {event_id} without observations")]
    NoObservations { vehicle: NodeId, event_id: u32 },
}

/// Reference status used to score a sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Status observed at the evaluation instant.
    Instant,
    /// Observation nearest in time to the sender's latest message, clamped to
    /// the ends of the observation timeline.
    Timeline,
}

impl EvalMode {
    pub fn for_policy(policy: Policy) -> Self {
        match policy {
            Policy::Tcemd => EvalMode::Instant,
            Policy::Safe => EvalMode::Timeline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedMessage {
    pub sent_tick: Tick,
    pub reported_status: EventStatus,
    pub received_tick: Tick,
    /// Receiver's distance to the event on arrival.
    pub arrival_d_e: f64,
}

/// Ground-truth samples taken once per tick inside the witness area.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationTimeline {
    samples: Vec<(Tick, EventStatus)>,
}

impl ObservationTimeline {
    pub fn push(&mut self, k: Tick, observed: EventStatus) {
        if let Some(&(last, _)) = self.samples.last() {
            assert!(k > last, "observation timestamps must increase");
        }
        self.samples.push((k, observed));
    }

    pub fn samples(&self) -> &[(Tick, EventStatus)] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn latest(&self) -> Option<EventStatus> {
        self.samples.last().map(|s| s.1)
    }

    /// Sample closest to `k`; ties go to the earlier sample.
    pub fn nearest(&self, k: Tick) -> Option<EventStatus> {
        let idx = self.samples.partition_point(|s| s.0 < k);
        let after = self.samples.get(idx);
        let before = idx.checked_sub(1).and_then(|i| self.samples.get(i));
        match (before, after) {
            (Some(b), Some(a)) => Some(if k - b.0 <= a.0 - k { b.1 } else { a.1 }),
            (Some(b), None) => Some(b.1),
            (None, Some(a)) => Some(a.1),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub vehicle: NodeId,
    pub event_id: u32,
    pub decision_time: f64,
    pub believed_status: EventStatus,
    pub true_status_at_decision: EventStatus,
}

impl DecisionRecord {
    pub fn correct(&self) -> bool {
        self.believed_status == self.true_status_at_decision
    }
}

/// Why an incoming message was not recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    Recorded,
    OutOfInterest,
    Blacklisted,
    Departed,
    WindowClosed,
}

/// Static inputs an agent needs to act on one event during a tick.
#[derive(Debug, Clone, Copy)]
pub struct EventContext<'a> {
    pub event: &'a Event,
    pub ticks: TickedEvent,
    pub clock: &'a Clock,
    pub trust: &'a TrustSnapshot,
    pub tie_default: EventStatus,
    pub beacon_ticks: Tick,
}

impl EventContext<'_> {
    fn d_w(&self) -> f64 {
        self.event.spec.d_w
    }
    fn d_d(&self) -> f64 {
        self.event.spec.d_d
    }
    fn d_i(&self) -> f64 {
        self.event.spec.d_i
    }
}

/// Protocol state of one vehicle with respect to one event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventState {
    pub event_id: u32,
    pub phase: Phase,
    pub d_e: f64,
    pub message_log: BTreeMap<NodeId, Vec<LoggedMessage>>,
    pub observations: ObservationTimeline,
    pub decision: Option<DecisionRecord>,
    pub reported_scores: BTreeMap<NodeId, Score>,
    last_beacon: Option<Tick>,
}

impl EventState {
    pub fn new(event_id: u32) -> Self {
        Self {
            event_id,
            phase: Phase::Unaware,
            d_e: f64::INFINITY,
            message_log: BTreeMap::new(),
            observations: ObservationTimeline::default(),
            decision: None,
            reported_scores: BTreeMap::new(),
            last_beacon: None,
        }
    }

    /// Records the vehicle's new distance; entering `d_i` makes it interested.
    pub fn set_distance(&mut self, d_e: f64, d_i: f64) {
        self.d_e = d_e;
        if self.phase == Phase::Unaware && d_e <= d_i {
            self.phase = Phase::Interested;
        }
    }

    fn latest_messages(&self) -> impl Iterator<Item = (NodeId, &LoggedMessage)> {
        self.message_log.iter().filter_map(|(s, log)| log.last().map(|m| (*s, m)))
    }

    pub fn on_message(&mut self, policy: Policy, msg: &EventMessage, now: Tick, ctx: &EventContext<'_>) -> Reception {
        if self.phase == Phase::Departed {
            return Reception::Departed;
        }
        if self.d_e > ctx.d_i() {
            return Reception::OutOfInterest;
        }
        if ctx.trust.is_blacklisted(msg.sender) {
            return Reception::Blacklisted;
        }
        let open = match policy {
            Policy::Tcemd => self.decision.is_none() && self.d_e > ctx.d_d(),
            Policy::Safe => true,
        };
        if !open {
            return Reception::WindowClosed;
        }
        self.message_log.entry(msg.sender).or_default().push(LoggedMessage {
            sent_tick: ctx.clock.ticks(msg.sent_time),
            reported_status: msg.reported_status,
            received_tick: now,
            arrival_d_e: self.d_e,
        });
        Reception::Recorded
    }

    /// Trust-weighted vote over each sender's latest recorded message.
    pub fn decide(&mut self, vehicle: NodeId, now: Tick, ctx: &EventContext<'_>) -> Result<DecisionRecord, AgentError> {
        if self.decision.is_some() {
            return Err(AgentError::DoubleDecision { vehicle, event_id: self.event_id });
        }
        let (mut active, mut inactive) = (0.0, 0.0);
        for (sender, m) in self.latest_messages() {
            if ctx.trust.is_blacklisted(sender) {
                continue;
            }
            let w = ctx.trust.gt(sender);
            match m.reported_status {
                EventStatus::Active => active += w,
                EventStatus::Inactive => inactive += w,
            }
        }
        let believed_status = if active > inactive {
            EventStatus::Active
        } else if inactive > active {
            EventStatus::Inactive
        } else {
            ctx.tie_default
        };
        let record = DecisionRecord {
            vehicle,
            event_id: self.event_id,
            decision_time: ctx.clock.seconds(now),
            believed_status,
            true_status_at_decision: ctx.ticks.status_at(now),
        };
        self.decision = Some(record);
        self.phase = Phase::Decided;
        Ok(record)
    }

    /// Samples the true status and emits a message when a beacon is due.
    pub fn observe_and_beacon(
        &mut self,
        vehicle: NodeId,
        position: Position,
        now: Tick,
        ctx: &EventContext<'_>,
    ) -> Option<EventMessage> {
        let status = ctx.ticks.status_at(now);
        self.observations.push(now, status);
        self.phase = Phase::Witnessing;
        let due = self.last_beacon.is_none_or(|b| now - b >= ctx.beacon_ticks);
        if !(ctx.ticks.broadcast_allowed(now) && due) {
            return None;
        }
        self.last_beacon = Some(now);
        Some(EventMessage {
            sender: vehicle,
            event_id: self.event_id,
            reported_status: status,
            sent_time: ctx.clock.seconds(now),
            sender_position: position,
        })
    }

    /// Scores every non-blacklisted sender in the log, all as revision 0.
    pub fn evaluate_feedback(
        &self,
        vehicle: NodeId,
        now: Tick,
        mode: EvalMode,
        ctx: &EventContext<'_>,
    ) -> Result<Vec<FeedbackReport>, AgentError> {
        if self.observations.is_empty() {
            return Err(AgentError::NoObservations { vehicle, event_id: self.event_id });
        }
        let created_time = ctx.clock.seconds(now);
        let reports = self
            .latest_messages()
            .filter(|(sender, _)| !ctx.trust.is_blacklisted(*sender))
            .map(|(sender, m)| {
                let reference = match mode {
                    EvalMode::Instant => self.observations.latest(),
                    EvalMode::Timeline => self.observations.nearest(m.sent_tick),
                }
                .expect("timeline is non-empty");
                FeedbackReport {
                    reporter: vehicle,
                    subject: sender,
                    event_id: self.event_id,
                    score: Score::matching(m.reported_status, reference),
                    created_time,
                    revision: 0,
                }
            })
            .collect();
        Ok(reports)
    }

    fn initial_feedback(
        &mut self,
        vehicle: NodeId,
        policy: Policy,
        now: Tick,
        ctx: &EventContext<'_>,
    ) -> Result<Vec<FeedbackReport>, AgentError> {
        let reports = self.evaluate_feedback(vehicle, now, EvalMode::for_policy(policy), ctx)?;
        for r in &reports {
            self.reported_scores.insert(r.subject, r.score);
        }
        Ok(reports)
    }

    /// SAFE exit: re-scores the whole log and reports only what changed,
    /// plus first reports for senders heard since the initial evaluation.
    pub fn on_exit_witness(
        &mut self,
        vehicle: NodeId,
        now: Tick,
        ctx: &EventContext<'_>,
    ) -> Result<Vec<FeedbackReport>, AgentError> {
        let rescored = self.evaluate_feedback(vehicle, now, EvalMode::Timeline, ctx)?;
        let mut out = Vec::new();
        for mut r in rescored {
            match self.reported_scores.get(&r.subject) {
                Some(prev) if *prev == r.score => continue,
                Some(_) => r.revision = 1,
                None => r.revision = 0,
            }
            self.reported_scores.insert(r.subject, r.score);
            out.push(r);
        }
        self.phase = Phase::Departed;
        Ok(out)
    }

    fn leave(
        &mut self,
        vehicle: NodeId,
        policy: Policy,
        now: Tick,
        ctx: &EventContext<'_>,
        out: &mut StepOutput,
    ) -> Result<(), AgentError> {
        if self.phase == Phase::Witnessing && policy == Policy::Safe {
            out.reports.extend(self.on_exit_witness(vehicle, now, ctx)?);
        }
        if self.phase != Phase::Departed {
            self.phase = Phase::Departed;
            out.transitions.push((self.event_id, Phase::Departed));
        }
        Ok(())
    }
}

/// Everything a vehicle emitted during one tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub messages: Vec<EventMessage>,
    pub reports: Vec<FeedbackReport>,
    pub decisions: Vec<DecisionRecord>,
    pub transitions: Vec<(u32, Phase)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: NodeId,
    pub policy: Policy,
    /// One entry per scenario event, in scenario order.
    pub events: Vec<EventState>,
}

impl VehicleState {
    pub fn new(id: NodeId, policy: Policy, event_ids: impl IntoIterator<Item = u32>) -> Self {
        Self { id, policy, events: event_ids.into_iter().map(EventState::new).collect() }
    }

    /// Advances the state machine for one event after the vehicle moved.
    pub fn step_event(
        &mut self,
        idx: usize,
        position: Position,
        now: Tick,
        ctx: &EventContext<'_>,
        out: &mut StepOutput,
    ) -> Result<(), AgentError> {
        let (id, policy) = (self.id, self.policy);
        let st = &mut self.events[idx];
        let d_e = st.d_e;
        let start_phase = st.phase;
        if st.phase == Phase::Departed {
            return Ok(());
        }
        if matches!(st.phase, Phase::Unaware | Phase::Interested) && d_e <= ctx.d_d() && d_e > ctx.d_w() {
            out.decisions.push(st.decide(id, now, ctx)?);
        }
        if d_e <= ctx.d_w() {
            let entering = st.phase != Phase::Witnessing;
            let msg = st.observe_and_beacon(id, position, now, ctx);
            if entering {
                out.reports.extend(st.initial_feedback(id, policy, now, ctx)?);
            }
            out.messages.extend(msg);
        } else if st.phase == Phase::Witnessing {
            st.leave(id, policy, now, ctx, out)?;
        }
        if st.phase != start_phase && st.phase != Phase::Departed {
            out.transitions.push((st.event_id, st.phase));
        }
        Ok(())
    }

    /// Handles leaving the road or the end of the run: every witnessing event
    /// is exited as if the vehicle had left the witness area.
    pub fn depart_event(
        &mut self,
        idx: usize,
        now: Tick,
        ctx: &EventContext<'_>,
        out: &mut StepOutput,
    ) -> Result<(), AgentError> {
        let (id, policy) = (self.id, self.policy);
        self.events[idx].leave(id, policy, now, ctx, out)
    }
}
