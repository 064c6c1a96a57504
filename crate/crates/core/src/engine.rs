//! Fixed-tick simulation engine.
//!
//! Every tick runs the same five stages:
//!
//! 1. **move**: spawn due vehicles, advance everyone, retire vehicles that
//!    left the road (SAFE witnesses send their exit reports here);
//! 2. **deliver**: hand the previous tick's broadcasts to their recipients,
//!    which judge them against their current distance to the event;
//! 3. **act**: vehicles in ascending id order decide, observe, beacon and
//!    report;
//! 4. **ingest**: the CDU receives this tick's reports sorted by
//!    `(created_time, reporter, subject, event, revision)`;
//! 5. **update**: on every period boundary (and at the last tick) the CDU
//!    recomputes trust and publishes a snapshot that vehicles see from the
//!    next tick on.
//!
//! Broadcast recipients are fixed at emission time, so messages take exactly
//! one tick to arrive.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{DecisionRecord, EventContext, Phase, StepOutput, VehicleState};
use crate::cdu::{Cdu, Label, TrustSnapshot, TrustTable};
use crate::channel::{uplink_batch, Channel, EventMessage, FeedbackReport};
use crate::config::{Policy, ScenarioConfig};
use crate::error::SimError;
use crate::event::{Event, EventStatus, TickedEvent};
use crate::metrics::{classify_per_event, ClassificationSummary, MetricsPeriodRecord};
use crate::mobility::{distance_to_event, position_at, spawn_schedule, Position, VehicleKinematics};
use crate::runlog::{Record, RunLog};
use crate::time::{Clock, Tick};
use crate::NodeId;

pub const MOBILITY_STREAM: u64 = 0;
pub const LOSS_STREAM: u64 = 1;

/// Seconds between logged position samples.
pub const POSITION_SAMPLE_PERIOD: f64 = 10.0;

/// Independent random stream `stream` derived from the master seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// First tick at or after `t` seconds.
pub fn spawn_tick(clock: &Clock, t: f64) -> Tick {
    let mut k = clock.ceil_ticks(t);
    while clock.seconds(k) < t {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub vehicles: u64,
    pub messages: u64,
    pub deliveries: u64,
    pub decisions: u64,
    pub reports: u64,
    pub reports_accepted: u64,
    pub reports_rejected: u64,
    pub blacklisted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub node: NodeId,
    pub gt: f64,
    pub label: Label,
    pub blacklisted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub policy: Policy,
    pub seed: u64,
    pub periods: Vec<MetricsPeriodRecord>,
    pub classification: ClassificationSummary,
    pub final_trust: TrustTable,
    pub trajectory: Vec<TrajectoryRow>,
    pub blacklisted_nodes: BTreeSet<NodeId>,
    pub totals: Totals,
}

impl RunResult {
    /// Rebuilds the result from a run log alone.
    pub fn from_log(log: &RunLog) -> Self {
        let cfg = &log.header.config;
        let mut table = TrustTable::new(cfg.blacklist_threshold, cfg.initial_trust);
        let mut trajectory = Vec::new();
        let mut blacklisted_nodes = BTreeSet::new();
        let mut totals = Totals::default();
        let mut accepted = Vec::new();
        for rec in &log.records {
            match rec {
                Record::Spawn { .. } => totals.vehicles += 1,
                Record::Broadcast { recipients, .. } => {
                    totals.messages += 1;
                    totals.deliveries += recipients.len() as u64;
                }
                Record::Decision { .. } => totals.decisions += 1,
                Record::Report { report, accepted: ok, .. } => {
                    totals.reports += 1;
                    if *ok {
                        totals.reports_accepted += 1;
                        table.register(report.subject, report.created_time);
                        accepted.push(*report);
                    } else {
                        totals.reports_rejected += 1;
                    }
                }
                Record::GtUpdate { t, updated, newly_blacklisted, .. } => {
                    for (node, gt) in updated {
                        table.restore(*node, *gt, *t);
                        let e = table.get(*node).expect("restored");
                        trajectory.push(TrajectoryRow {
                            t: *t,
                            node: *node,
                            gt: e.gt,
                            label: e.label,
                            blacklisted: e.blacklisted,
                        });
                    }
                    blacklisted_nodes.extend(newly_blacklisted.iter().copied());
                }
                _ => {}
            }
        }
        totals.blacklisted = blacklisted_nodes.len() as u64;
        let classification =
            classify_per_event(log.policy(), cfg.events.iter().map(|e| e.id), &accepted, |v| table.label_of(v));
        Self {
            policy: log.policy(),
            seed: log.header.seed,
            periods: log.periods().cloned().collect(),
            classification,
            final_trust: table,
            trajectory,
            blacklisted_nodes,
            totals,
        }
    }

    pub fn total_fbr(&self) -> u64 {
        self.periods.iter().map(|p| p.fbr_count).sum()
    }
}

#[derive(Debug, Clone)]
struct Alive {
    kin: VehicleKinematics,
    pos: Position,
    state: VehicleState,
}

/// Read-only inputs shared by all agents during a tick.
#[derive(Debug)]
struct World {
    clock: Clock,
    events: Vec<Event>,
    ticked: Vec<TickedEvent>,
    snapshot: Arc<TrustSnapshot>,
    tie_default: EventStatus,
    beacon_ticks: Tick,
}

impl World {
    fn contexts(&self) -> Vec<EventContext<'_>> {
        self.events
            .iter()
            .zip(&self.ticked)
            .map(|(event, ticks)| EventContext {
                event,
                ticks: *ticks,
                clock: &self.clock,
                trust: &self.snapshot,
                tie_default: self.tie_default,
                beacon_ticks: self.beacon_ticks,
            })
            .collect()
    }
}

/// A single run that can be advanced one tick at a time.
#[derive(Debug)]
pub struct Simulation {
    config: ScenarioConfig,
    world: World,
    last_tick: Tick,
    period_ticks: Tick,
    sample_ticks: Tick,
    schedule: Vec<(Tick, VehicleKinematics)>,
    next_spawn: usize,
    alive: Vec<Alive>,
    channel: Channel,
    in_flight: Vec<(EventMessage, Vec<NodeId>)>,
    cdu: Cdu,
    window_decisions: Vec<DecisionRecord>,
    log: RunLog,
    next_tick: Tick,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let clock = Clock::new(config.tick);
        let schedule = spawn_schedule(config, &mut rng_stream(seed, MOBILITY_STREAM))
            .into_iter()
            .map(|vk| (spawn_tick(&clock, vk.spawn_time), vk))
            .collect();
        let events: Vec<Event> = config.events.iter().cloned().map(Event::new).collect();
        Ok(Self {
            world: World {
                clock,
                ticked: events.iter().map(|e| e.ticked(&clock)).collect(),
                events,
                snapshot: Arc::new(TrustSnapshot::empty(config.initial_trust)),
                tie_default: config.decision_tie_default,
                beacon_ticks: clock.ticks(config.beacon_period),
            },
            last_tick: clock.ticks(config.sim_duration),
            period_ticks: clock.ticks(config.gt_update_period),
            sample_ticks: clock.ticks(POSITION_SAMPLE_PERIOD).max(1),
            schedule,
            next_spawn: 0,
            alive: Vec::new(),
            channel: Channel::new(config.coverage_radius, config.loss_probability, rng_stream(seed, LOSS_STREAM)),
            in_flight: Vec::new(),
            cdu: Cdu::new(config),
            window_decisions: Vec::new(),
            log: RunLog::new(config.clone(), seed),
            next_tick: 0,
            config: config.clone(),
        })
    }

    pub fn clock(&self) -> &Clock {
        &self.world.clock
    }

    pub fn last_tick(&self) -> Tick {
        self.last_tick
    }

    pub fn is_finished(&self) -> bool {
        self.next_tick > self.last_tick
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &VehicleState> {
        self.alive.iter().map(|a| &a.state)
    }

    pub fn cdu(&self) -> &Cdu {
        &self.cdu
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    /// Runs one tick. Returns `false` once the run is over.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.is_finished() {
            return Ok(false);
        }
        let k = self.next_tick;
        let mut recs = Vec::new();
        let mut out = TickOutput::default();

        self.status_records(k, &mut recs);
        self.move_vehicles(k, &mut recs, &mut out)?;
        self.deliver(k);
        self.act(k, &mut recs, &mut out)?;
        self.record_step_output(k, &mut recs, &mut out);
        self.ingest(k, out.reports, &mut recs);
        if k > 0 && (k.is_multiple_of(self.period_ticks) || k == self.last_tick) {
            self.update(k, &mut recs);
        }

        recs.sort_by_key(|r| (r.kind_rank(), r.node()));
        self.log.records.extend(recs);
        self.next_tick += 1;
        Ok(!self.is_finished())
    }

    fn status_records(&self, k: Tick, recs: &mut Vec<Record>) {
        for (e, te) in self.world.events.iter().zip(&self.world.ticked) {
            let status = te.status_at(k);
            if k == 0 || status != te.status_at(k - 1) {
                recs.push(Record::Status { tick: k, event_id: e.id(), status });
            }
        }
    }

    fn move_vehicles(&mut self, k: Tick, recs: &mut Vec<Record>, out: &mut TickOutput) -> Result<(), SimError> {
        let t = self.world.clock.seconds(k);
        let road_length = self.config.road_length;
        while let Some((sk, vk)) = self.schedule.get(self.next_spawn).copied() {
            if sk > k {
                break;
            }
            self.next_spawn += 1;
            let pos = position_at(&vk, t, road_length).map_err(|e| SimError::Protocol(e.to_string()))?;
            if !pos.on_road {
                continue;
            }
            recs.push(Record::Spawn {
                tick: k,
                node: vk.id,
                spawn_time: vk.spawn_time,
                lane: vk.lane,
                speed: vk.speed,
                y: vk.y,
            });
            let state = VehicleState::new(vk.id, self.config.policy, self.world.events.iter().map(Event::id));
            self.alive.push(Alive { kin: vk, pos, state });
        }

        let ctxs = self.world.contexts();
        let mut leaving = Vec::new();
        for (i, a) in self.alive.iter_mut().enumerate() {
            a.pos = position_at(&a.kin, t, road_length).map_err(|e| SimError::Protocol(e.to_string()))?;
            if !a.pos.on_road {
                for (idx, ctx) in ctxs.iter().enumerate() {
                    if a.state.events[idx].phase != Phase::Departed {
                        let mut o = StepOutput::default();
                        a.state.depart_event(idx, k, ctx, &mut o).map_err(|e| SimError::Protocol(e.to_string()))?;
                        merge(out, a.state.id, o);
                    }
                }
                recs.push(Record::Despawn { tick: k, node: a.kin.id });
                leaving.push(i);
                continue;
            }
            for (idx, ev) in self.world.events.iter().enumerate() {
                a.state.events[idx].set_distance(distance_to_event(&a.pos, ev), ev.spec.d_i);
            }
            if k.is_multiple_of(self.sample_ticks) {
                recs.push(Record::Position { tick: k, node: a.kin.id, x: a.pos.x, y: a.pos.y });
            }
        }
        drop(ctxs);
        for i in leaving.into_iter().rev() {
            self.alive.remove(i);
        }
        Ok(())
    }

    fn deliver(&mut self, k: Tick) {
        let in_flight = std::mem::take(&mut self.in_flight);
        let ctxs = self.world.contexts();
        for (msg, recipients) in &in_flight {
            let Some(idx) = self.world.events.iter().position(|e| e.id() == msg.event_id) else {
                continue;
            };
            for r in recipients {
                if let Ok(i) = self.alive.binary_search_by_key(r, |a| a.kin.id) {
                    let a = &mut self.alive[i];
                    a.state.events[idx].on_message(a.state.policy, msg, k, &ctxs[idx]);
                }
            }
        }
    }

    fn act(&mut self, k: Tick, recs: &mut Vec<Record>, out: &mut TickOutput) -> Result<(), SimError> {
        let ctxs = self.world.contexts();
        let fleet: Vec<(NodeId, Position)> = self.alive.iter().map(|a| (a.kin.id, a.pos)).collect();
        let finishing = k == self.last_tick;
        let mut emitted = Vec::new();
        for a in self.alive.iter_mut() {
            let mut o = StepOutput::default();
            for (idx, ctx) in ctxs.iter().enumerate() {
                a.state.step_event(idx, a.pos, k, ctx, &mut o).map_err(|e| SimError::Protocol(e.to_string()))?;
                if finishing && a.state.events[idx].phase == Phase::Witnessing {
                    a.state.depart_event(idx, k, ctx, &mut o).map_err(|e| SimError::Protocol(e.to_string()))?;
                }
            }
            emitted.append(&mut o.messages);
            merge(out, a.state.id, o);
        }
        drop(ctxs);
        for msg in emitted {
            let recipients = self.channel.transmit(&msg, &fleet);
            recs.push(Record::Broadcast { tick: k, message: msg, recipients: recipients.clone() });
            self.in_flight.push((msg, recipients));
        }
        Ok(())
    }

    fn record_step_output(&mut self, k: Tick, recs: &mut Vec<Record>, out: &mut TickOutput) {
        for (node, event_id, phase) in out.transitions.drain(..) {
            recs.push(Record::Phase { tick: k, node, event_id, phase });
        }
        for d in out.decisions.drain(..) {
            recs.push(Record::Decision { tick: k, decision: d });
            self.window_decisions.push(d);
        }
    }

    fn ingest(&mut self, k: Tick, reports: Vec<FeedbackReport>, recs: &mut Vec<Record>) {
        let table = self.cdu.table().clone();
        for d in uplink_batch(reports, |r| table.is_blacklisted(r)) {
            let accepted = matches!(self.cdu.ingest(d.report), crate::cdu::IngestOutcome::Accepted);
            recs.push(Record::Report { tick: k, report: d.report, accepted });
        }
    }

    fn update(&mut self, k: Tick, recs: &mut Vec<Record>) {
        let t = self.world.clock.seconds(k);
        let period = k.div_ceil(self.period_ticks) as u32;
        let upd = self.cdu.update_global_trust(t);
        let table = self.cdu.table();
        let metrics = MetricsPeriodRecord::compute(
            period,
            t,
            &upd.consumed,
            &upd.ugt,
            &upd.per_event_ugt,
            |v| table.gt(v),
            self.config.blacklist_threshold,
            &self.window_decisions,
        );
        recs.push(Record::GtUpdate {
            tick: k,
            period,
            t,
            updated: upd.ugt.iter().map(|v| (*v, table.gt(*v))).collect(),
            newly_blacklisted: upd.newly_blacklisted.clone(),
            consumed: upd.consumed.len() as u64,
        });
        recs.push(Record::Period { tick: k, metrics });
        self.window_decisions.clear();
        self.world.snapshot = self.cdu.publish(t);
    }

    /// Runs to completion and returns the log and the derived result.
    pub fn finish(mut self) -> Result<(RunLog, RunResult), SimError> {
        while self.step()? {}
        let result = RunResult::from_log(&self.log);
        Ok((self.log, result))
    }
}

/// Everything the fleet emitted during one tick, apart from broadcasts.
#[derive(Debug, Default)]
struct TickOutput {
    reports: Vec<FeedbackReport>,
    decisions: Vec<DecisionRecord>,
    transitions: Vec<(NodeId, u32, Phase)>,
}

fn merge(into: &mut TickOutput, node: NodeId, from: StepOutput) {
    into.reports.extend(from.reports);
    into.decisions.extend(from.decisions);
    into.transitions.extend(from.transitions.into_iter().map(|(e, p)| (node, e, p)));
}

/// Runs one simulation of `config` under `seed`.
pub fn run(config: &ScenarioConfig, seed: u64) -> Result<(RunLog, RunResult), SimError> {
    Simulation::new(config, seed)?.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Score;
    use crate::event::EventStatus;

    fn small(policy: Policy) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::preset("single_event").unwrap();
        cfg.policy = policy;
        cfg
    }

    #[test]
    fn spawn_tick_never_precedes_spawn_time() {
        let c = Clock::new(0.1);
        for t in [0.0, 0.3, 2.9999999, 3.0000001, -4.0, 17.05] {
            let k = spawn_tick(&c, t);
            assert!(c.seconds(k) >= t);
            assert!(k == 0 || c.seconds(k - 1) < t);
        }
    }

    #[test]
    fn first_nonempty_update_is_second_period_for_tcemd() {
        let (log, res) = run(&small(Policy::Tcemd), 1).unwrap();
        assert!(log.is_ordered());
        assert_eq!(res.periods[0].t, 60.0);
        assert_eq!(res.periods[0].fbr_count, 0);
        assert!(res.periods[1].fbr_count > 0);
        assert_eq!(res.periods[1].t, 120.0);
    }

    #[test]
    fn derived_table_matches_live_cdu() {
        let mut sim = Simulation::new(&small(Policy::Safe), 2).unwrap();
        while sim.step().unwrap() {}
        let live = sim.cdu().table().clone();
        let (_, res) = sim.finish().unwrap();
        assert_eq!(res.final_trust, live);
    }

    #[test]
    fn scores_before_flip_are_positive() {
        let (log, _) = run(&small(Policy::Tcemd), 4).unwrap();
        for (r, _) in log.reports() {
            if r.created_time < 200.0 {
                assert_eq!(r.score, Score::Positive, "{r:?}");
            }
        }
        let flips: Vec<_> = log
            .records
            .iter()
            .filter_map(|r| match r {
                Record::Status { tick, status, .. } => Some((*tick, *status)),
                _ => None,
            })
            .collect();
        assert_eq!(flips, vec![(0, EventStatus::Inactive), (500, EventStatus::Active), (2000, EventStatus::Inactive)]);
    }
}
