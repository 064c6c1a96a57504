//! Independent replay of a run log.
//!
//! The oracle sees only the spawn records, the broadcast records and the
//! scenario. It rebuilds every trajectory, finds every shell crossing by brute
//! force, replays recording, decisions, scoring and the trust updates period
//! by period, and compares the result against what the engine logged. It
//! shares no state machine code with the engine.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use crate::agent::DecisionRecord;
use crate::channel::{FeedbackReport, Score};
use crate::config::Policy;
use crate::event::EventStatus;
use crate::metrics::MetricsPeriodRecord;
use crate::mobility::{position_at, VehicleKinematics};
use crate::runlog::{Record, RunLog};
use crate::time::{Clock, Tick};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub category: &'static str,
    /// Position of the first differing item within its category.
    pub index: usize,
    pub expected: String,
    pub found: String,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} #{}: oracle {} / engine {}", self.category, self.index, self.expected, self.found)
    }
}

/// What the oracle recomputed, and where it disagrees with the engine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub decisions: Vec<DecisionRecord>,
    pub reports: Vec<(Tick, FeedbackReport, bool)>,
    /// Trust values after each update: (tick, updated subjects).
    pub gt_trajectory: Vec<(Tick, Vec<(NodeId, f64)>)>,
    pub periods: Vec<MetricsPeriodRecord>,
    pub divergences: Vec<Divergence>,
}

impl OracleReport {
    pub fn is_clean(&self) -> bool {
        self.divergences.is_empty()
    }

    pub fn first(&self) -> Option<&Divergence> {
        self.divergences.first()
    }
}

#[derive(Debug, Clone)]
struct Shells {
    start: Tick,
    stop: Tick,
    d_w: f64,
    d_d: f64,
    d_i: f64,
}

impl Shells {
    fn truth(&self, k: Tick) -> EventStatus {
        if k >= self.start && k < self.stop {
            EventStatus::Active
        } else {
            EventStatus::Inactive
        }
    }
}

/// Crossings of one vehicle through one event's shells.
#[derive(Debug, Clone, Default)]
struct Track {
    first: Tick,
    dist: Vec<f64>,
    decide_at: Option<Tick>,
    /// Witness entry, exit tick and last observed tick.
    witness: Option<(Tick, Tick, Tick)>,
    history: Vec<(NodeId, Tick, Tick, EventStatus)>,
    reported: BTreeMap<NodeId, Score>,
}

impl Track {
    fn d(&self, k: Tick) -> f64 {
        self.dist[(k - self.first) as usize]
    }

    /// Latest message per sender delivered at or before `k`.
    fn latest_by(&self, k: Tick) -> BTreeMap<NodeId, (Tick, EventStatus)> {
        let mut out = BTreeMap::new();
        for (s, delivered, sent, status) in &self.history {
            if *delivered <= k {
                out.insert(*s, (*sent, *status));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Vehicle {
    spawn: Tick,
    /// First tick off the road, or one past the last tick.
    off: Tick,
}

fn first_divergence<T: PartialEq + Debug>(category: &'static str, expected: &[T], found: &[T]) -> Option<Divergence> {
    let n = expected.len().max(found.len());
    (0..n).find(|&i| expected.get(i) != found.get(i)).map(|i| Divergence {
        category,
        index: i,
        expected: expected.get(i).map_or("<missing>".into(), |v| format!("{v:?}")),
        found: found.get(i).map_or("<missing>".into(), |v| format!("{v:?}")),
    })
}

/// Receiver, event index, sender, sent tick and reported status.
type Arrival = (NodeId, usize, NodeId, Tick, EventStatus);

/// Recomputes scores, trust and metrics from `log` and diffs them against the
/// engine's records.
pub fn oracle_replay(log: &RunLog) -> OracleReport {
    let cfg = &log.header.config;
    let policy = log.header.policy;
    let clock = Clock::new(cfg.tick);
    let last = clock.ticks(cfg.sim_duration);
    let period = clock.ticks(cfg.gt_update_period);
    let shells: Vec<Shells> = cfg
        .events
        .iter()
        .map(|e| Shells {
            start: clock.ticks(e.t_start),
            stop: clock.ticks(e.t_stop()),
            d_w: e.d_w,
            d_d: e.d_d,
            d_i: e.d_i,
        })
        .collect();
    let event_index: BTreeMap<u32, usize> = cfg.events.iter().enumerate().map(|(i, e)| (e.id, i)).collect();

    // trajectories and crossings
    let mut vehicles: BTreeMap<NodeId, Vehicle> = BTreeMap::new();
    let mut tracks: BTreeMap<(NodeId, usize), Track> = BTreeMap::new();
    for rec in &log.records {
        let Record::Spawn { tick, node, spawn_time, lane, speed, y } = rec else { continue };
        let vk = VehicleKinematics { id: *node, spawn_time: *spawn_time, lane: *lane, speed: *speed, y: *y };
        let mut xs = Vec::new();
        let mut off = last + 1;
        for k in *tick..=last {
            let p = position_at(&vk, clock.seconds(k), cfg.road_length).expect("spawned");
            if !p.on_road {
                off = k;
                break;
            }
            xs.push((p.x, p.y));
        }
        vehicles.insert(*node, Vehicle { spawn: *tick, off });
        for (ei, (spec, sh)) in cfg.events.iter().zip(&shells).enumerate() {
            let dist: Vec<f64> = xs.iter().map(|(x, y)| (x - spec.location.x).hypot(y - spec.location.y)).collect();
            let mut tr = Track { first: *tick, ..Track::default() };
            if let Some(i) = dist.iter().position(|d| *d <= sh.d_d) {
                if dist[i] > sh.d_w {
                    tr.decide_at = Some(*tick + i as Tick);
                }
            }
            if let Some(i) = dist.iter().position(|d| *d <= sh.d_w) {
                let entry = *tick + i as Tick;
                tr.witness = Some(match dist[i + 1..].iter().position(|d| *d > sh.d_w) {
                    Some(j) => {
                        let exit = entry + 1 + j as Tick;
                        (entry, exit, exit - 1)
                    }
                    None if off <= last => (entry, off, off - 1),
                    None => (entry, last, last),
                });
            }
            tr.dist = dist;
            tracks.insert((*node, ei), tr);
        }
    }

    // deliveries grouped by arrival tick
    let mut arrivals: BTreeMap<Tick, Vec<Arrival>> = BTreeMap::new();
    for (b, msg, recipients) in log.broadcasts() {
        if b + 1 > last {
            continue;
        }
        let Some(&ei) = event_index.get(&msg.event_id) else { continue };
        for r in recipients {
            arrivals.entry(b + 1).or_default().push((*r, ei, msg.sender, b, msg.reported_status));
        }
    }

    let mut boundaries: Vec<Tick> = (1..).map(|j| j * period).take_while(|k| *k <= last).collect();
    if last > 0 && boundaries.last() != Some(&last) {
        boundaries.push(last);
    }

    let mut gt: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut blacklisted: BTreeSet<NodeId> = BTreeSet::new();
    let mut pending: Vec<FeedbackReport> = Vec::new();
    let mut out = OracleReport::default();
    let th = cfg.blacklist_threshold;
    let init = cfg.initial_trust;
    let trust = |gt: &BTreeMap<NodeId, f64>, v: NodeId| gt.get(&v).copied().unwrap_or(init);

    let mut lo: Tick = 0;
    for &hi in &boundaries {
        // recording
        for (&k, list) in arrivals.range(lo..=hi) {
            for &(r, ei, sender, sent, status) in list {
                let veh = vehicles[&r];
                if k < veh.spawn || k >= veh.off {
                    continue;
                }
                let sh = &shells[ei];
                let tr = tracks.get_mut(&(r, ei)).expect("track per spawned vehicle");
                let d = tr.d(k);
                if d > sh.d_i || blacklisted.contains(&sender) {
                    continue;
                }
                if tr.witness.is_some_and(|(_, exit, _)| k > exit) {
                    continue;
                }
                if policy == Policy::Tcemd && (tr.decide_at.is_some_and(|dk| dk < k) || d <= sh.d_d) {
                    continue;
                }
                tr.history.push((sender, k, sent, status));
            }
        }

        // decisions and reports
        let mut window_decisions = Vec::new();
        let mut created: Vec<(Tick, FeedbackReport)> = Vec::new();
        for (&(v, ei), tr) in tracks.iter_mut() {
            let sh = &shells[ei];
            let event_id = cfg.events[ei].id;
            if let Some(k) = tr.decide_at.filter(|k| (lo..=hi).contains(k)) {
                let (mut act, mut inact) = (0.0, 0.0);
                for (s, (_, st)) in tr.latest_by(k) {
                    if blacklisted.contains(&s) {
                        continue;
                    }
                    match st {
                        EventStatus::Active => act += trust(&gt, s),
                        EventStatus::Inactive => inact += trust(&gt, s),
                    }
                }
                let believed = if act > inact {
                    EventStatus::Active
                } else if inact > act {
                    EventStatus::Inactive
                } else {
                    cfg.decision_tie_default
                };
                window_decisions.push((
                    k,
                    v,
                    ei,
                    DecisionRecord {
                        vehicle: v,
                        event_id,
                        decision_time: clock.seconds(k),
                        believed_status: believed,
                        true_status_at_decision: sh.truth(k),
                    },
                ));
            }
            let Some((entry, exit, last_obs)) = tr.witness else { continue };
            let score_all = |k: Tick, reference: &dyn Fn(Tick) -> EventStatus| {
                tr.latest_by(k)
                    .into_iter()
                    .filter(|(s, _)| !blacklisted.contains(s))
                    .map(|(s, (sent, st))| (s, if st == reference(sent) { Score::Positive } else { Score::Negative }))
                    .collect::<Vec<_>>()
            };
            let mk = |k: Tick, subject: NodeId, score: Score, revision: u8| FeedbackReport {
                reporter: v,
                subject,
                event_id,
                score,
                created_time: clock.seconds(k),
                revision,
            };
            let mut emitted = Vec::new();
            if (lo..=hi).contains(&entry) {
                for (s, score) in score_all(entry, &|_| sh.truth(entry)) {
                    emitted.push((entry, mk(entry, s, score, 0)));
                }
            }
            let mut exit_scores = Vec::new();
            if policy == Policy::Safe && (lo..=hi).contains(&exit) {
                exit_scores = score_all(exit, &|sent| sh.truth(sent.clamp(entry, last_obs)));
            }
            for (_, r) in &emitted {
                tr.reported.insert(r.subject, r.score);
            }
            for (s, score) in exit_scores {
                let revision = match tr.reported.get(&s) {
                    Some(prev) if *prev == score => continue,
                    Some(_) => 1,
                    None => 0,
                };
                tr.reported.insert(s, score);
                emitted.push((exit, mk(exit, s, score, revision)));
            }
            created.extend(emitted);
        }
        window_decisions.sort_by_key(|(k, v, ei, _)| (*k, *v, *ei));
        out.decisions.extend(window_decisions.iter().map(|d| d.3));

        // ingestion
        created.sort_by(|a, b| {
            let ka = (a.0, a.1.reporter, a.1.subject, a.1.event_id, a.1.revision);
            let kb = (b.0, b.1.reporter, b.1.subject, b.1.event_id, b.1.revision);
            ka.cmp(&kb)
        });
        for (k, r) in created {
            let ok = !blacklisted.contains(&r.reporter);
            if ok {
                pending.push(r);
            }
            out.reports.push((k, r, ok));
        }

        // trust update
        let consumed: Vec<FeedbackReport> = if pending.len() >= (cfg.min_reports_for_update as usize).max(1) {
            std::mem::take(&mut pending)
        } else {
            Vec::new()
        };
        let mut effective: BTreeMap<(NodeId, NodeId, u32), (u8, Score)> = BTreeMap::new();
        for r in &consumed {
            let key = (r.reporter, r.subject, r.event_id);
            if effective.get(&key).is_none_or(|(rev, _)| r.revision >= *rev) {
                effective.insert(key, (r.revision, r.score));
            }
        }
        let mut per_subject: BTreeMap<NodeId, (i64, i64)> = BTreeMap::new();
        let mut per_event: BTreeMap<u32, BTreeSet<NodeId>> = BTreeMap::new();
        for ((_, subject, event_id), (_, score)) in &effective {
            if blacklisted.contains(subject) {
                continue;
            }
            let e = per_subject.entry(*subject).or_default();
            e.0 += if *score == Score::Positive { 1 } else { -1 };
            e.1 += 1;
            per_event.entry(*event_id).or_default().insert(*subject);
        }
        let mut updated = Vec::new();
        for (s, (sum, n)) in &per_subject {
            let mean = *sum as f64 / *n as f64;
            let next = (trust(&gt, *s) + cfg.trust_step * mean).clamp(0.0, 1.0);
            gt.insert(*s, next);
            updated.push((*s, next));
        }
        let newly: Vec<NodeId> = updated.iter().filter(|(_, g)| *g <= th).map(|(s, _)| *s).collect();
        blacklisted.extend(newly.iter().copied());

        let n = consumed.len();
        let neg = consumed.iter().filter(|r| r.score == Score::Negative).count();
        let (positive_rate, negative_rate) =
            if n == 0 { (None, None) } else { (Some((n - neg) as f64 / n as f64), Some(neg as f64 / n as f64)) };
        let low = updated.iter().filter(|(_, g)| *g <= th).count();
        let (blr, n_blr) = if updated.is_empty() {
            (None, None)
        } else {
            let b = low as f64 / updated.len() as f64;
            (Some(b), Some(1.0 - b))
        };
        let decision_accuracy = if window_decisions.is_empty() {
            None
        } else {
            let ok = window_decisions.iter().filter(|d| d.3.believed_status == d.3.true_status_at_decision).count();
            Some(ok as f64 / window_decisions.len() as f64)
        };
        out.periods.push(MetricsPeriodRecord {
            period_index: hi.div_ceil(period) as u32,
            t: clock.seconds(hi),
            fbr_count: n as u64,
            positive_rate,
            negative_rate,
            ugt_count: updated.len() as u64,
            blr,
            n_blr,
            per_event_ugt: per_event.iter().map(|(e, s)| (*e, s.len() as u64)).collect(),
            decision_accuracy,
        });
        out.gt_trajectory.push((hi, updated));
        lo = hi + 1;
    }

    compare(log, &shells, &cfg.events.iter().map(|e| e.id).collect::<Vec<_>>(), last, &mut out);
    out
}

fn compare(log: &RunLog, shells: &[Shells], event_ids: &[u32], last: Tick, out: &mut OracleReport) {
    let mut status = Vec::new();
    for k in 0..=last {
        for (sh, id) in shells.iter().zip(event_ids) {
            if k == 0 || sh.truth(k) != sh.truth(k - 1) {
                status.push((k, *id, sh.truth(k)));
            }
        }
    }
    let mut engine_status = Vec::new();
    let mut engine_decisions = Vec::new();
    let mut engine_reports = Vec::new();
    let mut engine_gt = Vec::new();
    let mut engine_periods = Vec::new();
    for rec in &log.records {
        match rec {
            Record::Status { tick, event_id, status } => engine_status.push((*tick, *event_id, *status)),
            Record::Decision { decision, .. } => engine_decisions.push(*decision),
            Record::Report { tick, report, accepted } => engine_reports.push((*tick, *report, *accepted)),
            Record::GtUpdate { tick, updated, .. } => engine_gt.push((*tick, updated.clone())),
            Record::Period { metrics, .. } => engine_periods.push(metrics.clone()),
            _ => {}
        }
    }
    let found = [
        first_divergence("status", &status, &engine_status),
        first_divergence("decision", &out.decisions, &engine_decisions),
        first_divergence("report", &out.reports, &engine_reports),
        first_divergence("global trust", &out.gt_trajectory, &engine_gt),
        first_divergence("metrics", &out.periods, &engine_periods),
    ];
    out.divergences.extend(found.into_iter().flatten());
}
