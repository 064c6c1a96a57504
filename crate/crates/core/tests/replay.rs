//! Oracle replay against engine logs, fault injection and derived checks.

use std::collections::BTreeMap;

use proptest::prelude::*;

use vanet_trust::channel::Score;
use vanet_trust::oracle::oracle_replay;
use vanet_trust::runlog::{Record, RunLog};
use vanet_trust::sweep::{sweep, SweepSpec};
use vanet_trust::{run, EventStatus, Policy, RunResult, ScenarioConfig};

mod common;

use common::{scenario, CASES};

fn preset(name: &str, policy: Policy) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset(name).unwrap();
    cfg.policy = policy;
    cfg
}

#[test]
fn presets_replay_cleanly() {
    for name in ["single_event", "multi_event"] {
        for policy in [Policy::Tcemd, Policy::Safe] {
            let (log, _) = run(&preset(name, policy), 3).unwrap();
            let rep = oracle_replay(&log);
            assert!(rep.is_clean(), "{name} {policy}: {}", rep.first().unwrap());
            assert_eq!(rep.reports.len(), log.reports().count());
        }
    }
}

#[test]
fn tampered_trust_value_is_reported() {
    let (mut log, _) = run(&preset("single_event", Policy::Safe), 2).unwrap();
    let rec =
        log.records.iter_mut().find(|r| matches!(r, Record::GtUpdate { updated, .. } if !updated.is_empty())).unwrap();
    if let Record::GtUpdate { updated, .. } = rec {
        updated[0].1 = (updated[0].1 + 0.05).min(1.0) - 0.025;
    }
    let rep = oracle_replay(&log);
    assert_eq!(rep.first().unwrap().category, "global trust");
}

#[test]
fn tampered_metrics_are_reported() {
    let (mut log, _) = run(&preset("single_event", Policy::Tcemd), 2).unwrap();
    let rec = log.records.iter_mut().rev().find(|r| matches!(r, Record::Period { .. })).unwrap();
    if let Record::Period { metrics, .. } = rec {
        metrics.fbr_count += 1;
    }
    let rep = oracle_replay(&log);
    assert_eq!(rep.divergences.len(), 1);
    assert_eq!(rep.first().unwrap().category, "metrics");
}

#[test]
fn dropped_decision_is_reported() {
    let (mut log, _) = run(&preset("single_event", Policy::Tcemd), 2).unwrap();
    let pos = log.records.iter().position(|r| matches!(r, Record::Decision { .. })).unwrap();
    log.records.remove(pos);
    let d = oracle_replay(&log);
    let d = d.divergences.iter().find(|d| d.category == "decision").unwrap();
    assert_eq!(d.index, 0);
}

/// Every negative TCEMD score names a subject that broadcast, to the
/// reporter, a status other than what the reporter saw when it scored.
#[test]
fn tcemd_negatives_trace_back_to_a_contradicting_broadcast() {
    for seed in 1..=3 {
        let (log, _) = run(&preset("single_event", Policy::Tcemd), seed).unwrap();
        let event = vanet_trust::Event::new(log.header.config.events[0].clone());
        let mut heard: BTreeMap<(u32, u32), Vec<(f64, EventStatus)>> = BTreeMap::new();
        for (_, msg, recipients) in log.broadcasts() {
            for r in recipients {
                heard.entry((r.0, msg.sender.0)).or_default().push((msg.sent_time, msg.reported_status));
            }
        }
        let mut negatives = 0;
        for (report, _) in log.reports().filter(|(r, _)| r.score == Score::Negative) {
            negatives += 1;
            let observed = event.status_at(report.created_time);
            let msgs = &heard[&(report.reporter.0, report.subject.0)];
            assert!(
                msgs.iter().any(|(t, s)| *t < report.created_time && *s != observed),
                "seed {seed}: negative by {:?} on {:?} without a contradicting broadcast",
                report.reporter,
                report.subject
            );
        }
        assert!(negatives > 0, "seed {seed}: no negative scores to check");
    }
}

#[test]
fn result_is_derivable_from_the_serialized_log() {
    let (log, result) = run(&preset("multi_event", Policy::Safe), 4).unwrap();
    let back = RunLog::read_from(log.to_bytes().as_slice()).unwrap();
    assert_eq!(back.to_bytes(), log.to_bytes());
    assert_eq!(RunResult::from_log(&back), result);
}

#[test]
fn parallel_sweep_matches_sequential_runs() {
    let spec = SweepSpec {
        base: ScenarioConfig::preset("single_event").unwrap(),
        policies: vec![Policy::Tcemd, Policy::Safe],
        seeds: vec![1, 2],
        grid: vec![("d_d".into(), vec!["200".into(), "300".into()])],
        verify: true,
    };
    let results = sweep(&spec).unwrap();
    assert_eq!(results.len(), 8);
    for (key, got) in &results {
        assert_eq!(got.divergences, Some(0));
        let mut cfg = key.point.apply(&spec.base).unwrap();
        cfg.policy = key.policy;
        let (_, expected) = run(&cfg, key.seed).unwrap();
        assert_eq!(got.result, expected, "{}", key.point.label());
    }
}

#[test]
fn loss_does_not_perturb_mobility() {
    let cfg = preset("single_event", Policy::Safe);
    let mut lossy = cfg.clone();
    lossy.loss_probability = 0.3;
    let (a, ra) = run(&cfg, 8).unwrap();
    let (b, rb) = run(&lossy, 8).unwrap();
    assert!(a.world_records().eq(b.world_records()));
    assert!(rb.totals.deliveries < ra.totals.deliveries);
    assert!(oracle_replay(&b).is_clean());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn random_scenarios_replay_cleanly(cfg in scenario(), seed in any::<u64>()) {
        let (log, _) = run(&cfg, seed).unwrap();
        let rep = oracle_replay(&log);
        prop_assert!(rep.is_clean(), "{}", rep.first().unwrap());
    }
}
