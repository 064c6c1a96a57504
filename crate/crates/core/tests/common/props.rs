//! Invariant properties, shared by the proptest target and the acceptance run.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use vanet_trust::agent::Phase;
use vanet_trust::cdu::Cdu;
use vanet_trust::channel::{FeedbackReport, Score};
use vanet_trust::engine::Simulation;
use vanet_trust::runlog::Record;
use vanet_trust::{run, NodeId, Policy, ScenarioConfig};

use super::scenario;

pub fn report() -> impl Strategy<Value = FeedbackReport> {
    (0u32..6, 0u32..6, 1u32..=2, any::<bool>(), 0u8..=1).prop_map(|(reporter, subject, event_id, pos, revision)| {
        FeedbackReport {
            reporter: NodeId(reporter),
            subject: NodeId(subject),
            event_id,
            score: if pos { Score::Positive } else { Score::Negative },
            created_time: 1.0,
            revision,
        }
    })
}

fn cdu_config(step: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset("single_event").unwrap();
    cfg.trust_step = step;
    cfg
}

pub fn windows(max: usize) -> impl Strategy<Value = Vec<Vec<FeedbackReport>>> {
    proptest::collection::vec(proptest::collection::vec(report(), 1..30), 1..max)
}

pub fn at_most_one_decision_per_vehicle_and_event((cfg, seed): (ScenarioConfig, u64)) -> Result<(), TestCaseError> {
    let (log, _) = run(&cfg, seed).unwrap();
    let mut seen = BTreeSet::new();
    for d in log.decisions() {
        prop_assert!(seen.insert((d.vehicle, d.event_id)), "second decision by {:?} on {}", d.vehicle, d.event_id);
    }
    Ok(())
}

pub fn recorded_messages_stay_inside_the_policy_window(
    (cfg, seed): (ScenarioConfig, u64),
) -> Result<(), TestCaseError> {
    let shells: BTreeMap<u32, (f64, f64)> = cfg.events.iter().map(|e| (e.id, (e.d_d, e.d_i))).collect();
    let mut sim = Simulation::new(&cfg, seed).unwrap();
    let mut departed: BTreeMap<(NodeId, u32), usize> = BTreeMap::new();
    while sim.step().unwrap() {
        for v in sim.vehicles() {
            for st in &v.events {
                let (d_d, d_i) = shells[&st.event_id];
                let recorded: usize = st.message_log.values().map(Vec::len).sum();
                for m in st.message_log.values().flatten() {
                    prop_assert!(m.arrival_d_e <= d_i);
                    if cfg.policy == Policy::Tcemd {
                        prop_assert!(m.arrival_d_e > d_d, "recorded at d_e={} inside d_d={}", m.arrival_d_e, d_d);
                    }
                }
                if st.phase == Phase::Departed {
                    let at_exit = *departed.entry((v.id, st.event_id)).or_insert(recorded);
                    prop_assert_eq!(at_exit, recorded, "recorded after leaving the witness zone");
                }
            }
        }
    }
    Ok(())
}

pub fn blacklisting_is_absorbing_in_runs((cfg, seed): (ScenarioConfig, u64)) -> Result<(), TestCaseError> {
    let (log, result) = run(&cfg, seed).unwrap();
    let mut black = BTreeSet::new();
    for rec in &log.records {
        match rec {
            Record::GtUpdate { updated, newly_blacklisted, .. } => {
                for (node, gt) in updated {
                    prop_assert!(!black.contains(node), "{:?} updated after blacklisting", node);
                    prop_assert!((0.0..=1.0).contains(gt));
                }
                black.extend(newly_blacklisted.iter().copied());
            }
            Record::Report { report, accepted, .. } if black.contains(&report.reporter) => {
                prop_assert!(!accepted, "report from blacklisted {:?} accepted", report.reporter);
            }
            _ => {}
        }
    }
    for node in &black {
        prop_assert!(result.final_trust.is_blacklisted(*node));
        prop_assert_eq!(result.final_trust.label_of(*node).as_str(), "untrusted");
    }
    Ok(())
}

pub fn gt_stays_bounded_and_moves_with_the_scores(
    (step, windows): (f64, Vec<Vec<FeedbackReport>>),
) -> Result<(), TestCaseError> {
    let cfg = cdu_config(step);
    let mut cdu = Cdu::new(&cfg);
    for (i, window) in windows.iter().enumerate() {
        let before: BTreeMap<NodeId, f64> = (0..6).map(|n| (NodeId(n), cdu.table().gt(NodeId(n)))).collect();
        let accepted: Vec<FeedbackReport> =
            window.iter().copied().filter(|r| !cdu.table().is_blacklisted(r.reporter)).collect();
        for r in window {
            cdu.ingest(*r);
        }
        let effective = vanet_trust::cdu::effective_scores(&accepted);
        let upd = cdu.update_global_trust(60.0 * (i + 1) as f64);
        for (subject, gt) in &before {
            let scores: Vec<i8> =
                effective.values().filter(|r| r.subject == *subject).map(|r| r.score.value()).collect();
            let after = cdu.table().gt(*subject);
            prop_assert!((0.0..=1.0).contains(&after));
            if !upd.ugt.contains(subject) {
                prop_assert_eq!(after, *gt);
            } else if scores.iter().all(|s| *s > 0) {
                prop_assert!(after >= *gt);
            } else if scores.iter().all(|s| *s < 0) {
                prop_assert!(after <= *gt);
            }
        }
    }
    Ok(())
}

pub fn superseded_initial_reports_have_no_effect(
    (window, pick, flip): (Vec<FeedbackReport>, prop::sample::Index, bool),
) -> Result<(), TestCaseError> {
    let exits: Vec<FeedbackReport> = window.iter().copied().filter(|r| r.revision == 1).collect();
    prop_assume!(!exits.is_empty());
    let target = *pick.get(&exits);
    let mut initial = target;
    initial.revision = 0;
    initial.score = if flip { Score::Positive } else { Score::Negative };

    let cfg = cdu_config(0.2);
    let gt_after = |reports: &[FeedbackReport]| {
        let mut cdu = Cdu::new(&cfg);
        for r in reports {
            cdu.ingest(*r);
        }
        cdu.update_global_trust(60.0);
        (0..6).map(|n| cdu.table().gt(NodeId(n))).collect::<Vec<_>>()
    };
    let mut with_initial = vec![initial];
    with_initial.extend(window.iter().copied());
    prop_assert_eq!(gt_after(&window), gt_after(&with_initial));
    Ok(())
}

pub fn blacklist_is_absorbing_at_the_cdu(windows: Vec<Vec<FeedbackReport>>) -> Result<(), TestCaseError> {
    let cfg = cdu_config(0.3);
    let mut cdu = Cdu::new(&cfg);
    let mut black: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (i, window) in windows.iter().enumerate() {
        for r in window {
            cdu.ingest(*r);
        }
        let upd = cdu.update_global_trust(60.0 * (i + 1) as f64);
        for (node, gt) in &black {
            prop_assert!(!upd.ugt.contains(node));
            prop_assert!(cdu.table().is_blacklisted(*node));
            prop_assert_eq!(cdu.table().gt(*node), *gt);
        }
        for node in upd.newly_blacklisted {
            prop_assert!(cdu.table().gt(node) <= cfg.blacklist_threshold);
            black.insert(node, cdu.table().gt(node));
        }
    }
    Ok(())
}

pub fn logs_are_byte_identical_for_a_seed((cfg, seed): (ScenarioConfig, u64)) -> Result<(), TestCaseError> {
    let (a, ra) = run(&cfg, seed).unwrap();
    let (b, rb) = run(&cfg, seed).unwrap();
    prop_assert!(a.is_ordered());
    prop_assert_eq!(a.to_bytes(), b.to_bytes());
    prop_assert_eq!(ra, rb);
    Ok(())
}

pub fn policy_does_not_touch_the_world((cfg, seed): (ScenarioConfig, u64)) -> Result<(), TestCaseError> {
    let mut tcemd = cfg.clone();
    tcemd.policy = Policy::Tcemd;
    let mut safe = cfg;
    safe.policy = Policy::Safe;
    let (a, _) = run(&tcemd, seed).unwrap();
    let (b, _) = run(&safe, seed).unwrap();
    let wa: Vec<&Record> = a.world_records().collect();
    let wb: Vec<&Record> = b.world_records().collect();
    prop_assert_eq!(wa, wb);
    Ok(())
}

/// Runs every property for `cases` cases and returns each name with its failure, if any.
pub fn run_all(cases: u32) -> Vec<(&'static str, Option<String>)> {
    let mut out = Vec::new();
    macro_rules! check {
        ($name:ident, $strategy:expr) => {{
            let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
            let res = runner.run(&$strategy, $name);
            out.push((stringify!($name), res.err().map(|e| e.to_string())));
        }};
    }
    check!(at_most_one_decision_per_vehicle_and_event, (scenario(), any::<u64>()));
    check!(recorded_messages_stay_inside_the_policy_window, (scenario(), any::<u64>()));
    check!(blacklisting_is_absorbing_in_runs, (scenario(), any::<u64>()));
    check!(gt_stays_bounded_and_moves_with_the_scores, (0.01..0.6f64, windows(8)));
    check!(
        superseded_initial_reports_have_no_effect,
        (proptest::collection::vec(report(), 1..30), any::<prop::sample::Index>(), any::<bool>())
    );
    check!(blacklist_is_absorbing_at_the_cdu, windows(10));
    check!(logs_are_byte_identical_for_a_seed, (scenario(), any::<u64>()));
    check!(policy_does_not_touch_the_world, (scenario(), any::<u64>()));
    out
}
