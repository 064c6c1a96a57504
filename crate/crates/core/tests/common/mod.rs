//! Randomized small scenarios shared by the property tests.
#![allow(dead_code)]

pub mod props;

use proptest::prelude::*;

use vanet_trust::config::Location;
use vanet_trust::{EventSpec, Policy, ScenarioConfig, Severity};

pub const CASES: u32 = 1000;

pub fn event(id: u32) -> impl Strategy<Value = EventSpec> {
    (
        0.0..1.0f64,
        -20.0..20.0f64,
        0.0..30.0f64,
        2.0..30.0f64,
        0.0..20.0f64,
        20.0..200.0f64,
        10.0..200.0f64,
        10.0..200.0f64,
        1u8..=3,
    )
        .prop_map(move |(xf, dy, t_start, duration, tail, d_w, g1, g2, type_class)| EventSpec {
            id,
            type_class,
            t_start,
            duration,
            t_lasting: t_start + duration + tail,
            location: Location { x: xf * 800.0, y: 400.0 + dy },
            d_w,
            d_d: d_w + g1,
            d_i: d_w + g1 + g2,
            severity: Severity::Low,
        })
}

prop_compose! {
    pub fn scenario()(
        road in (400.0..1000.0f64, 1u32..=3, 20.0..50.0f64, 1.0..6.0f64, 0.0..0.5f64, 0.0..60.0f64),
        motion in (2.0..30.0f64, 0.0..10.0f64, 50.0..300.0f64, 0.5..3.0f64, 5.0..20.0f64),
        trust in (0.05..0.5f64, prop_oneof![Just(0.1), Just(0.2), Just(0.5)], 0.0..0.3f64),
        policy in prop_oneof![Just(Policy::Tcemd), Just(Policy::Safe)],
        first in event(1),
        second in proptest::option::of(event(2)),
    ) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::with_events(std::iter::once(first).chain(second).collect());
        (cfg.road_length, cfg.lane_count, cfg.sim_duration, cfg.spawn_interval_per_lane, cfg.spawn_jitter, cfg.prefill) = road;
        cfg.speed_min = motion.0;
        cfg.speed_max = motion.0 + motion.1;
        (cfg.coverage_radius, cfg.beacon_period, cfg.gt_update_period) = (motion.2, motion.3, motion.4);
        (cfg.trust_step, cfg.tick, cfg.loss_probability) = trust;
        cfg.policy = policy;
        cfg
    }
}
