//! Constant-speed highway mobility.
//!
//! Vehicles enter at x = 0 in one of `lane_count` parallel lanes and drive
//! towards +x at a fixed speed until they pass `road_length`. There is no car
//! following and no lane changing.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::event::Event;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleKinematics {
    pub id: NodeId,
    pub spawn_time: f64,
    pub lane: u32,
    pub speed: f64,
    /// Lane centre.
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub on_road: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MobilityError {
    #[error("vehicle {id} queried at t={t} before spawning at t={spawn_time}")]
    NotYetSpawned { id: NodeId, t: f64, spawn_time: f64 },
}

/// Centre line of `lane`, with lanes spread symmetrically around `road_y`.
pub fn lane_y(config: &ScenarioConfig, lane: u32) -> f64 {
    let offset = lane as f64 - (config.lane_count as f64 - 1.0) / 2.0;
    config.road_y + offset * config.lane_spacing
}

/// Number of spawn slots per lane over the prefill plus the run.
pub fn slots_per_lane(config: &ScenarioConfig) -> u64 {
    ((config.sim_duration + config.prefill) / config.spawn_interval_per_lane + 1e-9).floor() as u64
}

/// Draws the full spawn schedule.
///
/// Slot `k` of every lane is nominally at `k * interval - prefill`, shifted by
/// a uniform jitter. Draws happen in (slot, lane) order so a seed fixes the
/// schedule; vehicles are then numbered in order of spawn time.
pub fn spawn_schedule<R: Rng>(config: &ScenarioConfig, rng: &mut R) -> Vec<VehicleKinematics> {
    let slots = slots_per_lane(config);
    let jitter = config.spawn_jitter;
    let mut drawn = Vec::with_capacity((slots * config.lane_count as u64) as usize);
    for slot in 0..slots {
        for lane in 0..config.lane_count {
            let base = slot as f64 * config.spawn_interval_per_lane - config.prefill;
            let shift = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
            let spawn_time = (base + shift).max(-config.prefill);
            let speed = if config.speed_max > config.speed_min {
                rng.gen_range(config.speed_min..=config.speed_max)
            } else {
                config.speed_min
            };
            drawn.push((spawn_time, lane, speed));
        }
    }
    drawn.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    drawn
        .into_iter()
        .enumerate()
        .map(|(i, (spawn_time, lane, speed))| VehicleKinematics {
            id: NodeId(i as u32),
            spawn_time,
            lane,
            speed,
            y: lane_y(config, lane),
        })
        .collect()
}

pub fn position_at(vk: &VehicleKinematics, t: f64, road_length: f64) -> Result<Position, MobilityError> {
    if t < vk.spawn_time {
        return Err(MobilityError::NotYetSpawned { id: vk.id, t, spawn_time: vk.spawn_time });
    }
    let x = vk.speed * (t - vk.spawn_time);
    Ok(Position { x, y: vk.y, on_road: (0.0..=road_length).contains(&x) })
}

pub fn distance_to_event(p: &Position, e: &Event) -> f64 {
    e.distance_from(p.x, p.y)
}
