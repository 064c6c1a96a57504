//! Scenario definition, validation, presets and TOML loading.
//!
//! A scenario file is a TOML document whose keys are exactly the field names
//! of [`ScenarioConfig`], with the events given as an array of tables:
//!
//! ```toml
//! policy = "safe"
//! seed = 7
//! gt_update_period = 60.0
//!
//! [[events]]
//! id = 1
//! type_class = 1
//! t_start = 50.0
//! duration = 150.0
//! t_lasting = 275.0
//! location = { x = 2000.0, y = 400.0 }
//! d_w = 100.0
//! d_d = 300.0
//! d_i = 500.0
//! severity = "low"
//! ```
//!
//! Every scalar has a default, so a document only needs `events`.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::event::EventStatus;

/// Feedback policy run by every vehicle in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Tcemd,
    Safe,
}

impl Policy {
    pub fn label(self) -> &'static str {
        match self {
            Policy::Tcemd => "TCEMD",
            Policy::Safe => "SAFE",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tcemd" => Ok(Policy::Tcemd),
            "safe" => Ok(Policy::Safe),
            other => Err(ConfigError::Parse(format!("unknown policy `{other}`"))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

/// A road event: where and when it happens and its three distance shells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub id: u32,
    pub type_class: u8,
    pub t_start: f64,
    pub duration: f64,
    /// Absolute time after which witnesses stop broadcasting.
    pub t_lasting: f64,
    pub location: Location,
    /// Witness distance.
    pub d_w: f64,
    /// Decision distance.
    pub d_d: f64,
    /// Interest distance.
    pub d_i: f64,
    pub severity: Severity,
}

impl EventSpec {
    pub fn t_stop(&self) -> f64 {
        self.t_start + self.duration
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<(), ConfigError> {
        let id = self.id;
        let fail = |msg: String| Err(ConfigError::Validation(format!("event {id}: {msg}")));
        if !(1..=3).contains(&self.type_class) {
            return fail(format!("type_class must be 1, 2 or 3 (got {})", self.type_class));
        }
        if !(self.d_w > 0.0) {
            return fail(format!("0 < d_w violated (d_w={})", self.d_w));
        }
        if !(self.d_w < self.d_d) {
            return fail(format!("d_w < d_d violated (d_w={}, d_d={})", self.d_w, self.d_d));
        }
        if !(self.d_d < self.d_i) {
            return fail(format!("d_d < d_i violated (d_d={}, d_i={})", self.d_d, self.d_i));
        }
        if !(self.t_start >= 0.0) {
            return fail(format!("t_start must be non-negative (got {})", self.t_start));
        }
        if !(self.duration > 0.0) {
            return fail(format!("t_start < t_start + duration violated (duration={})", self.duration));
        }
        if !(self.t_stop() <= self.t_lasting) {
            return fail(format!(
                "t_start + duration <= t_lasting violated (t_stop={}, t_lasting={})",
                self.t_stop(),
                self.t_lasting
            ));
        }
        if !(self.location.x.is_finite() && self.location.y.is_finite()) {
            return fail("location must be finite".into());
        }
        Ok(())
    }
}

/// Everything needed to run one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "defaults::road_length")]
    pub road_length: f64,
    #[serde(default = "defaults::lane_count")]
    pub lane_count: u32,
    #[serde(default = "defaults::lane_spacing")]
    pub lane_spacing: f64,
    /// y coordinate of the road centre line; lanes are laid out symmetrically around it.
    #[serde(default = "defaults::road_y")]
    pub road_y: f64,
    #[serde(default = "defaults::sim_duration")]
    pub sim_duration: f64,
    #[serde(default = "defaults::spawn_interval_per_lane")]
    pub spawn_interval_per_lane: f64,
    /// Half-width of the uniform jitter added to every spawn time.
    #[serde(default = "defaults::spawn_jitter")]
    pub spawn_jitter: f64,
    /// Traffic history simulated before t = 0 so the road starts populated.
    #[serde(default = "defaults::prefill")]
    pub prefill: f64,
    #[serde(default = "defaults::speed_min")]
    pub speed_min: f64,
    #[serde(default = "defaults::speed_max")]
    pub speed_max: f64,
    #[serde(default = "defaults::coverage_radius")]
    pub coverage_radius: f64,
    #[serde(default = "defaults::beacon_period")]
    pub beacon_period: f64,
    #[serde(default = "defaults::gt_update_period")]
    pub gt_update_period: f64,
    #[serde(default = "defaults::min_reports_for_update")]
    pub min_reports_for_update: u32,
    #[serde(default = "defaults::blacklist_threshold")]
    pub blacklist_threshold: f64,
    #[serde(default = "defaults::initial_trust")]
    pub initial_trust: f64,
    #[serde(default = "defaults::trust_step")]
    pub trust_step: f64,
    #[serde(default = "defaults::decision_tie_default")]
    pub decision_tie_default: EventStatus,
    #[serde(default = "defaults::policy")]
    pub policy: Policy,
    #[serde(default = "defaults::loss_probability")]
    pub loss_probability: f64,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::tick")]
    pub tick: f64,
    pub events: Vec<EventSpec>,
}

/// Mobility defaults describe slow, dense traffic on a road that is already
/// populated at t = 0.
pub(crate) mod defaults {
    use super::Policy;
    use crate::event::EventStatus;

    pub fn road_length() -> f64 {
        8000.0
    }
    pub fn lane_count() -> u32 {
        3
    }
    pub fn lane_spacing() -> f64 {
        3.5
    }
    pub fn road_y() -> f64 {
        400.0
    }
    pub fn sim_duration() -> f64 {
        360.0
    }
    pub fn spawn_interval_per_lane() -> f64 {
        6.0
    }
    pub fn spawn_jitter() -> f64 {
        0.5
    }
    pub fn prefill() -> f64 {
        1400.0
    }
    pub fn speed_min() -> f64 {
        2.0
    }
    pub fn speed_max() -> f64 {
        4.0
    }
    pub fn coverage_radius() -> f64 {
        300.0
    }
    pub fn beacon_period() -> f64 {
        1.0
    }
    pub fn gt_update_period() -> f64 {
        60.0
    }
    pub fn min_reports_for_update() -> u32 {
        1
    }
    pub fn blacklist_threshold() -> f64 {
        0.2
    }
    pub fn initial_trust() -> f64 {
        0.5
    }
    pub fn trust_step() -> f64 {
        0.15
    }
    pub fn decision_tie_default() -> EventStatus {
        EventStatus::Inactive
    }
    pub fn policy() -> Policy {
        Policy::Safe
    }
    pub fn loss_probability() -> f64 {
        0.0
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn tick() -> f64 {
        0.1
    }
}

/// Names accepted by [`ScenarioConfig::preset`].
pub const PRESETS: [&str; 2] = ["single_event", "multi_event"];

impl ScenarioConfig {
    /// A config with every default filled and the given events.
    pub fn with_events(events: Vec<EventSpec>) -> Self {
        Self {
            road_length: defaults::road_length(),
            lane_count: defaults::lane_count(),
            lane_spacing: defaults::lane_spacing(),
            road_y: defaults::road_y(),
            sim_duration: defaults::sim_duration(),
            spawn_interval_per_lane: defaults::spawn_interval_per_lane(),
            spawn_jitter: defaults::spawn_jitter(),
            prefill: defaults::prefill(),
            speed_min: defaults::speed_min(),
            speed_max: defaults::speed_max(),
            coverage_radius: defaults::coverage_radius(),
            beacon_period: defaults::beacon_period(),
            gt_update_period: defaults::gt_update_period(),
            min_reports_for_update: defaults::min_reports_for_update(),
            blacklist_threshold: defaults::blacklist_threshold(),
            initial_trust: defaults::initial_trust(),
            trust_step: defaults::trust_step(),
            decision_tie_default: defaults::decision_tie_default(),
            policy: defaults::policy(),
            loss_probability: defaults::loss_probability(),
            seed: defaults::seed(),
            tick: defaults::tick(),
            events,
        }
    }

    /// The two experiment scenarios: one Type-1 event, or three events of
    /// increasing scale on the same road.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let at = |x: f64| Location { x, y: 400.0 };
        let events = match name {
            "single_event" => vec![EventSpec {
                id: 1,
                type_class: 1,
                t_start: 50.0,
                duration: 150.0,
                t_lasting: 275.0,
                location: at(2000.0),
                d_w: 100.0,
                d_d: 300.0,
                d_i: 500.0,
                severity: Severity::Low,
            }],
            "multi_event" => vec![
                EventSpec {
                    id: 1,
                    type_class: 1,
                    t_start: 60.0,
                    duration: 100.0,
                    t_lasting: 160.0 + MULTI_EVENT_LASTING_TAIL,
                    location: at(1000.0),
                    d_w: 100.0,
                    d_d: 200.0,
                    d_i: 400.0,
                    severity: Severity::Low,
                },
                EventSpec {
                    id: 2,
                    type_class: 2,
                    t_start: 250.0,
                    duration: 50.0,
                    t_lasting: 300.0 + MULTI_EVENT_LASTING_TAIL,
                    location: at(3000.0),
                    d_w: 400.0,
                    d_d: 600.0,
                    d_i: 800.0,
                    severity: Severity::Medium,
                },
                EventSpec {
                    id: 3,
                    type_class: 3,
                    t_start: 150.0,
                    duration: 100.0,
                    t_lasting: 250.0 + MULTI_EVENT_LASTING_TAIL,
                    location: at(2000.0),
                    d_w: 800.0,
                    d_d: 1000.0,
                    d_i: 1200.0,
                    severity: Severity::High,
                },
            ],
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        let mut config = Self::with_events(events);
        config.sim_duration = 360.0;
        config.validate()?;
        Ok(config)
    }

    /// Checks every scenario invariant, naming the first one violated.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Validation(msg));
        let positive = [
            ("road_length", self.road_length),
            ("lane_spacing", self.lane_spacing),
            ("sim_duration", self.sim_duration),
            ("spawn_interval_per_lane", self.spawn_interval_per_lane),
            ("coverage_radius", self.coverage_radius),
            ("beacon_period", self.beacon_period),
            ("gt_update_period", self.gt_update_period),
            ("trust_step", self.trust_step),
            ("tick", self.tick),
            ("speed_min", self.speed_min),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return fail(format!("{name} > 0 violated ({name}={value})"));
            }
        }
        if self.lane_count == 0 {
            return fail("lane_count >= 1 violated".into());
        }
        if !(self.speed_min <= self.speed_max && self.speed_max.is_finite()) {
            return fail(format!(
                "speed_min <= speed_max violated (speed_min={}, speed_max={})",
                self.speed_min, self.speed_max
            ));
        }
        if !(self.spawn_jitter >= 0.0 && self.prefill >= 0.0) {
            return fail("spawn_jitter and prefill must be non-negative".into());
        }
        if !(self.road_y.is_finite()) {
            return fail("road_y must be finite".into());
        }
        if !(0.0 < self.blacklist_threshold
            && self.blacklist_threshold < self.initial_trust
            && self.initial_trust <= 1.0)
        {
            return fail(format!(
                "0 < blacklist_threshold < initial_trust <= 1 violated (blacklist_threshold={}, initial_trust={})",
                self.blacklist_threshold, self.initial_trust
            ));
        }
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return fail(format!("loss_probability must lie in [0, 1] (got {})", self.loss_probability));
        }
        if self.beacon_period < self.tick || self.gt_update_period < self.tick {
            return fail("beacon_period and gt_update_period must be at least one tick".into());
        }
        if self.events.is_empty() {
            return fail("at least one event is required".into());
        }
        let mut ids: Vec<u32> = self.events.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return fail("event ids must be unique".into());
        }
        for event in &self.events {
            event.validate()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable as TOML")
    }

    /// Returns a copy with `key` set to `value` (a TOML literal). Top-level
    /// keys are set directly; event keys such as `d_d` are set on every event.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self, ConfigError> {
        let bad = |why: &str| ConfigError::Override(format!("{key}={value}: {why}"));
        let literal: toml::Table = format!("v = {value}")
            .parse()
            .or_else(|_| format!("v = \"{value}\"").parse())
            .map_err(|_| bad("not a TOML value"))?;
        let literal = literal["v"].clone();

        let mut doc: toml::Table = self.to_toml().parse().map_err(|_| bad("internal"))?;
        if key != "events" && doc.contains_key(key) {
            doc.insert(key.to_string(), literal);
        } else {
            let events = doc.get_mut("events").and_then(|v| v.as_array_mut()).ok_or_else(|| bad("no events"))?;
            let mut hit = false;
            for ev in events.iter_mut().filter_map(|e| e.as_table_mut()) {
                if ev.contains_key(key) {
                    ev.insert(key.to_string(), literal.clone());
                    hit = true;
                }
            }
            if !hit {
                return Err(bad("unknown key"));
            }
        }
        let text = toml::to_string(&doc).map_err(|_| bad("internal"))?;
        load_config(&text).map_err(|e| ConfigError::Override(format!("{key}={value}: {e}")))
    }
}

/// Length of the broadcast tail after the stop time, used for the
/// multi-event preset (same gap as the single-event scenario: 275 - 200).
pub const MULTI_EVENT_LASTING_TAIL: f64 = 75.0;

/// Parses and validates a TOML scenario document.
pub fn load_config(source: &str) -> Result<ScenarioConfig, ConfigError> {
    let config: ScenarioConfig = toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Resolves `preset:<name>` or a path to a TOML file.
pub fn resolve_scenario(spec: &str) -> Result<ScenarioConfig, ConfigError> {
    if let Some(name) = spec.strip_prefix("preset:") {
        return ScenarioConfig::preset(name);
    }
    let text = std::fs::read_to_string(spec).map_err(|e| ConfigError::Parse(format!("cannot read {spec}: {e}")))?;
    load_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[[events]]
id = 1
type_class = 1
t_start = 50.0
duration = 150.0
t_lasting = 275.0
location = { x = 2000.0, y = 400.0 }
d_w = 100.0
d_d = 300.0
d_i = 500.0
severity = "low"
"#;

    #[test]
    fn omitted_fields_take_defaults() {
        let cfg = load_config(MINIMAL).unwrap();
        assert_eq!(cfg.tick, 0.1);
        assert_eq!(cfg.beacon_period, 1.0);
        assert_eq!(cfg.min_reports_for_update, 1);
        assert_eq!(cfg.decision_tie_default, EventStatus::Inactive);
        assert_eq!(cfg.loss_probability, 0.0);
    }

    #[test]
    fn inverted_radii_are_rejected() {
        let doc = MINIMAL.replace("d_w = 100.0", "d_w = 300.0").replace("d_d = 300.0", "d_d = 100.0");
        let err = load_config(&doc).unwrap_err();
        assert!(err.to_string().contains("d_w < d_d violated"), "{err}");
    }

    #[test]
    fn nominal_thresholds_accepted() {
        let doc = format!("blacklist_threshold = 0.2\ninitial_trust = 0.5\n{MINIMAL}");
        let cfg = load_config(&doc).unwrap();
        assert_eq!(cfg.blacklist_threshold, 0.2);
        assert_eq!(cfg.initial_trust, 0.5);
    }

    #[test]
    fn threshold_above_initial_trust_rejected() {
        let doc = format!("blacklist_threshold = 0.6\n{MINIMAL}");
        assert!(matches!(load_config(&doc), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn malformed_document_is_parse_error() {
        assert!(matches!(load_config("events = ["), Err(ConfigError::Parse(_))));
        let typo = format!("tik = 0.2\n{MINIMAL}");
        assert!(matches!(load_config(&typo), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn lasting_before_stop_rejected() {
        let doc = MINIMAL.replace("t_lasting = 275.0", "t_lasting = 150.0");
        let err = load_config(&doc).unwrap_err();
        assert!(err.to_string().contains("t_lasting"), "{err}");
    }

    #[test]
    fn unknown_preset() {
        assert_eq!(ScenarioConfig::preset("rush_hour"), Err(ConfigError::UnknownPreset("rush_hour".into())));
    }

    #[test]
    fn override_sets_event_field_on_every_event() {
        let cfg = ScenarioConfig::preset("single_event").unwrap();
        let cfg = cfg.with_override("d_d", "200").unwrap();
        assert_eq!(cfg.events[0].d_d, 200.0);
        let err = cfg.with_override("d_d", "50").unwrap_err();
        assert!(err.to_string().contains("d_w < d_d violated"), "{err}");
        assert!(cfg.with_override("nonsense", "1").is_err());
        let cfg = cfg.with_override("policy", "tcemd").unwrap();
        assert_eq!(cfg.policy, Policy::Tcemd);
    }
}
