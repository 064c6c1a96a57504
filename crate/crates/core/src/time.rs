//! Conversion between integer ticks and seconds.
//!
//! The engine counts time in whole ticks so that threshold comparisons never
//! depend on floating point accumulation. Seconds are derived from the tick
//! index on demand.

use serde::{Deserialize, Serialize};

/// Tick index since the start of the run.
pub type Tick = u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clock {
    tick: f64,
    // Set when 1/tick is integral, so that k / rate prints as a clean decimal.
    rate: Option<f64>,
}

impl Clock {
    pub fn new(tick: f64) -> Self {
        let inv = 1.0 / tick;
        let rate = ((inv - inv.round()).abs() < 1e-9 && inv.round() >= 1.0).then(|| inv.round());
        Self { tick, rate }
    }

    pub fn tick_len(&self) -> f64 {
        self.tick
    }

    pub fn seconds(&self, k: Tick) -> f64 {
        match self.rate {
            Some(rate) => k as f64 / rate,
            None => k as f64 * self.tick,
        }
    }

    /// Nearest tick to `t` seconds (negative times map to tick 0).
    pub fn ticks(&self, t: f64) -> Tick {
        let k = (t / self.tick).round();
        if k <= 0.0 {
            0
        } else {
            k as Tick
        }
    }

    /// First tick whose time is at or after `t`.
    pub fn ceil_ticks(&self, t: f64) -> Tick {
        let k = (t / self.tick - 1e-9).ceil();
        if k <= 0.0 {
            0
        } else {
            k as Tick
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_ticks_print_cleanly() {
        let c = Clock::new(0.1);
        assert_eq!(c.seconds(2000), 200.0);
        assert_eq!(c.seconds(3), 0.3);
        assert_eq!(c.ticks(275.0), 2750);
        assert_eq!(c.ceil_ticks(0.25), 3);
        assert_eq!(c.ceil_ticks(-4.0), 0);
    }

    #[test]
    fn non_integral_rate_falls_back_to_product() {
        let c = Clock::new(0.3);
        assert!((c.seconds(10) - 3.0).abs() < 1e-12);
        assert_eq!(c.ticks(3.0), 10);
    }
}
