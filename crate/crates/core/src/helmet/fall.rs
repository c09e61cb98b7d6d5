//! Free-fall followed by impact.

use serde::{Deserialize, Serialize};

use crate::clock::{Millis, TICK_MS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FallConfig {
    pub free_fall_threshold_g: f64,
    pub free_fall_min_ms: Millis,
    pub impact_threshold_g: f64,
    pub impact_window_ms: Millis,
    /// Spacing of the accelerometer samples fed to the detector.
    pub sample_period_ms: Millis,
}

impl Default for FallConfig {
    fn default() -> Self {
        Self {
            free_fall_threshold_g: 0.3,
            free_fall_min_ms: 250,
            impact_threshold_g: 3.0,
            impact_window_ms: 1000,
            sample_period_ms: TICK_MS,
        }
    }
}

impl FallConfig {
    // negated so NaN thresholds are rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), String> {
        if !(self.free_fall_threshold_g < self.impact_threshold_g) {
            return Err("free_fall_threshold_g must be below impact_threshold_g".into());
        }
        if self.sample_period_ms == 0 {
            return Err("sample_period_ms must be > 0".into());
        }
        Ok(())
    }

    /// How much history the detector needs to see a whole fall.
    pub fn window_span_ms(&self) -> Millis {
        self.free_fall_min_ms + self.impact_window_ms + 2 * self.sample_period_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub t: Millis,
    /// Acceleration magnitude in g.
    pub g: f64,
}

/// True iff the window holds a run of sub-threshold samples lasting at least
/// `free_fall_min_ms` that is followed, within `impact_window_ms` of its last
/// sample, by a sample at or above the impact threshold.
///
/// Each sample stands for one `sample_period_ms` of signal, so a run of `n`
/// samples lasts `n * sample_period_ms`.
pub fn detect_fall(window: &[AccelSample], cfg: &FallConfig) -> bool {
    let mut run_start: Option<Millis> = None;
    let mut armed_until: Option<Millis> = None;
    for s in window {
        if s.g < cfg.free_fall_threshold_g {
            let start = *run_start.get_or_insert(s.t);
            if s.t - start + cfg.sample_period_ms >= cfg.free_fall_min_ms {
                armed_until = Some(s.t + cfg.impact_window_ms);
            }
        } else {
            run_start = None;
            if s.g >= cfg.impact_threshold_g && armed_until.is_some_and(|until| s.t <= until) {
                return true;
            }
        }
    }
    false
}
