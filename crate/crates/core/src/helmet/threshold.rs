//! Dual-threshold (hysteresis) alarm detection with debounce.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelThreshold {
    /// Raise level (inclusive).
    pub t_high: f64,
    /// Clear level (inclusive).
    pub t_low: f64,
    #[serde(default = "one")]
    pub debounce_samples: u32,
}

fn one() -> u32 {
    1
}

impl ChannelThreshold {
    pub fn new(t_high: f64, t_low: f64, debounce_samples: u32) -> Self {
        Self {
            t_high,
            t_low,
            debounce_samples,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.t_low.is_finite() && self.t_high.is_finite()) {
            return Err("thresholds must be finite".into());
        }
        if self.t_low >= self.t_high {
            return Err(format!(
                "t_low ({}) must be below t_high ({})",
                self.t_low, self.t_high
            ));
        }
        if self.debounce_samples == 0 {
            return Err("debounce_samples must be >= 1".into());
        }
        Ok(())
    }
}

/// Per-channel thresholds. Channels without an entry never alarm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdConfig(pub BTreeMap<Channel, ChannelThreshold>);

impl Default for ThresholdConfig {
    fn default() -> Self {
        let mut m = BTreeMap::new();
        m.insert(Channel::Co, ChannelThreshold::new(50.0, 35.0, 1));
        m.insert(Channel::Ch4, ChannelThreshold::new(1.0, 0.8, 1));
        m.insert(Channel::Lpg, ChannelThreshold::new(1000.0, 800.0, 1));
        m.insert(Channel::Temperature, ChannelThreshold::new(40.0, 38.0, 1));
        m.insert(Channel::Noise, ChannelThreshold::new(85.0, 80.0, 1));
        Self(m)
    }
}

impl ThresholdConfig {
    pub fn get(&self, channel: Channel) -> Option<&ChannelThreshold> {
        self.0.get(&channel)
    }

    pub fn set(&mut self, channel: Channel, threshold: ChannelThreshold) {
        self.0.insert(channel, threshold);
    }

    /// Overlay `overrides` on top of `self`.
    pub fn merged(&self, overrides: &ThresholdConfig) -> ThresholdConfig {
        let mut out = self.clone();
        out.0.extend(overrides.0.iter().map(|(k, v)| (*k, *v)));
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        for (channel, t) in &self.0 {
            t.validate().map_err(|e| format!("{channel}: {e}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmTransition {
    Raised,
    Cleared,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HysteresisState {
    raised: bool,
    run: u32,
}

impl HysteresisState {
    pub fn is_raised(&self) -> bool {
        self.raised
    }

    /// Feed one filtered sample. Raises after `debounce` consecutive samples
    /// at or above `t_high`, clears after `debounce` consecutive samples at
    /// or below `t_low`, holds otherwise.
    pub fn update(&mut self, value: f64, cfg: &ChannelThreshold) -> Option<AlarmTransition> {
        let toward_flip = if self.raised {
            value <= cfg.t_low
        } else {
            value >= cfg.t_high
        };
        if !toward_flip {
            self.run = 0;
            return None;
        }
        self.run += 1;
        if self.run < cfg.debounce_samples {
            return None;
        }
        self.run = 0;
        self.raised = !self.raised;
        Some(if self.raised {
            AlarmTransition::Raised
        } else {
            AlarmTransition::Cleared
        })
    }
}

/// Run a whole sample sequence through a fresh detector, returning the
/// transitions with the index of the sample that caused each.
pub fn detect_sequence(values: &[f64], cfg: &ChannelThreshold) -> Vec<(usize, AlarmTransition)> {
    let mut state = HysteresisState::default();
    values
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| state.update(v, cfg).map(|tr| (i, tr)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn direct_crossing() {
        let cfg = ChannelThreshold::new(50.0, 35.0, 1);
        assert_eq!(
            detect_sequence(&[40.0, 60.0], &cfg),
            vec![(1, AlarmTransition::Raised)]
        );
    }

    #[test]
    fn raise_and_clear_are_inclusive() {
        let cfg = ChannelThreshold::new(50.0, 35.0, 1);
        assert_eq!(
            detect_sequence(&[50.0, 36.0, 35.0], &cfg),
            vec![(0, AlarmTransition::Raised), (2, AlarmTransition::Cleared)]
        );
    }

    #[test]
    fn band_holds_raised_state() {
        let cfg = ChannelThreshold::new(50.0, 35.0, 1);
        let mut seq = vec![60.0];
        seq.extend((0..1000).map(|i| if i % 2 == 0 { 36.0 } else { 49.0 }));
        assert_eq!(
            detect_sequence(&seq, &cfg),
            vec![(0, AlarmTransition::Raised)]
        );
    }

    #[test]
    fn debounce_run_resets() {
        let cfg = ChannelThreshold::new(50.0, 35.0, 3);
        assert!(detect_sequence(&[60.0, 60.0, 40.0, 60.0], &cfg).is_empty());
        assert_eq!(
            detect_sequence(&[60.0, 60.0, 40.0, 60.0, 60.0, 60.0], &cfg),
            vec![(5, AlarmTransition::Raised)]
        );
    }

    #[test]
    fn config_validation() {
        assert!(ChannelThreshold::new(50.0, 50.0, 1).validate().is_err());
        assert!(ChannelThreshold::new(50.0, 40.0, 0).validate().is_err());
        assert!(ThresholdConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn no_chatter_inside_band(
            lo in -100.0f64..100.0,
            width in 0.01f64..100.0,
            debounce in 1u32..5,
            fractions in prop::collection::vec(0.001f64..0.999, 1..500),
        ) {
            let cfg = ChannelThreshold::new(lo + width, lo, debounce);
            let mut state = HysteresisState::default();
            for _ in 0..debounce {
                state.update(cfg.t_high, &cfg);
            }
            prop_assert!(state.is_raised());
            for f in fractions {
                let v = lo + f * width;
                if v <= cfg.t_low || v >= cfg.t_high {
                    continue;
                }
                prop_assert_eq!(state.update(v, &cfg), None);
                prop_assert!(state.is_raised());
            }
        }
    }
}
