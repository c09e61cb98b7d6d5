use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::types::{Channel, HelmetId, ZoneId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GasChannel {
    Co,
    Ch4,
    Lpg,
}

impl GasChannel {
    pub fn channel(self) -> Channel {
        match self {
            GasChannel::Co => Channel::Co,
            GasChannel::Ch4 => Channel::Ch4,
            GasChannel::Lpg => Channel::Lpg,
        }
    }
}

/// What a scripted event does. Times inside the kind are in seconds, the
/// surrounding [`HazardEventSpec`] times are in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HazardKind {
    GasLeak {
        gas: GasChannel,
        magnitude: f64,
        /// seconds
        rise_time_constant: f64,
    },
    TempRamp {
        /// degrees Celsius
        target: f64,
        /// degrees Celsius per second
        ramp_rate: f64,
    },
    NoiseBurst {
        /// dB
        level: f64,
        /// seconds
        duration: f64,
    },
    Fall {
        helmet_id: HelmetId,
    },
    HelmetRemoval {
        helmet_id: HelmetId,
    },
    HelmetRewear {
        helmet_id: HelmetId,
    },
}

impl HazardKind {
    pub fn helmet(&self) -> Option<&HelmetId> {
        match self {
            HazardKind::Fall { helmet_id }
            | HazardKind::HelmetRemoval { helmet_id }
            | HazardKind::HelmetRewear { helmet_id } => Some(helmet_id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardEventSpec {
    pub kind: HazardKind,
    pub onset: Millis,
    pub location: ZoneId,
    /// 0 means the event persists.
    #[serde(default)]
    pub duration: Millis,
}

impl HazardEventSpec {
    pub fn validate(&self) -> Result<(), String> {
        let finite_pos = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{what} must be > 0, got {v}"))
            }
        };
        match &self.kind {
            HazardKind::GasLeak {
                magnitude,
                rise_time_constant,
                ..
            } => {
                finite_pos(*magnitude, "magnitude")?;
                finite_pos(*rise_time_constant, "rise_time_constant")
            }
            HazardKind::TempRamp { target, ramp_rate } => {
                if !target.is_finite() {
                    return Err("target must be finite".into());
                }
                finite_pos(*ramp_rate, "ramp_rate")
            }
            HazardKind::NoiseBurst { level, duration } => {
                if !(level.is_finite() && *level >= 0.0) {
                    return Err(format!("level must be >= 0 dB, got {level}"));
                }
                finite_pos(*duration, "duration")
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn end(&self) -> Option<Millis> {
        (self.duration > 0).then(|| self.onset + self.duration)
    }

    /// For noise bursts the burst length wins over the event duration.
    pub fn effective_duration(&self) -> Millis {
        match self.kind {
            HazardKind::NoiseBurst { duration, .. } => (duration * 1000.0).round() as Millis,
            _ => self.duration,
        }
    }

    pub(crate) fn is_active(&self, t: Millis) -> bool {
        let d = self.effective_duration();
        t >= self.onset && (d == 0 || t < self.onset + d)
    }

    /// Additive contribution of a gas leak at `t`: first-order rise, then
    /// first-order decay once the duration expires.
    pub(crate) fn gas_contribution(&self, t: Millis) -> f64 {
        let HazardKind::GasLeak {
            magnitude,
            rise_time_constant,
            ..
        } = self.kind
        else {
            return 0.0;
        };
        if t < self.onset {
            return 0.0;
        }
        let tau_ms = rise_time_constant * 1000.0;
        let rise = |dt: Millis| magnitude * (1.0 - (-(dt as f64) / tau_ms).exp());
        match self.end() {
            Some(end) if t >= end => rise(self.duration) * (-((t - end) as f64) / tau_ms).exp(),
            _ => rise(t - self.onset),
        }
    }

    /// Temperature this ramp imposes at `t`, or `None` before onset.
    pub(crate) fn temperature_curve(&self, baseline: f64, t: Millis) -> Option<f64> {
        let HazardKind::TempRamp { target, ramp_rate } = self.kind else {
            return None;
        };
        if t < self.onset {
            return None;
        }
        let span = (target - baseline).abs();
        let sign = (target - baseline).signum();
        let at = |elapsed_ms: Millis| {
            baseline + sign * (ramp_rate * elapsed_ms as f64 / 1000.0).min(span)
        };
        match self.end() {
            Some(end) if t >= end => {
                let held = at(self.duration);
                let back = (ramp_rate * (t - end) as f64 / 1000.0).min((held - baseline).abs());
                Some(held - sign * back)
            }
            _ => Some(at(t - self.onset)),
        }
    }
}

/// Accelerometer trace produced by a scripted fall: free fall, one impact
/// spike, then rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FallProfile {
    pub free_fall_g: f64,
    pub free_fall_ms: Millis,
    pub impact_g: f64,
    pub impact_ms: Millis,
    pub rest_g: f64,
}

impl Default for FallProfile {
    fn default() -> Self {
        Self {
            free_fall_g: 0.05,
            free_fall_ms: 400,
            impact_g: 4.5,
            impact_ms: 100,
            rest_g: 1.0,
        }
    }
}
