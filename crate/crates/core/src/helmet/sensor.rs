//! Transducer models: first-order lag, additive Gaussian noise, linear drift.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clock::{Millis, MS_PER_HOUR, TICK_MS};
use crate::types::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Co,
    Ch4,
    Lpg,
    Temperature,
    Humidity,
    Noise,
    Accelerometer,
    LimitSwitch,
}

impl SensorKind {
    pub fn channel(self) -> Option<Channel> {
        match self {
            SensorKind::Co => Some(Channel::Co),
            SensorKind::Ch4 => Some(Channel::Ch4),
            SensorKind::Lpg => Some(Channel::Lpg),
            SensorKind::Temperature => Some(Channel::Temperature),
            SensorKind::Humidity => Some(Channel::Humidity),
            SensorKind::Noise => Some(Channel::Noise),
            SensorKind::Accelerometer | SensorKind::LimitSwitch => None,
        }
    }

    pub fn for_channel(channel: Channel) -> SensorKind {
        match channel {
            Channel::Co => SensorKind::Co,
            Channel::Ch4 => SensorKind::Ch4,
            Channel::Lpg => SensorKind::Lpg,
            Channel::Temperature => SensorKind::Temperature,
            Channel::Humidity => SensorKind::Humidity,
            Channel::Noise => SensorKind::Noise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technology {
    Electrochemical,
    Semiconductor,
    Thermistor,
    Rtd,
    Capacitive,
    SoundLevelMeter,
    MemsAccel,
    MechanicalSwitch,
}

impl Technology {
    /// Default first-order lag in seconds. Electrochemical cells respond
    /// faster than metal-oxide semiconductor elements.
    pub fn default_lag_s(self) -> f64 {
        match self {
            Technology::Electrochemical => 5.0,
            Technology::Semiconductor => 30.0,
            Technology::Thermistor | Technology::Rtd => 2.0,
            Technology::Capacitive => 8.0,
            Technology::SoundLevelMeter => 0.125,
            Technology::MemsAccel | Technology::MechanicalSwitch => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub kind: SensorKind,
    pub technology: Technology,
    /// seconds
    pub lag_time_constant: f64,
    /// in the channel's unit
    pub noise_stddev: f64,
    /// channel unit per simulated hour
    pub drift_rate: f64,
    /// ms, a multiple of the clock tick
    pub sample_period: Millis,
}

impl SensorSpec {
    pub fn default_for(kind: SensorKind) -> SensorSpec {
        // LPG uses the same electrochemical-class model as CO.
        let (technology, noise_stddev, sample_period) = match kind {
            SensorKind::Co => (Technology::Electrochemical, 1.0, 1000),
            SensorKind::Ch4 => (Technology::Semiconductor, 0.01, 1000),
            SensorKind::Lpg => (Technology::Electrochemical, 10.0, 1000),
            SensorKind::Temperature => (Technology::Thermistor, 0.1, 1000),
            SensorKind::Humidity => (Technology::Capacitive, 0.5, 1000),
            SensorKind::Noise => (Technology::SoundLevelMeter, 0.5, 500),
            SensorKind::Accelerometer => (Technology::MemsAccel, 0.02, TICK_MS),
            SensorKind::LimitSwitch => (Technology::MechanicalSwitch, 0.0, TICK_MS),
        };
        SensorSpec {
            kind,
            technology,
            lag_time_constant: technology.default_lag_s(),
            noise_stddev,
            drift_rate: 0.0,
            sample_period,
        }
    }

    /// An ideal transducer: no lag, noise or drift.
    pub fn ideal(kind: SensorKind, sample_period: Millis) -> SensorSpec {
        SensorSpec {
            lag_time_constant: 0.0,
            noise_stddev: 0.0,
            drift_rate: 0.0,
            sample_period,
            ..SensorSpec::default_for(kind)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.lag_time_constant.is_finite() && self.lag_time_constant >= 0.0) {
            return Err(format!("{:?}: lag_time_constant must be >= 0", self.kind));
        }
        if !(self.noise_stddev.is_finite() && self.noise_stddev >= 0.0) {
            return Err(format!("{:?}: noise_stddev must be >= 0", self.kind));
        }
        if !self.drift_rate.is_finite() {
            return Err(format!("{:?}: drift_rate must be finite", self.kind));
        }
        if self.sample_period == 0 || !self.sample_period.is_multiple_of(TICK_MS) {
            return Err(format!(
                "{:?}: sample_period must be a positive multiple of {TICK_MS} ms",
                self.kind
            ));
        }
        Ok(())
    }

    pub fn samples_at(&self, t: Millis) -> bool {
        t.is_multiple_of(self.sample_period)
    }
}

/// Lag and drift accumulators of one transducer.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorState {
    lagged: f64,
    drift: f64,
    last_t: Millis,
}

impl SensorState {
    /// A sensor in equilibrium with `value` at time `at`.
    pub fn settled(value: f64, at: Millis) -> Self {
        Self {
            lagged: value,
            drift: 0.0,
            last_t: at,
        }
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }
}

/// Read a transducer at `t` given the ground truth at `t`.
///
/// The lag is integrated exactly for a truth held constant since the last
/// read; drift integrates linearly; noise is added to the output only.
pub fn read_sensor<R: Rng + ?Sized>(
    spec: &SensorSpec,
    truth: f64,
    state: &mut SensorState,
    t: Millis,
    rng: &mut R,
) -> f64 {
    let dt = t.saturating_sub(state.last_t);
    state.last_t = state.last_t.max(t);
    if spec.lag_time_constant == 0.0 {
        state.lagged = truth;
    } else {
        let decay = (-(dt as f64) / (spec.lag_time_constant * 1000.0)).exp();
        state.lagged = truth + (state.lagged - truth) * decay;
    }
    state.drift += spec.drift_rate * dt as f64 / MS_PER_HOUR;
    let mut value = state.lagged + state.drift;
    if spec.noise_stddev > 0.0 {
        let normal = Normal::new(0.0, spec.noise_stddev).expect("validated stddev");
        value += normal.sample(rng);
    }
    clamp_physical(spec.kind, value)
}

fn clamp_physical(kind: SensorKind, value: f64) -> f64 {
    match kind {
        SensorKind::Humidity | SensorKind::Ch4 => value.clamp(0.0, 100.0),
        SensorKind::Temperature => value,
        _ => value.max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamDomain};

    fn rng() -> crate::rng::SimRng {
        stream(StreamDomain::Sensor, 1, "t")
    }

    #[test]
    fn identity_transducer() {
        let spec = SensorSpec::ideal(SensorKind::Temperature, 1000);
        let mut state = SensorState::settled(0.0, 0);
        assert_eq!(read_sensor(&spec, 25.0, &mut state, 1000, &mut rng()), 25.0);
    }

    #[test]
    fn first_order_step_response() {
        let spec = SensorSpec {
            lag_time_constant: 30.0,
            ..SensorSpec::ideal(SensorKind::Co, 1000)
        };
        let mut state = SensorState::settled(0.0, 0);
        let mut r = rng();
        let mut last = 0.0;
        for step in 0..=30 {
            last = read_sensor(&spec, 100.0, &mut state, step * 1000, &mut r);
        }
        assert!((last - 100.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-9);
        assert!((last - 63.2).abs() < 0.05);
    }

    #[test]
    fn lag_is_independent_of_sampling_granularity() {
        let spec = SensorSpec {
            lag_time_constant: 30.0,
            ..SensorSpec::ideal(SensorKind::Co, 100)
        };
        let mut coarse = SensorState::settled(0.0, 0);
        let mut fine = SensorState::settled(0.0, 0);
        let mut r = rng();
        let a = read_sensor(&spec, 100.0, &mut coarse, 30_000, &mut r);
        let mut b = 0.0;
        for k in 1..=300 {
            b = read_sensor(&spec, 100.0, &mut fine, k * 100, &mut r);
        }
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn linear_drift() {
        let spec = SensorSpec {
            drift_rate: 2.0,
            ..SensorSpec::ideal(SensorKind::Co, 1000)
        };
        let mut state = SensorState::settled(50.0, 0);
        let mut r = rng();
        let mut v = 0.0;
        for minute in 1..=180 {
            v = read_sensor(&spec, 50.0, &mut state, minute * 60_000, &mut r);
        }
        assert!((v - 56.0).abs() < 1e-9);
        let mut jump = SensorState::settled(50.0, 0);
        let at_three_hours = read_sensor(&spec, 50.0, &mut jump, 3 * 3_600_000, &mut r);
        assert!((at_three_hours - 56.0).abs() < 1e-9);
    }

    #[test]
    fn noise_has_requested_spread() {
        let spec = SensorSpec {
            noise_stddev: 2.0,
            ..SensorSpec::ideal(SensorKind::Co, 100)
        };
        let mut state = SensorState::settled(100.0, 0);
        let mut r = rng();
        let n = 20_000;
        let xs: Vec<f64> = (0..n)
            .map(|k| read_sensor(&spec, 100.0, &mut state, k * 100, &mut r))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 100.0).abs() < 0.1);
        assert!((var.sqrt() - 2.0).abs() < 0.1);
    }

    #[test]
    fn semiconductor_is_slower_than_electrochemical() {
        assert!(
            Technology::Semiconductor.default_lag_s() > Technology::Electrochemical.default_lag_s()
        );
    }

    #[test]
    fn validation() {
        let mut spec = SensorSpec::default_for(SensorKind::Co);
        assert!(spec.validate().is_ok());
        spec.sample_period = 150;
        assert!(spec.validate().is_err());
        spec.sample_period = 0;
        assert!(spec.validate().is_err());
        let neg = SensorSpec {
            noise_stddev: -1.0,
            ..SensorSpec::default_for(SensorKind::Co)
        };
        assert!(neg.validate().is_err());
    }
}
