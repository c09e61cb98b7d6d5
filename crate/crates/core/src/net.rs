//! Star-topology wireless link model.
//!
//! Loss is a step at the protocol's maximum range plus a flat in-range
//! base loss. Latency is a mean plus bounded uniform jitter, rounded up to
//! the next clock tick.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{ceil_to_tick, Millis};
use crate::helmet::TelemetryPacket;
use crate::rng::{stream, SimRng, StreamDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Wifi,
    Bluetooth,
    Zigbee,
    Lorawan,
}

impl ProtocolName {
    pub const ALL: [ProtocolName; 4] = [
        ProtocolName::Wifi,
        ProtocolName::Bluetooth,
        ProtocolName::Zigbee,
        ProtocolName::Lorawan,
    ];
}

impl fmt::Display for ProtocolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProtocolName::Wifi => "wifi",
            ProtocolName::Bluetooth => "bluetooth",
            ProtocolName::Zigbee => "zigbee",
            ProtocolName::Lorawan => "lorawan",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataRateClass {
    High,
    Medium,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolProfile {
    pub name: ProtocolName,
    /// metres
    pub max_range: f64,
    pub data_rate_class: DataRateClass,
    pub base_loss: f64,
    /// ms
    pub latency_mean: f64,
    /// ms, half-width of the uniform jitter
    pub latency_jitter: f64,
    /// percent battery per packet
    pub tx_energy: f64,
}

impl ProtocolProfile {
    /// Default link parameters. Only the ranges are protocol facts; loss,
    /// latency and energy are tunable defaults.
    pub fn default_for(name: ProtocolName) -> ProtocolProfile {
        let (max_range, data_rate_class, base_loss, latency_mean, tx_energy) = match name {
            ProtocolName::Wifi => (100.0, DataRateClass::High, 0.01, 20.0, 0.010),
            ProtocolName::Bluetooth => (10.0, DataRateClass::Medium, 0.01, 40.0, 0.004),
            ProtocolName::Zigbee => (100.0, DataRateClass::Low, 0.02, 60.0, 0.003),
            ProtocolName::Lorawan => (15_000.0, DataRateClass::Low, 0.02, 800.0, 0.006),
        };
        ProtocolProfile {
            name,
            max_range,
            data_rate_class,
            base_loss,
            latency_mean,
            latency_jitter: 0.0,
            tx_energy,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(format!("{}: max_range must be > 0", self.name));
        }
        if !(0.0..1.0).contains(&self.base_loss) {
            return Err(format!("{}: base_loss must be within [0, 1)", self.name));
        }
        if !(self.latency_mean.is_finite() && self.latency_mean >= 0.0) {
            return Err(format!("{}: latency_mean must be >= 0", self.name));
        }
        if !(self.latency_jitter.is_finite() && self.latency_jitter >= 0.0) {
            return Err(format!("{}: latency_jitter must be >= 0", self.name));
        }
        if !(self.tx_energy.is_finite() && self.tx_energy >= 0.0) {
            return Err(format!("{}: tx_energy must be >= 0", self.name));
        }
        Ok(())
    }
}

/// Partial profile used for scenario overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOverride {
    pub max_range: Option<f64>,
    pub data_rate_class: Option<DataRateClass>,
    pub base_loss: Option<f64>,
    pub latency_mean: Option<f64>,
    pub latency_jitter: Option<f64>,
    pub tx_energy: Option<f64>,
}

impl ProfileOverride {
    pub fn apply(&self, mut p: ProtocolProfile) -> ProtocolProfile {
        if let Some(v) = self.max_range {
            p.max_range = v;
        }
        if let Some(v) = self.data_rate_class {
            p.data_rate_class = v;
        }
        if let Some(v) = self.base_loss {
            p.base_loss = v;
        }
        if let Some(v) = self.latency_mean {
            p.latency_mean = v;
        }
        if let Some(v) = self.latency_jitter {
            p.latency_jitter = v;
        }
        if let Some(v) = self.tx_energy {
            p.tx_energy = v;
        }
        p
    }
}

/// The four default profiles with optional overrides applied.
pub fn profiles_with(
    overrides: &BTreeMap<ProtocolName, ProfileOverride>,
) -> Result<BTreeMap<ProtocolName, ProtocolProfile>, String> {
    ProtocolName::ALL
        .into_iter()
        .map(|name| {
            let base = ProtocolProfile::default_for(name);
            let p = overrides.get(&name).map_or(base, |o| o.apply(base));
            p.validate().map(|_| (name, p))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    OutOfRange,
    RandomLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeliveryOutcome {
    Delivered { arrive_at: Millis },
    Dropped { reason: DropReason },
}

/// Result of one transmission attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub outcome: DeliveryOutcome,
    /// Battery percent charged to the sender, whatever the outcome.
    pub energy: f64,
}

pub fn loss_probability(distance: f64, profile: &ProtocolProfile) -> f64 {
    if distance > profile.max_range {
        1.0
    } else {
        profile.base_loss
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// One helmet's link to the base station, owning its own random stream.
#[derive(Debug, Clone)]
pub struct Link {
    pub distance: f64,
    pub profile: ProtocolProfile,
    rng: SimRng,
}

impl Link {
    pub fn new(distance: f64, profile: ProtocolProfile, seed: u64, helmet_id: &str) -> Self {
        Self {
            distance,
            profile,
            rng: stream(StreamDomain::Link, seed, helmet_id),
        }
    }

    pub fn with_rng(distance: f64, profile: ProtocolProfile, rng: SimRng) -> Self {
        Self {
            distance,
            profile,
            rng,
        }
    }

    pub fn deliver(&mut self, _packet: &TelemetryPacket, t: Millis) -> Delivery {
        deliver(self.distance, &self.profile, &mut self.rng, t)
    }
}

/// Attempt one transmission sent at tick `t`.
pub fn deliver<R: Rng + ?Sized>(
    distance: f64,
    profile: &ProtocolProfile,
    rng: &mut R,
    t: Millis,
) -> Delivery {
    let energy = profile.tx_energy;
    let p = loss_probability(distance, profile);
    if p >= 1.0 {
        return Delivery {
            outcome: DeliveryOutcome::Dropped {
                reason: DropReason::OutOfRange,
            },
            energy,
        };
    }
    if p > 0.0 && rng.random::<f64>() < p {
        return Delivery {
            outcome: DeliveryOutcome::Dropped {
                reason: DropReason::RandomLoss,
            },
            energy,
        };
    }
    let jitter = if profile.latency_jitter > 0.0 {
        rng.random_range(-profile.latency_jitter..=profile.latency_jitter)
    } else {
        0.0
    };
    let latency = (profile.latency_mean + jitter).max(0.0).ceil() as Millis;
    Delivery {
        outcome: DeliveryOutcome::Delivered {
            arrive_at: ceil_to_tick(t + latency),
        },
        energy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn lossless(name: ProtocolName) -> ProtocolProfile {
        ProtocolProfile {
            base_loss: 0.0,
            ..ProtocolProfile::default_for(name)
        }
    }

    #[test]
    fn published_ranges() {
        assert_eq!(
            ProtocolProfile::default_for(ProtocolName::Wifi).max_range,
            100.0
        );
        assert_eq!(
            ProtocolProfile::default_for(ProtocolName::Bluetooth).max_range,
            10.0
        );
        assert_eq!(
            ProtocolProfile::default_for(ProtocolName::Zigbee).max_range,
            100.0
        );
        assert_eq!(
            ProtocolProfile::default_for(ProtocolName::Lorawan).max_range,
            15_000.0
        );
    }

    #[test]
    fn loss_probability_examples() {
        let wifi = ProtocolProfile::default_for(ProtocolName::Wifi);
        assert_eq!(loss_probability(120.0, &wifi), 1.0);
        assert_eq!(
            loss_probability(5.0, &lossless(ProtocolName::Bluetooth)),
            0.0
        );
        let lora = ProtocolProfile::default_for(ProtocolName::Lorawan);
        assert_eq!(lora.base_loss, 0.02);
        assert_eq!(loss_probability(14_000.0, &lora), 0.02);
        assert_eq!(loss_probability(100.0, &wifi), wifi.base_loss);
    }

    #[test]
    fn forced_drop_still_costs_energy() {
        let wifi = ProtocolProfile::default_for(ProtocolName::Wifi);
        let mut rng = stream(StreamDomain::Link, 0, "h");
        let d = deliver(500.0, &wifi, &mut rng, 0);
        assert_eq!(
            d.outcome,
            DeliveryOutcome::Dropped {
                reason: DropReason::OutOfRange
            }
        );
        assert_eq!(d.energy, wifi.tx_energy);
    }

    #[test]
    fn deterministic_latency() {
        let p = ProtocolProfile {
            latency_mean: 200.0,
            ..lossless(ProtocolName::Wifi)
        };
        let mut rng = stream(StreamDomain::Link, 0, "h");
        assert_eq!(
            deliver(10.0, &p, &mut rng, 1000).outcome,
            DeliveryOutcome::Delivered { arrive_at: 1200 }
        );
    }

    #[test]
    fn latency_rounds_up_to_tick() {
        let p = ProtocolProfile {
            latency_mean: 20.0,
            ..lossless(ProtocolName::Wifi)
        };
        let mut rng = stream(StreamDomain::Link, 0, "h");
        assert_eq!(
            deliver(10.0, &p, &mut rng, 1000).outcome,
            DeliveryOutcome::Delivered { arrive_at: 1100 }
        );
    }

    #[test]
    fn empirical_drop_rate_matches_base_loss() {
        let p = ProtocolProfile {
            base_loss: 0.5,
            ..ProtocolProfile::default_for(ProtocolName::Wifi)
        };
        let mut rng = stream(StreamDomain::Link, 2024, "h1");
        let trials = 10_000;
        let drops = (0..trials)
            .filter(|_| {
                matches!(
                    deliver(1.0, &p, &mut rng, 0).outcome,
                    DeliveryOutcome::Dropped { .. }
                )
            })
            .count();
        // binomial sd = sqrt(0.25 / 10000) = 0.005, so 0.02 is four sigma
        let frac = drops as f64 / trials as f64;
        assert!((frac - 0.5).abs() <= 0.02, "drop fraction {frac}");
    }

    #[test]
    fn jitter_is_bounded() {
        let p = ProtocolProfile {
            latency_mean: 300.0,
            latency_jitter: 150.0,
            ..lossless(ProtocolName::Wifi)
        };
        let mut rng = stream(StreamDomain::Link, 5, "h");
        for _ in 0..1000 {
            match deliver(1.0, &p, &mut rng, 0).outcome {
                DeliveryOutcome::Delivered { arrive_at } => {
                    assert!((100..=500).contains(&arrive_at));
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn overrides_validate() {
        let mut o = BTreeMap::new();
        o.insert(
            ProtocolName::Wifi,
            ProfileOverride {
                base_loss: Some(1.0),
                ..Default::default()
            },
        );
        assert!(profiles_with(&o).is_err());
        o.insert(
            ProtocolName::Wifi,
            ProfileOverride {
                base_loss: Some(0.0),
                ..Default::default()
            },
        );
        assert_eq!(
            profiles_with(&o).unwrap()[&ProtocolName::Wifi].base_loss,
            0.0
        );
    }

    proptest::proptest! {
        #[test]
        fn loss_is_monotone_in_distance(a in 0.0f64..20_000.0, b in 0.0f64..20_000.0) {
            for name in ProtocolName::ALL {
                let p = ProtocolProfile::default_for(name);
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                proptest::prop_assert!(loss_probability(lo, &p) <= loss_probability(hi, &p));
            }
        }
    }
}
