//! Ground-truth mine environment.
//!
//! The environment is a zone map plus a script of hazard events. Once the
//! script is loaded, [`MineEnvironment::sample`] is a pure function of
//! `(zone, t)`; nothing here mutates while the clock runs.

mod events;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use events::{FallProfile, GasChannel, HazardEventSpec, HazardKind};

use crate::clock::Millis;
use crate::types::{Channel, HelmetId, ZoneId};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("unknown zone `{0}`")]
    UnknownZone(ZoneId),
    #[error("unknown helmet `{0}`")]
    UnknownHelmet(HelmetId),
    #[error("duplicate zone id `{0}`")]
    DuplicateZone(ZoneId),
    #[error("duplicate helmet id `{0}`")]
    DuplicateHelmet(HelmetId),
    #[error("helmet `{helmet}` is placed in zone `{placed}` but the event targets zone `{event}`")]
    HelmetZoneMismatch {
        helmet: HelmetId,
        placed: ZoneId,
        event: ZoneId,
    },
    #[error("event onset {onset} ms is before the environment floor {floor} ms")]
    OnsetInPast { onset: Millis, floor: Millis },
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("invalid ground truth for zone `{zone}`: {reason}")]
    InvalidBaseline { zone: ZoneId, reason: String },
}

/// Physical state of one zone at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// ppm
    pub co: f64,
    /// percent by volume
    pub ch4: f64,
    /// ppm
    pub lpg: f64,
    /// degrees Celsius
    pub temperature: f64,
    /// percent relative humidity
    pub humidity: f64,
    /// dB SPL
    pub noise: f64,
}

impl Default for GroundTruth {
    fn default() -> Self {
        Self {
            co: 0.0,
            ch4: 0.0,
            lpg: 0.0,
            temperature: 20.0,
            humidity: 50.0,
            noise: 60.0,
        }
    }
}

impl GroundTruth {
    pub fn get(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Co => self.co,
            Channel::Ch4 => self.ch4,
            Channel::Lpg => self.lpg,
            Channel::Temperature => self.temperature,
            Channel::Humidity => self.humidity,
            Channel::Noise => self.noise,
        }
    }

    pub fn set(&mut self, channel: Channel, value: f64) {
        match channel {
            Channel::Co => self.co = value,
            Channel::Ch4 => self.ch4 = value,
            Channel::Lpg => self.lpg = value,
            Channel::Temperature => self.temperature = value,
            Channel::Humidity => self.humidity = value,
            Channel::Noise => self.noise = value,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for c in Channel::ALL {
            if !self.get(c).is_finite() {
                return Err(format!("{c} is not finite"));
            }
        }
        if self.co < 0.0 || self.lpg < 0.0 {
            return Err("gas concentrations must be >= 0".into());
        }
        if !(0.0..=100.0).contains(&self.ch4) {
            return Err("ch4 must be within [0, 100] %vol".into());
        }
        if !(0.0..=100.0).contains(&self.humidity) {
            return Err("humidity must be within [0, 100] %RH".into());
        }
        if self.noise < 0.0 {
            return Err("noise must be >= 0 dB".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub zone_id: ZoneId,
    #[serde(default)]
    pub baseline: GroundTruth,
    /// Metres in the 2-D tunnel plan.
    #[serde(default)]
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelmetPlacement {
    pub helmet_id: HelmetId,
    pub zone_id: ZoneId,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ZoneMap {
    pub zones: Vec<Zone>,
    pub helmets: Vec<HelmetPlacement>,
}

impl ZoneMap {
    pub fn validate(&self) -> Result<(), EnvError> {
        let mut seen = BTreeMap::new();
        for zone in &self.zones {
            if seen.insert(zone.zone_id.clone(), ()).is_some() {
                return Err(EnvError::DuplicateZone(zone.zone_id.clone()));
            }
            zone.baseline
                .validate()
                .map_err(|reason| EnvError::InvalidBaseline {
                    zone: zone.zone_id.clone(),
                    reason,
                })?;
        }
        let mut helmets = BTreeMap::new();
        for placement in &self.helmets {
            if !seen.contains_key(&placement.zone_id) {
                return Err(EnvError::UnknownZone(placement.zone_id.clone()));
            }
            if helmets.insert(placement.helmet_id.clone(), ()).is_some() {
                return Err(EnvError::DuplicateHelmet(placement.helmet_id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ZoneState {
    baseline: GroundTruth,
    events: Vec<HazardEventSpec>,
}

/// The scripted mine: zones, helmet placements and hazard events.
#[derive(Debug, Clone)]
pub struct MineEnvironment {
    zones: BTreeMap<ZoneId, ZoneState>,
    placements: BTreeMap<HelmetId, HelmetPlacement>,
    helmet_events: BTreeMap<HelmetId, Vec<HazardEventSpec>>,
    fall_profile: FallProfile,
    floor: Millis,
}

impl MineEnvironment {
    pub fn new(map: &ZoneMap) -> Result<Self, EnvError> {
        map.validate()?;
        let zones = map
            .zones
            .iter()
            .map(|z| {
                (
                    z.zone_id.clone(),
                    ZoneState {
                        baseline: z.baseline,
                        events: Vec::new(),
                    },
                )
            })
            .collect();
        let placements = map
            .helmets
            .iter()
            .map(|p| (p.helmet_id.clone(), p.clone()))
            .collect();
        Ok(Self {
            zones,
            placements,
            helmet_events: BTreeMap::new(),
            fall_profile: FallProfile::default(),
            floor: 0,
        })
    }

    pub fn with_fall_profile(mut self, profile: FallProfile) -> Self {
        self.fall_profile = profile;
        self
    }

    /// Events with an onset before `floor` are rejected from now on.
    pub fn set_floor(&mut self, floor: Millis) {
        self.floor = floor;
    }

    /// Add a hazard event to the script. Gas leaks on the same channel add
    /// up; temperature ramps and noise bursts combine by maximum.
    pub fn apply_event(&mut self, event: HazardEventSpec) -> Result<(), EnvError> {
        event.validate().map_err(EnvError::InvalidEvent)?;
        if event.onset < self.floor {
            return Err(EnvError::OnsetInPast {
                onset: event.onset,
                floor: self.floor,
            });
        }
        if !self.zones.contains_key(&event.location) {
            return Err(EnvError::UnknownZone(event.location.clone()));
        }
        match event.kind.helmet() {
            Some(helmet) => {
                let placement = self
                    .placements
                    .get(helmet)
                    .ok_or_else(|| EnvError::UnknownHelmet(helmet.clone()))?;
                if placement.zone_id != event.location {
                    return Err(EnvError::HelmetZoneMismatch {
                        helmet: helmet.clone(),
                        placed: placement.zone_id.clone(),
                        event: event.location.clone(),
                    });
                }
                let list = self.helmet_events.entry(helmet.clone()).or_default();
                list.push(event);
                list.sort_by_key(|e| e.onset);
            }
            None => {
                let zone = self.zones.get_mut(&event.location).expect("checked above");
                zone.events.push(event);
            }
        }
        Ok(())
    }

    pub fn zone_ids(&self) -> impl Iterator<Item = &ZoneId> {
        self.zones.keys()
    }

    pub fn placement(&self, helmet: &HelmetId) -> Option<&HelmetPlacement> {
        self.placements.get(helmet)
    }

    pub fn placements(&self) -> impl Iterator<Item = &HelmetPlacement> {
        self.placements.values()
    }

    pub fn baseline(&self, zone: &ZoneId) -> Result<GroundTruth, EnvError> {
        self.zones
            .get(zone)
            .map(|z| z.baseline)
            .ok_or_else(|| EnvError::UnknownZone(zone.clone()))
    }

    /// Every scripted event, zone-level first then helmet-level, each group
    /// in insertion/onset order.
    pub fn events(&self) -> Vec<&HazardEventSpec> {
        let mut out: Vec<&HazardEventSpec> =
            self.zones.values().flat_map(|z| z.events.iter()).collect();
        out.extend(self.helmet_events.values().flatten());
        out
    }

    /// Ground truth of `zone` at simulated time `t`.
    pub fn sample(&self, zone: &ZoneId, t: Millis) -> Result<GroundTruth, EnvError> {
        let state = self
            .zones
            .get(zone)
            .ok_or_else(|| EnvError::UnknownZone(zone.clone()))?;
        let base = state.baseline;
        let mut truth = base;
        let mut temp_curve: Option<f64> = None;
        for event in &state.events {
            match &event.kind {
                HazardKind::GasLeak { gas, .. } => {
                    let c = gas.channel();
                    truth.set(c, truth.get(c) + event.gas_contribution(t));
                }
                HazardKind::TempRamp { .. } => {
                    if let Some(v) = event.temperature_curve(base.temperature, t) {
                        temp_curve = Some(temp_curve.map_or(v, |cur: f64| cur.max(v)));
                    }
                }
                HazardKind::NoiseBurst { level, .. } if event.is_active(t) => {
                    truth.noise = truth.noise.max(*level);
                }
                _ => {}
            }
        }
        if let Some(v) = temp_curve {
            truth.temperature = v;
        }
        truth.ch4 = truth.ch4.clamp(0.0, 100.0);
        truth.humidity = truth.humidity.clamp(0.0, 100.0);
        Ok(truth)
    }

    /// Acceleration magnitude (g) experienced by a helmet at `t`.
    pub fn accel_magnitude(&self, helmet: &HelmetId, t: Millis) -> f64 {
        let profile = &self.fall_profile;
        let mut g = profile.rest_g;
        for event in self.helmet_events.get(helmet).into_iter().flatten() {
            if !matches!(event.kind, HazardKind::Fall { .. }) || t < event.onset {
                continue;
            }
            let dt = t - event.onset;
            if dt < profile.free_fall_ms {
                g = profile.free_fall_g;
            } else if dt < profile.free_fall_ms + profile.impact_ms {
                g = profile.impact_g;
            }
        }
        g
    }

    /// Whether the helmet's limit switch is closed (helmet on the head).
    pub fn switch_closed(&self, helmet: &HelmetId, t: Millis) -> bool {
        let mut closed = true;
        for event in self.helmet_events.get(helmet).into_iter().flatten() {
            if t < event.onset {
                break;
            }
            match event.kind {
                HazardKind::HelmetRemoval { .. } => {
                    closed = event.duration > 0 && t >= event.onset + event.duration;
                }
                HazardKind::HelmetRewear { .. } => closed = true,
                _ => {}
            }
        }
        closed
    }

    /// How long an event's hazard lasts for scoring purposes, `None` when it
    /// persists to the end of the run.
    pub fn hazard_duration(&self, event: &HazardEventSpec) -> Option<Millis> {
        match &event.kind {
            HazardKind::NoiseBurst { .. } => Some(event.effective_duration()),
            HazardKind::Fall { .. } => Some(0),
            HazardKind::HelmetRemoval { helmet_id } => {
                if event.duration > 0 {
                    return Some(event.duration);
                }
                self.helmet_events
                    .get(helmet_id)
                    .into_iter()
                    .flatten()
                    .find(|e| {
                        matches!(e.kind, HazardKind::HelmetRewear { .. }) && e.onset > event.onset
                    })
                    .map(|e| e.onset - event.onset)
            }
            _ => (event.duration > 0).then_some(event.duration),
        }
    }
}
