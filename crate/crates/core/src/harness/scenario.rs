//! Scenario files: parsing with located errors, then validation into the
//! pieces a run needs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{is_tick_aligned, Millis, TICK_MS};
use crate::control::ControlConfig;
use crate::env::{FallProfile, HazardEventSpec, HelmetPlacement, MineEnvironment, Zone, ZoneMap};
use crate::helmet::{
    BatteryMode, FallConfig, HelmetConfig, SensorKind, SensorSpec, Technology, ThresholdConfig,
};
use crate::net::{profiles_with, ProfileOverride, ProtocolName, ProtocolProfile};
use crate::types::{HelmetId, OperatorId, ZoneId};

const DEMO_MINE: &str = include_str!("../../scenarios/demo-mine.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}, column {column}, at `{path}`: {message}")]
    Parse {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },
    #[error("`{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, reason: impl ToString) -> Self {
        ScenarioError::Invalid {
            field: field.into(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorOverride {
    pub technology: Option<Technology>,
    pub lag_time_constant: Option<f64>,
    pub noise_stddev: Option<f64>,
    pub drift_rate: Option<f64>,
    pub sample_period: Option<Millis>,
}

impl SensorOverride {
    pub fn apply(&self, mut spec: SensorSpec) -> SensorSpec {
        if let Some(t) = self.technology {
            spec.technology = t;
            spec.lag_time_constant = t.default_lag_s();
        }
        if let Some(v) = self.lag_time_constant {
            spec.lag_time_constant = v;
        }
        if let Some(v) = self.noise_stddev {
            spec.noise_stddev = v;
        }
        if let Some(v) = self.drift_rate {
            spec.drift_rate = v;
        }
        if let Some(v) = self.sample_period {
            spec.sample_period = v;
        }
        spec
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryOverride {
    pub charge: Option<f64>,
    pub mode: Option<BatteryMode>,
    pub active_drain: Option<f64>,
    pub sleep_drain: Option<f64>,
}

impl BatteryOverride {
    pub fn apply(&self, mut b: crate::helmet::BatteryState) -> crate::helmet::BatteryState {
        if let Some(v) = self.charge {
            b.charge = v;
        }
        if let Some(v) = self.mode {
            b.mode = v;
        }
        if let Some(v) = self.active_drain {
            b.active_drain = v;
        }
        if let Some(v) = self.sleep_drain {
            b.sleep_drain = v;
        }
        b
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlOverride {
    pub fusion_window_ms: Option<Millis>,
    pub stale_after_ms: Option<Millis>,
    pub offline_after_ms: Option<Millis>,
    pub escalation_timeout_ms: Option<Millis>,
    pub auto_resolve_clear_ms: Option<Millis>,
    pub low_battery_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorEntry {
    pub operator_id: OperatorId,
    pub token: String,
}

/// A scripted operator that acknowledges (and optionally resolves) every
/// alert after a fixed delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisorScript {
    pub operator_id: OperatorId,
    pub ack_delay_ms: Millis,
    #[serde(default)]
    pub resolve_delay_ms: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon_ms: Millis,
    #[serde(default)]
    pub scenario_id: Option<String>,
    #[serde(default)]
    pub base_station: [f64; 2],
    #[serde(default)]
    pub report_interval_ms: Option<Millis>,
    #[serde(default)]
    pub filter_alpha: Option<f64>,
    #[serde(default)]
    pub removal_debounce: Option<u32>,
    #[serde(default)]
    pub fall_latch_ms: Option<Millis>,
    #[serde(default)]
    pub fall: Option<FallConfig>,
    #[serde(default)]
    pub fall_profile: Option<FallProfile>,
    /// Merged over the default helmet thresholds.
    #[serde(default)]
    pub thresholds: Option<ThresholdConfig>,
    /// Merged over the effective helmet thresholds.
    #[serde(default)]
    pub central_thresholds: Option<ThresholdConfig>,
    #[serde(default)]
    pub sensors: BTreeMap<SensorKind, SensorOverride>,
    #[serde(default)]
    pub battery: BatteryOverride,
    #[serde(default)]
    pub protocol: BTreeMap<ProtocolName, ProfileOverride>,
    #[serde(default)]
    pub control: ControlOverride,
    #[serde(default)]
    pub operators: Vec<OperatorEntry>,
    #[serde(default)]
    pub supervisor: Option<SupervisorScript>,
    /// Fixed match window for scoring; by default each hazard's duration
    /// plus 60 s.
    #[serde(default)]
    pub match_window_ms: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelmetEntry {
    pub helmet_id: HelmetId,
    pub zone_id: ZoneId,
    pub position: [f64; 2],
    #[serde(default = "default_protocol")]
    pub protocol: ProtocolName,
    /// Bearer token for ingest; defaults to the helmet id.
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default)]
    pub battery: BatteryOverride,
    /// A real helmet feeding the live ingest endpoints; it is registered
    /// with the control unit but not simulated.
    #[serde(default)]
    pub external: bool,
}

fn default_protocol() -> ProtocolName {
    ProtocolName::Wifi
}

impl HelmetEntry {
    pub fn token(&self) -> String {
        self.token
            .clone()
            .unwrap_or_else(|| self.helmet_id.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub zones: Vec<Zone>,
    pub helmets: Vec<HelmetEntry>,
    #[serde(default)]
    pub events: Vec<HazardEventSpec>,
    pub config: ScenarioConfig,
}

impl Scenario {
    /// Parse and validate a scenario document.
    pub fn from_json_str(text: &str) -> Result<Scenario, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ScenarioError::Parse {
                line: inner.line(),
                column: inner.column(),
                path,
                message: inner.to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// The bundled demonstration mine.
    pub fn demo() -> Scenario {
        Scenario::from_json_str(DEMO_MINE).expect("bundled demo scenario is valid")
    }

    pub fn demo_json() -> &'static str {
        DEMO_MINE
    }

    pub fn id(&self) -> &str {
        self.config.scenario_id.as_deref().unwrap_or("scenario")
    }

    pub fn horizon(&self) -> Millis {
        self.config.horizon_ms
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let h = self.config.horizon_ms;
        if h == 0 || !is_tick_aligned(h) {
            return Err(ScenarioError::invalid(
                "config.horizon_ms",
                format!("must be a positive multiple of {TICK_MS} ms, got {h}"),
            ));
        }
        self.environment()?;
        self.profiles()?;
        for (i, entry) in self.helmets.iter().enumerate() {
            self.helmet_config(entry)
                .map_err(|e| ScenarioError::invalid(format!("helmets[{i}]"), e))?;
        }
        self.control_config()?;
        let mut ops = BTreeMap::new();
        for (i, op) in self.config.operators.iter().enumerate() {
            if op.token.is_empty() {
                return Err(ScenarioError::invalid(
                    format!("config.operators[{i}].token"),
                    "must not be empty",
                ));
            }
            if ops.insert(op.token.clone(), ()).is_some() {
                return Err(ScenarioError::invalid(
                    format!("config.operators[{i}].token"),
                    "duplicate token",
                ));
            }
        }
        Ok(())
    }

    pub fn zone_map(&self) -> ZoneMap {
        ZoneMap {
            zones: self.zones.clone(),
            helmets: self
                .helmets
                .iter()
                .map(|h| HelmetPlacement {
                    helmet_id: h.helmet_id.clone(),
                    zone_id: h.zone_id.clone(),
                    position: h.position,
                })
                .collect(),
        }
    }

    /// The ground-truth environment with every scripted event applied.
    pub fn environment(&self) -> Result<MineEnvironment, ScenarioError> {
        let mut env = MineEnvironment::new(&self.zone_map())
            .map_err(|e| ScenarioError::invalid("zones", e))?;
        if let Some(p) = self.config.fall_profile {
            env = env.with_fall_profile(p);
        }
        for (i, event) in self.events.iter().enumerate() {
            if event.onset >= self.config.horizon_ms {
                tracing::warn!(
                    index = i,
                    onset = event.onset,
                    "event starts after the horizon"
                );
            }
            env.apply_event(event.clone())
                .map_err(|e| ScenarioError::invalid(format!("events[{i}]"), e))?;
        }
        Ok(env)
    }

    pub fn profiles(&self) -> Result<BTreeMap<ProtocolName, ProtocolProfile>, ScenarioError> {
        profiles_with(&self.config.protocol)
            .map_err(|e| ScenarioError::invalid("config.protocol", e))
    }

    /// Effective helmet configuration shared by every helmet before
    /// per-helmet overrides.
    pub fn base_helmet_config(&self) -> HelmetConfig {
        let c = &self.config;
        let mut cfg = HelmetConfig::default();
        for (kind, o) in &c.sensors {
            let spec = cfg
                .sensors
                .get(kind)
                .copied()
                .unwrap_or_else(|| SensorSpec::default_for(*kind));
            cfg.sensors.insert(*kind, o.apply(spec));
        }
        if let Some(t) = &c.thresholds {
            cfg.thresholds = cfg.thresholds.merged(t);
        }
        if let Some(v) = c.filter_alpha {
            cfg.filter_alpha = v;
        }
        if let Some(v) = c.removal_debounce {
            cfg.removal_debounce = v;
        }
        if let Some(v) = c.report_interval_ms {
            cfg.report_interval_ms = v;
        }
        if let Some(v) = c.fall_latch_ms {
            cfg.fall_latch_ms = v;
        }
        if let Some(f) = c.fall {
            cfg.fall = f;
        }
        cfg.battery = c.battery.apply(cfg.battery);
        cfg
    }

    pub fn helmet_config(&self, entry: &HelmetEntry) -> Result<HelmetConfig, String> {
        let mut cfg = self.base_helmet_config();
        cfg.battery = entry.battery.apply(cfg.battery);
        let profile = self
            .profiles()
            .map_err(|e| e.to_string())?
            .remove(&entry.protocol)
            .expect("every protocol has a profile");
        cfg.battery.tx_cost = profile.tx_energy;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn control_config(&self) -> Result<ControlConfig, ScenarioError> {
        let o = &self.config.control;
        let helmet = self.base_helmet_config().thresholds;
        let mut cfg = ControlConfig {
            central_thresholds: match &self.config.central_thresholds {
                Some(t) => helmet.merged(t),
                None => helmet,
            },
            ..ControlConfig::default()
        };
        if let Some(v) = o.fusion_window_ms {
            cfg.fusion_window_ms = v;
        }
        if let Some(v) = o.stale_after_ms {
            cfg.stale_after_ms = v;
        }
        if let Some(v) = o.offline_after_ms {
            cfg.offline_after_ms = v;
        }
        if let Some(v) = o.escalation_timeout_ms {
            cfg.escalation_timeout_ms = v;
        }
        if let Some(v) = o.auto_resolve_clear_ms {
            cfg.auto_resolve_clear_ms = v;
        }
        if let Some(v) = o.low_battery_pct {
            cfg.low_battery_pct = v;
        }
        cfg.validate()
            .map_err(|e| ScenarioError::invalid("config.control", e))?;
        Ok(cfg)
    }
}
