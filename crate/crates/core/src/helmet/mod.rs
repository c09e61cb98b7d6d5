//! One simulated smart helmet.
//!
//! Per tick the node samples whichever sensors are due, filters and
//! thresholds the environmental channels, runs the fall and removal
//! detectors, drains its battery and decides whether to emit a packet.

mod battery;
mod fall;
mod filter;
mod packet;
mod removal;
mod sensor;
mod threshold;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

pub use battery::{BatteryMode, BatteryState};
pub use fall::{detect_fall, AccelSample, FallConfig};
pub use filter::Ewma;
pub use packet::{Reading, TelemetryPacket};
pub use removal::{detect_removal, RemovalDetector, WornTransition};
pub use sensor::{read_sensor, SensorKind, SensorSpec, SensorState, Technology};
pub use threshold::{
    detect_sequence, AlarmTransition, ChannelThreshold, HysteresisState, ThresholdConfig,
};

use crate::clock::{Millis, TICK_MS};
use crate::env::MineEnvironment;
use crate::rng::{stream, SimRng, StreamDomain};
use crate::types::{Channel, HelmetId, ZoneId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HelmetConfig {
    pub sensors: BTreeMap<SensorKind, SensorSpec>,
    pub thresholds: ThresholdConfig,
    pub filter_alpha: f64,
    pub fall: FallConfig,
    pub removal_debounce: u32,
    pub report_interval_ms: Millis,
    /// How long `fall` stays set in outgoing packets after a detection.
    pub fall_latch_ms: Millis,
    pub battery: BatteryState,
}

impl Default for HelmetConfig {
    fn default() -> Self {
        let kinds = [
            SensorKind::Co,
            SensorKind::Ch4,
            SensorKind::Lpg,
            SensorKind::Temperature,
            SensorKind::Humidity,
            SensorKind::Noise,
            SensorKind::Accelerometer,
            SensorKind::LimitSwitch,
        ];
        Self {
            sensors: kinds
                .into_iter()
                .map(|k| (k, SensorSpec::default_for(k)))
                .collect(),
            thresholds: ThresholdConfig::default(),
            filter_alpha: 0.5,
            fall: FallConfig::default(),
            removal_debounce: 3,
            report_interval_ms: 2000,
            fall_latch_ms: 10_000,
            battery: BatteryState::default(),
        }
    }
}

impl HelmetConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (kind, spec) in &self.sensors {
            if spec.kind != *kind {
                return Err(format!("sensor entry {kind:?} describes {:?}", spec.kind));
            }
            spec.validate()?;
        }
        self.thresholds.validate()?;
        Ewma::new(self.filter_alpha)?;
        self.fall.validate()?;
        if self.removal_debounce == 0 {
            return Err("removal_debounce must be >= 1".into());
        }
        if self.report_interval_ms == 0 || !self.report_interval_ms.is_multiple_of(TICK_MS) {
            return Err(format!(
                "report_interval_ms must be a positive multiple of {TICK_MS}"
            ));
        }
        if let Some(accel) = self.sensors.get(&SensorKind::Accelerometer) {
            if accel.sample_period != self.fall.sample_period_ms {
                return Err("fall.sample_period_ms must equal the accelerometer period".into());
            }
        }
        self.battery.validate()
    }
}

/// A filtered reading paired with the same-instant ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingSample {
    pub t: Millis,
    pub helmet_id: HelmetId,
    pub channel: Channel,
    pub reading: f64,
    pub truth: f64,
}

/// Why a packet was emitted on a given tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmitReasons {
    pub periodic: bool,
    pub alarm_transition: bool,
    pub fall: bool,
    pub worn_transition: bool,
}

impl EmitReasons {
    pub fn any(&self) -> bool {
        self.periodic || self.alarm_transition || self.fall || self.worn_transition
    }

    fn event_triggered(&self) -> bool {
        self.alarm_transition || self.fall || self.worn_transition
    }
}

#[derive(Debug, Clone, Default)]
pub struct HelmetStep {
    pub packet: Option<TelemetryPacket>,
    pub reasons: EmitReasons,
    pub samples: Vec<ReadingSample>,
}

#[derive(Debug, Clone)]
struct ChannelPipeline {
    spec: SensorSpec,
    sensor: SensorState,
    filter: Ewma,
    alarm: HysteresisState,
}

#[derive(Debug, Clone)]
pub struct HelmetNode {
    id: HelmetId,
    zone: ZoneId,
    config: HelmetConfig,
    channels: BTreeMap<Channel, ChannelPipeline>,
    accel: Option<(SensorSpec, SensorState)>,
    accel_window: VecDeque<AccelSample>,
    switch: Option<SensorSpec>,
    removal: RemovalDetector,
    reported_worn: bool,
    fall_latched_until: Option<Millis>,
    battery: BatteryState,
    next_seq: u64,
    rng: SimRng,
    packets_sent: u64,
}

impl HelmetNode {
    /// Build a node settled on its zone's baseline at t = 0.
    pub fn new(
        id: HelmetId,
        env: &MineEnvironment,
        config: HelmetConfig,
        seed: u64,
    ) -> Result<Self, String> {
        config.validate()?;
        let placement = env
            .placement(&id)
            .ok_or_else(|| format!("helmet `{id}` has no placement"))?;
        let zone = placement.zone_id.clone();
        let baseline = env.baseline(&zone).map_err(|e| e.to_string())?;
        let mut channels = BTreeMap::new();
        for (kind, spec) in &config.sensors {
            if let Some(channel) = kind.channel() {
                channels.insert(
                    channel,
                    ChannelPipeline {
                        spec: *spec,
                        sensor: SensorState::settled(baseline.get(channel), 0),
                        filter: Ewma::new(config.filter_alpha)?,
                        alarm: HysteresisState::default(),
                    },
                );
            }
        }
        let accel = config
            .sensors
            .get(&SensorKind::Accelerometer)
            .map(|s| (*s, SensorState::settled(1.0, 0)));
        let switch = config.sensors.get(&SensorKind::LimitSwitch).copied();
        let worn = env.switch_closed(&id, 0);
        Ok(Self {
            rng: stream(StreamDomain::Sensor, seed, id.as_str()),
            removal: RemovalDetector::new(worn, config.removal_debounce)?,
            reported_worn: worn,
            battery: config.battery,
            id,
            zone,
            config,
            channels,
            accel,
            accel_window: VecDeque::new(),
            switch,
            fall_latched_until: None,
            next_seq: 1,
            packets_sent: 0,
        })
    }

    pub fn id(&self) -> &HelmetId {
        &self.id
    }

    pub fn zone(&self) -> &ZoneId {
        &self.zone
    }

    pub fn battery(&self) -> &BatteryState {
        &self.battery
    }

    pub fn is_dead(&self) -> bool {
        self.battery.is_dead()
    }

    pub fn packets_sent(&self) -> u64 {
        self.packets_sent
    }

    pub fn worn(&self) -> bool {
        self.reported_worn
    }

    pub fn filtered(&self, channel: Channel) -> Option<f64> {
        self.channels.get(&channel).and_then(|p| p.filter.value())
    }

    pub fn local_alarms(&self) -> Vec<Channel> {
        self.channels
            .iter()
            .filter(|(_, p)| p.alarm.is_raised())
            .map(|(c, _)| *c)
            .collect()
    }

    fn fall_active(&self, t: Millis) -> bool {
        self.fall_latched_until.is_some_and(|until| t < until)
    }

    /// Advance the node to tick `t`.
    pub fn step(&mut self, t: Millis, env: &MineEnvironment) -> HelmetStep {
        let mut out = HelmetStep::default();
        if self.battery.is_dead() {
            return out;
        }
        let mut reasons = EmitReasons::default();

        if self.channels.values().any(|p| p.spec.samples_at(t)) {
            let truth = env.sample(&self.zone, t).expect("zone validated at build");
            for (channel, p) in self.channels.iter_mut() {
                if !p.spec.samples_at(t) {
                    continue;
                }
                let truth_value = truth.get(*channel);
                let raw = read_sensor(&p.spec, truth_value, &mut p.sensor, t, &mut self.rng);
                let filtered = p.filter.update(raw);
                if let Some(cfg) = self.config.thresholds.get(*channel) {
                    if p.alarm.update(filtered, cfg).is_some() {
                        reasons.alarm_transition = true;
                    }
                }
                out.samples.push(ReadingSample {
                    t,
                    helmet_id: self.id.clone(),
                    channel: *channel,
                    reading: filtered,
                    truth: truth_value,
                });
            }
        }

        if let Some((spec, state)) = self.accel.as_mut() {
            if spec.samples_at(t) {
                let truth = env.accel_magnitude(&self.id, t);
                let g = read_sensor(spec, truth, state, t, &mut self.rng);
                self.accel_window.push_back(AccelSample { t, g });
                let span = self.config.fall.window_span_ms();
                while self.accel_window.front().is_some_and(|s| s.t + span < t) {
                    self.accel_window.pop_front();
                }
                let window = self.accel_window.make_contiguous();
                if detect_fall(window, &self.config.fall) {
                    self.accel_window.clear();
                    self.fall_latched_until = Some(t + self.config.fall_latch_ms);
                    reasons.fall = true;
                }
            }
        }

        if let Some(spec) = self.switch {
            if spec.samples_at(t) {
                self.removal.update(env.switch_closed(&self.id, t));
            }
        }
        // A helmet knocked off during a fall reports the fall, not a removal.
        if !self.fall_active(t) && self.reported_worn != self.removal.worn() {
            self.reported_worn = self.removal.worn();
            reasons.worn_transition = true;
        }

        reasons.periodic = t.is_multiple_of(self.config.report_interval_ms);
        if reasons.any() {
            out.packet = Some(self.make_packet(t));
        }
        out.reasons = reasons;
        debug_assert!(!reasons.event_triggered() || out.packet.is_some());
        self.battery = self.battery.step(TICK_MS, 0);
        out
    }

    fn make_packet(&mut self, t: Millis) -> TelemetryPacket {
        let seq = self.next_seq;
        self.next_seq += 1;
        TelemetryPacket {
            helmet_id: self.id.clone(),
            seq,
            t_ms: t,
            readings: self
                .channels
                .iter()
                .filter_map(|(c, p)| p.filter.value().map(|v| Reading::new(*c, v)))
                .collect(),
            battery_pct: self.battery.charge,
            worn: self.reported_worn,
            local_alarms: self
                .local_alarms()
                .into_iter()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            fall: self.fall_active(t),
        }
    }

    /// Charge the battery for `packets` transmissions of `energy_pct` each.
    pub fn charge_transmissions(&mut self, packets: u64, energy_pct: f64) {
        if packets == 0 {
            return;
        }
        let charged = BatteryState {
            tx_cost: energy_pct,
            ..self.battery
        }
        .step(0, packets);
        self.battery.charge = charged.charge;
        self.packets_sent += packets;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        GasChannel, GroundTruth, HazardEventSpec, HazardKind, HelmetPlacement, Zone, ZoneMap,
    };

    fn env(events: Vec<HazardEventSpec>) -> MineEnvironment {
        let map = ZoneMap {
            zones: vec![Zone {
                zone_id: "z1".into(),
                baseline: GroundTruth::default(),
                position: [0.0, 0.0],
            }],
            helmets: vec![HelmetPlacement {
                helmet_id: "h1".into(),
                zone_id: "z1".into(),
                position: [5.0, 0.0],
            }],
        };
        let mut env = MineEnvironment::new(&map).unwrap();
        for e in events {
            env.apply_event(e).unwrap();
        }
        env
    }

    fn ideal_config() -> HelmetConfig {
        let mut cfg = HelmetConfig::default();
        for spec in cfg.sensors.values_mut() {
            *spec = SensorSpec::ideal(spec.kind, spec.sample_period);
        }
        cfg
    }

    fn run(node: &mut HelmetNode, env: &MineEnvironment, until: Millis) -> Vec<HelmetStep> {
        (0..=until / TICK_MS)
            .map(|k| node.step(k * TICK_MS, env))
            .collect()
    }

    #[test]
    fn periodic_packets_on_report_boundary() {
        let env = env(vec![]);
        let mut node = HelmetNode::new("h1".into(), &env, ideal_config(), 7).unwrap();
        let steps = run(&mut node, &env, 10_000);
        let times: Vec<Millis> = steps
            .iter()
            .filter_map(|s| s.packet.as_ref().map(|p| p.t_ms))
            .collect();
        assert_eq!(times, vec![0, 2000, 4000, 6000, 8000, 10_000]);
        let seqs: Vec<u64> = steps
            .iter()
            .filter_map(|s| s.packet.as_ref().map(|p| p.seq))
            .collect();
        assert_eq!(seqs, vec![1, 2, 3, 4, 5, 6]);
        let first = steps[0].packet.as_ref().unwrap();
        assert_eq!(first.reading(Channel::Temperature), Some(20.0));
        assert!(first.worn);
        assert!(first.local_alarms.is_empty());
    }

    #[test]
    fn fall_triggers_immediate_packet() {
        let fall = HazardEventSpec {
            kind: HazardKind::Fall {
                helmet_id: "h1".into(),
            },
            onset: 5_000,
            location: "z1".into(),
            duration: 0,
        };
        let env = env(vec![fall]);
        let mut node = HelmetNode::new("h1".into(), &env, ideal_config(), 7).unwrap();
        let steps = run(&mut node, &env, 8_000);
        let fall_step = steps
            .iter()
            .find(|s| s.reasons.fall)
            .expect("fall detected");
        let p = fall_step.packet.as_ref().unwrap();
        assert!(p.fall);
        assert_eq!(p.t_ms, 5_400);
        assert_ne!(p.t_ms % 2000, 0);
    }

    #[test]
    fn alarm_transition_triggers_packet_between_boundaries() {
        let leak = HazardEventSpec {
            kind: HazardKind::GasLeak {
                gas: GasChannel::Co,
                magnitude: 200.0,
                rise_time_constant: 0.001,
            },
            onset: 2_500,
            location: "z1".into(),
            duration: 0,
        };
        let env = env(vec![leak]);
        let mut cfg = ideal_config();
        cfg.filter_alpha = 1.0;
        let mut node = HelmetNode::new("h1".into(), &env, cfg, 7).unwrap();
        let steps = run(&mut node, &env, 4_000);
        let p = steps[30].packet.as_ref().expect("immediate send at 3000");
        assert_eq!(p.local_alarms, vec![Channel::Co]);
    }

    #[test]
    fn dead_node_is_silent() {
        let env = env(vec![]);
        let mut cfg = ideal_config();
        cfg.battery.charge = 0.0;
        let mut node = HelmetNode::new("h1".into(), &env, cfg, 7).unwrap();
        assert!(run(&mut node, &env, 10_000)
            .iter()
            .all(|s| s.packet.is_none()));
    }

    #[test]
    fn removal_suppressed_while_fall_latched() {
        let fall = HazardEventSpec {
            kind: HazardKind::Fall {
                helmet_id: "h1".into(),
            },
            onset: 1_000,
            location: "z1".into(),
            duration: 0,
        };
        let removal = HazardEventSpec {
            kind: HazardKind::HelmetRemoval {
                helmet_id: "h1".into(),
            },
            onset: 1_500,
            location: "z1".into(),
            duration: 0,
        };
        let env = env(vec![fall, removal]);
        let mut node = HelmetNode::new("h1".into(), &env, ideal_config(), 7).unwrap();
        let steps = run(&mut node, &env, 20_000);
        let worn_change = steps
            .iter()
            .position(|s| s.reasons.worn_transition)
            .unwrap();
        // fall detected at 1400, latch 10 s
        assert_eq!(worn_change as Millis * TICK_MS, 11_400);
    }

    #[test]
    fn same_seed_same_stream() {
        let env = env(vec![]);
        let cfg = HelmetConfig::default();
        let mut a = HelmetNode::new("h1".into(), &env, cfg.clone(), 9).unwrap();
        let mut b = HelmetNode::new("h1".into(), &env, cfg, 9).unwrap();
        let pa: Vec<_> = run(&mut a, &env, 20_000)
            .into_iter()
            .filter_map(|s| s.packet)
            .collect();
        let pb: Vec<_> = run(&mut b, &env, 20_000)
            .into_iter()
            .filter_map(|s| s.packet)
            .collect();
        assert_eq!(pa, pb);
    }

    #[test]
    fn config_rejects_bad_alpha() {
        let cfg = HelmetConfig {
            filter_alpha: 0.0,
            ..HelmetConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
