//! The deterministic tick loop and the run log it produces.
//!
//! Each tick, in order: notify alerts raised on earlier ticks; step every
//! helmet and its link (fanned out over workers); queue deliveries; ingest
//! every packet due this tick in (arrival, helmet, seq) order; evaluate;
//! escalate; let the scripted supervisor act.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matching::{
    alerts_from_log, hazards_from_env, match_alerts, Classification, Hazard, MatchWindow,
};
use super::metrics::{compute_metrics, response_pairs, MetricsReport};
use super::scenario::{Scenario, ScenarioError, SupervisorScript};
use crate::clock::{Millis, TICK_MS};
use crate::control::wire::validate_packet;
use crate::control::{AlertState, ControlError, ControlUnit, EventLog};
use crate::env::MineEnvironment;
use crate::exec::{self, ExecMode};
use crate::helmet::{HelmetNode, ReadingSample, TelemetryPacket};
use crate::net::{distance, Delivery, DeliveryOutcome, DropReason, Link};
use crate::rng::{stream, SimRng, StreamDomain};
use crate::types::HelmetId;

/// Delivery faults injected between the links and the control unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultInjection {
    /// Chance that a delivered packet arrives a second time.
    pub duplicate_prob: f64,
    /// Chance that a delivered packet is held back.
    pub reorder_prob: f64,
    /// Largest extra delay for held-back packets and duplicates.
    pub max_extra_delay_ms: Millis,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub mode: ExecMode,
    pub faults: Option<FaultInjection>,
    /// Keep every packet handed to the control unit, duplicates included.
    pub trace_arrivals: bool,
}

impl RunOptions {
    pub fn sequential() -> Self {
        Self {
            mode: ExecMode::Sequential,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub emitted: u64,
    pub delivered: u64,
    pub out_of_range: u64,
    pub random_loss: u64,
    /// Extra copies injected by [`FaultInjection`].
    pub injected_duplicates: u64,
}

#[derive(Debug, Clone)]
struct Station {
    node: HelmetNode,
    link: Link,
}

struct Tx {
    samples: Vec<ReadingSample>,
    sent: Option<(TelemetryPacket, Delivery)>,
}

impl Station {
    fn step(&mut self, t: Millis, env: &MineEnvironment) -> Tx {
        let step = self.node.step(t, env);
        let sent = step.packet.map(|p| {
            let d = self.link.deliver(&p, t);
            self.node.charge_transmissions(1, d.energy);
            (p, d)
        });
        Tx {
            samples: step.samples,
            sent,
        }
    }
}

type InFlightKey = (Millis, HelmetId, u64, u32);

/// Copy index used for packets submitted from outside the simulation.
const EXTERNAL_COPY: u32 = u32::MAX;

pub struct Simulation {
    scenario_id: String,
    seed: u64,
    horizon: Millis,
    match_window: MatchWindow,
    env: MineEnvironment,
    stations: Vec<Station>,
    control: ControlUnit,
    tokens: BTreeMap<HelmetId, String>,
    in_flight: BTreeMap<InFlightKey, TelemetryPacket>,
    stats: BTreeMap<HelmetId, LinkStats>,
    samples: Vec<ReadingSample>,
    supervisor: Option<SupervisorScript>,
    options: RunOptions,
    fault_rng: SimRng,
    arrivals: Vec<(Millis, TelemetryPacket)>,
    next_t: Millis,
}

impl Simulation {
    pub fn new(scenario: &Scenario, seed: u64, options: RunOptions) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let env = scenario.environment()?;
        let profiles = scenario.profiles()?;
        let control_cfg = scenario.control_config()?;
        let mut control = ControlUnit::new(control_cfg);
        let mut stations = Vec::with_capacity(scenario.helmets.len());
        let mut tokens = BTreeMap::new();
        for (i, entry) in scenario.helmets.iter().enumerate() {
            let field = |e: String| ScenarioError::Invalid {
                field: format!("helmets[{i}]"),
                reason: e,
            };
            control
                .register_helmet(
                    entry.helmet_id.clone(),
                    entry.zone_id.clone(),
                    entry.token(),
                    0,
                )
                .map_err(|e| field(e.to_string()))?;
            tokens.insert(entry.helmet_id.clone(), entry.token());
            if entry.external {
                continue;
            }
            let cfg = scenario.helmet_config(entry).map_err(field)?;
            let node = HelmetNode::new(entry.helmet_id.clone(), &env, cfg, seed).map_err(field)?;
            let d = distance(entry.position, scenario.config.base_station);
            let link = Link::new(d, profiles[&entry.protocol], seed, entry.helmet_id.as_str());
            stations.push(Station { node, link });
        }
        for op in &scenario.config.operators {
            control.register_operator(op.operator_id.clone(), op.token.clone());
        }
        let match_window = scenario
            .config
            .match_window_ms
            .map_or(MatchWindow::default(), |window_ms| MatchWindow::Fixed {
                window_ms,
            });
        Ok(Self {
            scenario_id: scenario.id().to_string(),
            seed,
            horizon: scenario.horizon(),
            match_window,
            stats: stations
                .iter()
                .map(|s| (s.node.id().clone(), LinkStats::default()))
                .collect(),
            env,
            stations,
            control,
            tokens,
            in_flight: BTreeMap::new(),
            samples: Vec::new(),
            supervisor: scenario.config.supervisor.clone(),
            options,
            fault_rng: stream(StreamDomain::Fault, seed, scenario.id()),
            arrivals: Vec::new(),
            next_t: 0,
        })
    }

    pub fn now(&self) -> Option<Millis> {
        self.next_t.checked_sub(TICK_MS)
    }

    pub fn horizon(&self) -> Millis {
        self.horizon
    }

    pub fn is_finished(&self) -> bool {
        self.next_t > self.horizon
    }

    pub fn env(&self) -> &MineEnvironment {
        &self.env
    }

    pub fn control(&self) -> &ControlUnit {
        &self.control
    }

    /// For live mode, where external clients act on the same unit between
    /// ticks.
    pub fn control_mut(&mut self) -> &mut ControlUnit {
        &mut self.control
    }

    pub fn helmet(&self, id: &HelmetId) -> Option<&HelmetNode> {
        self.stations.iter().map(|s| &s.node).find(|n| n.id() == id)
    }

    pub fn helmets(&self) -> impl Iterator<Item = &HelmetNode> {
        self.stations.iter().map(|s| &s.node)
    }

    pub fn link_stats(&self) -> &BTreeMap<HelmetId, LinkStats> {
        &self.stats
    }

    /// Packets handed to the control unit so far, when tracing is on.
    pub fn arrivals(&self) -> &[(Millis, TelemetryPacket)] {
        &self.arrivals
    }

    /// Queue a packet from a live helmet for the next tick. Authentication
    /// and schema are checked now so the caller gets an immediate answer.
    pub fn submit(&mut self, packet: TelemetryPacket, token: &str) -> Result<Millis, ControlError> {
        if !self.control.is_helmet_token(&packet.helmet_id, token) {
            return Err(ControlError::Unauthorized(format!(
                "invalid token for helmet `{}`",
                packet.helmet_id
            )));
        }
        validate_packet(&packet)?;
        let at = self.next_t;
        self.in_flight.insert(
            (at, packet.helmet_id.clone(), packet.seq, EXTERNAL_COPY),
            packet,
        );
        Ok(at)
    }

    /// Keep ticking past the scenario horizon (live mode).
    pub fn set_horizon(&mut self, horizon: Millis) {
        self.horizon = horizon;
    }

    /// Run one tick. Returns its time, or `None` once past the horizon.
    pub fn tick(&mut self) -> Option<Millis> {
        if self.is_finished() {
            return None;
        }
        let t = self.next_t;
        self.next_t += TICK_MS;

        self.control.notify_pending(t);

        let env = &self.env;
        let txs = exec::map_mut(self.options.mode, &mut self.stations, |s| s.step(t, env));
        for tx in txs {
            self.samples.extend(tx.samples);
            if let Some((packet, delivery)) = tx.sent {
                self.schedule(packet, delivery);
            }
        }

        while let Some(entry) = self.in_flight.first_entry() {
            if entry.key().0 > t {
                break;
            }
            let packet = entry.remove();
            if self.options.trace_arrivals {
                self.arrivals.push((t, packet.clone()));
            }
            let token = &self.tokens[&packet.helmet_id];
            if let Err(e) = self.control.ingest(packet, token, t) {
                tracing::error!(error = %e, t, "simulated ingest rejected");
            }
        }

        self.control.evaluate(t);
        let timeout = self.control.config().escalation_timeout_ms;
        self.control.escalate_sweep(t, timeout);
        self.run_supervisor(t);
        Some(t)
    }

    fn schedule(&mut self, packet: TelemetryPacket, delivery: Delivery) {
        let stats = self
            .stats
            .get_mut(&packet.helmet_id)
            .expect("registered helmet");
        stats.emitted += 1;
        let arrive_at = match delivery.outcome {
            DeliveryOutcome::Dropped {
                reason: DropReason::OutOfRange,
            } => {
                stats.out_of_range += 1;
                return;
            }
            DeliveryOutcome::Dropped {
                reason: DropReason::RandomLoss,
            } => {
                stats.random_loss += 1;
                return;
            }
            DeliveryOutcome::Delivered { arrive_at } => arrive_at,
        };
        stats.delivered += 1;
        let mut arrivals = vec![arrive_at];
        if let Some(f) = self.options.faults {
            let ticks = f.max_extra_delay_ms / TICK_MS;
            let extra = |rng: &mut SimRng| rng.random_range(1..=ticks.max(1)) * TICK_MS;
            if self.fault_rng.random::<f64>() < f.reorder_prob {
                arrivals[0] += extra(&mut self.fault_rng);
            }
            if self.fault_rng.random::<f64>() < f.duplicate_prob {
                arrivals.push(arrive_at + extra(&mut self.fault_rng));
                stats.injected_duplicates += 1;
            }
        }
        for (copy, at) in arrivals.into_iter().enumerate() {
            self.in_flight.insert(
                (at, packet.helmet_id.clone(), packet.seq, copy as u32),
                packet.clone(),
            );
        }
    }

    fn run_supervisor(&mut self, t: Millis) {
        let Some(script) = self.supervisor.clone() else {
            return;
        };
        let due_ack: Vec<_> = self
            .control
            .alerts()
            .filter(|a| matches!(a.state, AlertState::Notified | AlertState::Escalated))
            .filter(|a| t >= a.raised_at + script.ack_delay_ms)
            .map(|a| a.alert_id)
            .collect();
        for id in due_ack {
            if let Err(e) = self.control.acknowledge(id, &script.operator_id, t) {
                tracing::error!(error = %e, "scripted acknowledge failed");
            }
        }
        let Some(delay) = script.resolve_delay_ms else {
            return;
        };
        // Environmental and offline alerts resolve on their own.
        let due_resolve: Vec<_> = self
            .control
            .alerts()
            .filter(|a| a.state == AlertState::Acknowledged)
            .filter(|a| !a.kind.is_environmental() && a.kind != crate::control::AlertKind::Offline)
            .filter(|a| t >= a.state_changed_at + delay)
            .map(|a| a.alert_id)
            .collect();
        for id in due_resolve {
            if let Err(e) = self.control.resolve(id, &script.operator_id, t) {
                tracing::error!(error = %e, "scripted resolve failed");
            }
        }
    }

    pub fn run_to_end(mut self) -> RunLog {
        while self.tick().is_some() {}
        self.finish()
    }

    fn meta(&self) -> RunMeta {
        RunMeta {
            scenario_id: self.scenario_id.clone(),
            seed: self.seed,
            horizon_ms: self.horizon,
            match_window: self.match_window,
            link_stats: self.stats.clone(),
            final_battery: self
                .stations
                .iter()
                .map(|s| (s.node.id().clone(), s.node.battery().charge))
                .collect(),
        }
    }

    /// Stop here and package what has happened so far.
    pub fn finish(self) -> RunLog {
        RunLog {
            meta: self.meta(),
            hazards: hazards_from_env(&self.env),
            samples: self.samples,
            log: self.control.into_log(),
        }
    }

    /// A copy of the run so far, leaving the simulation running.
    pub fn snapshot(&self) -> RunLog {
        let log = EventLog::read_jsonl(self.control.log().to_jsonl().as_bytes())
            .expect("a log always reloads");
        RunLog {
            meta: self.meta(),
            hazards: hazards_from_env(&self.env),
            samples: self.samples.clone(),
            log,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario_id: String,
    pub seed: u64,
    pub horizon_ms: Millis,
    pub match_window: MatchWindow,
    pub link_stats: BTreeMap<HelmetId, LinkStats>,
    pub final_battery: BTreeMap<HelmetId, f64>,
}

/// Sidecar contents stored next to the event log.
#[derive(Serialize, Deserialize)]
struct Truth {
    meta: RunMeta,
    hazards: Vec<Hazard>,
    samples: Vec<ReadingSample>,
}

/// Everything a finished run produced.
pub struct RunLog {
    pub meta: RunMeta,
    pub log: EventLog,
    pub hazards: Vec<Hazard>,
    /// Filtered reading and ground truth at every sample instant.
    pub samples: Vec<ReadingSample>,
}

impl RunLog {
    /// Match hazard alerts (offline and low-battery excluded) to hazards.
    pub fn classify(&self) -> Classification {
        let alerts: Vec<_> = alerts_from_log(self.log.records())
            .into_iter()
            .filter(|a| a.kind.is_hazard())
            .collect();
        match_alerts(&self.hazards, &alerts, self.meta.match_window)
    }

    pub fn metrics(&self) -> MetricsReport {
        let c = self.classify();
        compute_metrics(&c, &self.samples, &response_pairs(&c))
    }

    pub fn truth_path(log_path: &Path) -> PathBuf {
        let mut s = log_path.as_os_str().to_owned();
        s.push(".truth.json");
        PathBuf::from(s)
    }

    /// Write the event log as JSON lines at `path` and the ground truth to
    /// `<path>.truth.json`.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.log.to_jsonl())?;
        let truth = Truth {
            meta: self.meta.clone(),
            hazards: self.hazards.clone(),
            samples: self.samples.clone(),
        };
        fs::write(Self::truth_path(path), serde_json::to_vec(&truth)?)
    }

    pub fn load(path: &Path) -> Result<RunLog, String> {
        let f = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let log = EventLog::read_jsonl(BufReader::new(f))?;
        let tp = Self::truth_path(path);
        let bytes = fs::read(&tp).map_err(|e| format!("{}: {e}", tp.display()))?;
        let truth: Truth =
            serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", tp.display()))?;
        Ok(RunLog {
            meta: truth.meta,
            log,
            hazards: truth.hazards,
            samples: truth.samples,
        })
    }
}

pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<RunLog, ScenarioError> {
    run_scenario_with(scenario, seed, RunOptions::default())
}

pub fn run_scenario_with(
    scenario: &Scenario,
    seed: u64,
    options: RunOptions,
) -> Result<RunLog, ScenarioError> {
    Ok(Simulation::new(scenario, seed, options)?.run_to_end())
}

/// One run per seed, seeds fanned out over workers, results in seed order.
pub fn run_many(
    scenario: &Scenario,
    seeds: &[u64],
    mode: ExecMode,
) -> Result<Vec<RunLog>, ScenarioError> {
    scenario.validate()?;
    exec::map(mode, seeds, |&seed| {
        run_scenario_with(scenario, seed, RunOptions::sequential())
    })
    .into_iter()
    .collect()
}
