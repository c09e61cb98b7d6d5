//! Central control unit.
//!
//! All state changes go through `&mut self` methods that take the current
//! time as a parameter; whoever owns the unit (the simulation harness or the
//! live server) serializes calls and supplies the clock. A tick runs:
//!
//! 1. [`ControlUnit::notify_pending`] for alerts raised on earlier ticks,
//! 2. [`ControlUnit::ingest`] for every packet arriving this tick,
//! 3. [`ControlUnit::evaluate`] and [`ControlUnit::escalate_sweep`].

mod alert;
mod log;
mod timeline;
mod validate;
pub mod wire;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alert::{Alert, AlertId, AlertKind, AlertState, Evidence, Severity};
pub use log::{
    EventLog, EventLogRecord, HistoryQuery, LivenessRecord, NotificationReason, NotificationRecord,
    OperatorActionKind, OperatorActionRecord, PacketRecord, RecordBody, RecordKind,
    TransitionChange, TransitionRecord,
};
pub use timeline::{HelmetTimeline, Liveness, SeqSet, Stamped, TimelineSnapshot};
pub use validate::{validate_log, LogViolation};

use crate::clock::Millis;
use crate::helmet::{HysteresisState, Reading, TelemetryPacket, ThresholdConfig};
use crate::types::{Channel, HelmetId, OperatorId, ZoneId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    pub central_thresholds: ThresholdConfig,
    pub fusion_window_ms: Millis,
    pub stale_after_ms: Millis,
    pub offline_after_ms: Millis,
    pub escalation_timeout_ms: Millis,
    /// How long an environmental channel must stay clear before its
    /// acknowledged alert resolves.
    pub auto_resolve_clear_ms: Millis,
    pub low_battery_pct: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            central_thresholds: ThresholdConfig::default(),
            fusion_window_ms: 30_000,
            stale_after_ms: 10_000,
            offline_after_ms: 30_000,
            escalation_timeout_ms: 120_000,
            auto_resolve_clear_ms: 60_000,
            low_battery_pct: 20.0,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.central_thresholds.validate()?;
        if self.stale_after_ms >= self.offline_after_ms {
            return Err("stale_after_ms must be below offline_after_ms".into());
        }
        if !(0.0..=100.0).contains(&self.low_battery_pct) {
            return Err("low_battery_pct must be within [0, 100]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("authentication rejected: {0}")]
    Unauthorized(String),
    #[error("malformed packet: {0}")]
    Schema(#[from] wire::WireError),
    #[error("unknown alert {0}")]
    UnknownAlert(AlertId),
    #[error("illegal transition for alert {alert_id}: {from} -> {to}")]
    IllegalTransition {
        alert_id: AlertId,
        from: AlertState,
        to: AlertState,
    },
    #[error("inverted time range: from {from_ms} > to {to_ms}")]
    InvertedRange { from_ms: Millis, to_ms: Millis },
    #[error("helmet `{0}` is already registered")]
    DuplicateHelmet(HelmetId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestAck {
    Applied { offset: u64 },
    Duplicate,
}

#[derive(Debug, Clone, Default)]
struct HelmetEdges {
    fall: bool,
    worn: bool,
    low_battery_latched: bool,
}

#[derive(Debug)]
pub struct ControlUnit {
    config: ControlConfig,
    helmet_tokens: BTreeMap<HelmetId, String>,
    operator_tokens: BTreeMap<String, OperatorId>,
    timelines: BTreeMap<HelmetId, HelmetTimeline>,
    edges: BTreeMap<HelmetId, HelmetEdges>,
    central: BTreeMap<(HelmetId, Channel), HysteresisState>,
    last_alarm_seen: BTreeMap<(HelmetId, Channel), Millis>,
    alerts: BTreeMap<AlertId, Alert>,
    open: BTreeMap<(HelmetId, AlertKind), AlertId>,
    notified_at: BTreeMap<AlertId, Millis>,
    clear_since: BTreeMap<AlertId, Millis>,
    next_alert: u64,
    log: EventLog,
}

impl ControlUnit {
    pub fn new(config: ControlConfig) -> Self {
        Self::with_log(config, EventLog::new())
    }

    pub fn with_log(config: ControlConfig, log: EventLog) -> Self {
        Self {
            config,
            helmet_tokens: BTreeMap::new(),
            operator_tokens: BTreeMap::new(),
            timelines: BTreeMap::new(),
            edges: BTreeMap::new(),
            central: BTreeMap::new(),
            last_alarm_seen: BTreeMap::new(),
            alerts: BTreeMap::new(),
            open: BTreeMap::new(),
            notified_at: BTreeMap::new(),
            clear_since: BTreeMap::new(),
            next_alert: 1,
            log,
        }
    }

    pub fn config(&self) -> &ControlConfig {
        &self.config
    }

    pub fn register_helmet(
        &mut self,
        helmet: HelmetId,
        zone: ZoneId,
        token: impl Into<String>,
        registered_at: Millis,
    ) -> Result<(), ControlError> {
        if self.timelines.contains_key(&helmet) {
            return Err(ControlError::DuplicateHelmet(helmet));
        }
        self.helmet_tokens.insert(helmet.clone(), token.into());
        self.edges.insert(
            helmet.clone(),
            HelmetEdges {
                worn: true,
                ..Default::default()
            },
        );
        self.timelines.insert(
            helmet.clone(),
            HelmetTimeline::new(helmet, zone, registered_at),
        );
        Ok(())
    }

    pub fn register_operator(&mut self, operator: OperatorId, token: impl Into<String>) {
        self.operator_tokens.insert(token.into(), operator);
    }

    /// Operator behind a bearer token, if any.
    pub fn operator_for_token(&self, token: &str) -> Option<&OperatorId> {
        self.operator_tokens.get(token)
    }

    pub fn is_helmet_token(&self, helmet: &HelmetId, token: &str) -> bool {
        self.helmet_tokens.get(helmet).is_some_and(|t| t == token)
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    pub fn timelines(&self) -> impl Iterator<Item = &HelmetTimeline> {
        self.timelines.values()
    }

    pub fn timeline(&self, helmet: &HelmetId) -> Option<&HelmetTimeline> {
        self.timelines.get(helmet)
    }

    pub fn alerts(&self) -> impl Iterator<Item = &Alert> {
        self.alerts.values()
    }

    pub fn alert(&self, id: AlertId) -> Option<&Alert> {
        self.alerts.get(&id)
    }

    pub fn alerts_in(&self, state: Option<AlertState>) -> Vec<&Alert> {
        self.alerts
            .values()
            .filter(|a| state.is_none_or(|s| a.state == s))
            .collect()
    }

    pub fn open_alert(&self, helmet: &HelmetId, kind: AlertKind) -> Option<&Alert> {
        self.open
            .get(&(helmet.clone(), kind))
            .and_then(|id| self.alerts.get(id))
    }

    /// Accept one packet. Duplicates are acknowledged without effect; older
    /// but unseen packets are archived and only update fields they are
    /// newer for.
    pub fn ingest(
        &mut self,
        packet: TelemetryPacket,
        token: &str,
        arrival: Millis,
    ) -> Result<IngestAck, ControlError> {
        if !self.is_helmet_token(&packet.helmet_id, token) {
            tracing::warn!(helmet = %packet.helmet_id, seq = packet.seq, "ingest rejected: bad token");
            return Err(ControlError::Unauthorized(format!(
                "invalid token for helmet `{}`",
                packet.helmet_id
            )));
        }
        if let Err(e) = wire::validate_packet(&packet) {
            tracing::warn!(helmet = %packet.helmet_id, error = %e, "ingest rejected: schema");
            return Err(e.into());
        }
        let timeline = self
            .timelines
            .get_mut(&packet.helmet_id)
            .expect("token map and timelines share keys");
        if !timeline.seen.insert(packet.seq) {
            return Ok(IngestAck::Duplicate);
        }
        let helmet = packet.helmet_id.clone();
        let fresher_readings: Vec<(Channel, f64)> = packet
            .readings
            .iter()
            .filter(|r| {
                timeline
                    .state
                    .readings
                    .get(&r.channel)
                    .is_none_or(|s| s.t_ms.is_none_or(|cur| packet.t_ms > cur))
            })
            .map(|r| (r.channel, r.value))
            .collect();
        timeline.state.apply(&packet);
        timeline.last_packet_at = timeline.last_packet_at.max(arrival);

        for (channel, value) in fresher_readings {
            if let Some(cfg) = self.config.central_thresholds.get(channel) {
                self.central
                    .entry((helmet.clone(), channel))
                    .or_default()
                    .update(value, cfg);
            }
        }
        for &channel in &packet.local_alarms {
            let seen = self
                .last_alarm_seen
                .entry((helmet.clone(), channel))
                .or_insert(packet.t_ms);
            *seen = (*seen).max(packet.t_ms);
        }

        let offset = self
            .log
            .append(
                arrival,
                RecordBody::Packet(PacketRecord {
                    arrival_ms: arrival,
                    packet,
                }),
            )
            .offset;
        Ok(IngestAck::Applied { offset })
    }

    fn channel_active(&self, timeline: &HelmetTimeline, channel: Channel) -> bool {
        timeline.local_alarm(channel)
            || self
                .central
                .get(&(timeline.helmet_id().clone(), channel))
                .is_some_and(HysteresisState::is_raised)
    }

    /// Helmets in `zone` whose local alarm on `channel` was reported within
    /// the fusion window ending at `t`.
    fn fused(&self, zone: &ZoneId, channel: Channel, t: Millis) -> bool {
        let since = t.saturating_sub(self.config.fusion_window_ms);
        self.timelines
            .values()
            .filter(|tl| &tl.zone_id == zone)
            .filter(|tl| {
                self.last_alarm_seen
                    .get(&(tl.helmet_id().clone(), channel))
                    .is_some_and(|&seen| seen >= since)
            })
            .count()
            >= 2
    }

    fn evidence(timeline: &HelmetTimeline, channels: &[Channel]) -> Evidence {
        let readings = channels
            .iter()
            .filter_map(|&c| timeline.reading(c).map(|v| Reading::new(c, v)))
            .collect();
        Evidence {
            seq: timeline.state.last_seq,
            t_ms: timeline.state.local_alarms.t_ms.unwrap_or(0),
            channels: channels.to_vec(),
            readings,
        }
    }

    fn transition_record(
        alert: &Alert,
        change: TransitionChange,
        from: Option<AlertState>,
    ) -> RecordBody {
        RecordBody::AlertTransition(TransitionRecord {
            alert_id: alert.alert_id,
            helmet_id: alert.helmet_id.clone(),
            zone_id: alert.zone_id.clone(),
            kind: alert.kind,
            severity: alert.severity,
            change,
            from,
            to: alert.state,
        })
    }

    fn raise(
        &mut self,
        helmet: &HelmetId,
        kind: AlertKind,
        severity: Severity,
        evidence: Evidence,
        t: Millis,
    ) -> TransitionRecord {
        let zone_id = self.timelines[helmet].zone_id.clone();
        let alert_id = AlertId(self.next_alert);
        self.next_alert += 1;
        let alert = Alert {
            alert_id,
            kind,
            severity,
            helmet_id: helmet.clone(),
            zone_id,
            raised_at: t,
            state: AlertState::Raised,
            ack_by: None,
            evidence,
            state_changed_at: t,
        };
        let body = Self::transition_record(&alert, TransitionChange::State, None);
        self.log.append(t, body.clone());
        self.open.insert((helmet.clone(), kind), alert_id);
        self.alerts.insert(alert_id, alert);
        match body {
            RecordBody::AlertTransition(r) => r,
            _ => unreachable!(),
        }
    }

    fn transition(
        &mut self,
        id: AlertId,
        to: AlertState,
        t: Millis,
    ) -> Result<TransitionRecord, ControlError> {
        let alert = self
            .alerts
            .get_mut(&id)
            .ok_or(ControlError::UnknownAlert(id))?;
        let from = alert.state;
        if !from.can_transition(to) {
            return Err(ControlError::IllegalTransition {
                alert_id: id,
                from,
                to,
            });
        }
        alert.state = to;
        alert.state_changed_at = t.max(alert.raised_at);
        let body = Self::transition_record(alert, TransitionChange::State, Some(from));
        if to == AlertState::Resolved {
            self.open.remove(&(alert.helmet_id.clone(), alert.kind));
            self.clear_since.remove(&id);
            self.notified_at.remove(&id);
        }
        self.log.append(t, body.clone());
        match body {
            RecordBody::AlertTransition(r) => Ok(r),
            _ => unreachable!(),
        }
    }

    fn push_notification(
        &mut self,
        id: AlertId,
        reason: NotificationReason,
        t: Millis,
    ) -> EventLogRecord {
        let alert = self.alerts[&id].clone();
        self.log
            .append(
                t,
                RecordBody::Notification(NotificationRecord {
                    channel: "console".into(),
                    reason,
                    alert,
                }),
            )
            .clone()
    }

    /// Move a raised alert to notified and append its notification record.
    pub fn notify(&mut self, id: AlertId, t: Millis) -> Result<EventLogRecord, ControlError> {
        self.transition(id, AlertState::Notified, t)?;
        self.notified_at.insert(id, t);
        Ok(self.push_notification(id, NotificationReason::Initial, t))
    }

    /// Notify every alert raised before `t`.
    pub fn notify_pending(&mut self, t: Millis) -> Vec<EventLogRecord> {
        let pending: Vec<AlertId> = self
            .alerts
            .values()
            .filter(|a| a.state == AlertState::Raised && a.raised_at < t)
            .map(|a| a.alert_id)
            .collect();
        pending
            .into_iter()
            .map(|id| self.notify(id, t).expect("raised alerts can be notified"))
            .collect()
    }

    pub fn acknowledge(
        &mut self,
        id: AlertId,
        operator: &OperatorId,
        t: Millis,
    ) -> Result<Alert, ControlError> {
        self.operator_transition(id, operator, OperatorActionKind::Acknowledge, t)
    }

    /// Manual resolution of an acknowledged alert.
    pub fn resolve(
        &mut self,
        id: AlertId,
        operator: &OperatorId,
        t: Millis,
    ) -> Result<Alert, ControlError> {
        self.operator_transition(id, operator, OperatorActionKind::Resolve, t)
    }

    fn operator_transition(
        &mut self,
        id: AlertId,
        operator: &OperatorId,
        action: OperatorActionKind,
        t: Millis,
    ) -> Result<Alert, ControlError> {
        let to = match action {
            OperatorActionKind::Acknowledge => AlertState::Acknowledged,
            OperatorActionKind::Resolve => AlertState::Resolved,
        };
        let alert = self.alerts.get(&id).ok_or(ControlError::UnknownAlert(id))?;
        if !alert.state.can_transition(to) {
            return Err(ControlError::IllegalTransition {
                alert_id: id,
                from: alert.state,
                to,
            });
        }
        let helmet_id = alert.helmet_id.clone();
        self.log.append(
            t,
            RecordBody::OperatorAction(OperatorActionRecord {
                operator_id: operator.clone(),
                action,
                alert_id: id,
                helmet_id,
            }),
        );
        if action == OperatorActionKind::Acknowledge {
            self.alerts.get_mut(&id).expect("checked").ack_by = Some(operator.clone());
        }
        self.transition(id, to, t)?;
        Ok(self.alerts[&id].clone())
    }

    /// Escalate every alert left in notified for longer than the timeout.
    pub fn escalate_sweep(&mut self, t: Millis, timeout: Millis) -> Vec<TransitionRecord> {
        let due: Vec<AlertId> = self
            .alerts
            .values()
            .filter(|a| a.state == AlertState::Notified)
            .filter(|a| {
                self.notified_at
                    .get(&a.alert_id)
                    .is_some_and(|&at| t.saturating_sub(at) > timeout)
            })
            .map(|a| a.alert_id)
            .collect();
        let mut out = Vec::with_capacity(due.len());
        for id in due {
            out.push(
                self.transition(id, AlertState::Escalated, t)
                    .expect("notified alerts can escalate"),
            );
            self.push_notification(id, NotificationReason::Escalation, t);
        }
        out
    }

    /// Central analysis for tick `t`: liveness, threshold and fusion rules,
    /// fall and removal edges, battery, and automatic resolution.
    pub fn evaluate(&mut self, t: Millis) -> Vec<TransitionRecord> {
        let mut out = Vec::new();
        let helmets: Vec<HelmetId> = self.timelines.keys().cloned().collect();
        for helmet in &helmets {
            self.evaluate_liveness(helmet, t, &mut out);
            self.evaluate_environment(helmet, t, &mut out);
            self.evaluate_edges(helmet, t, &mut out);
        }
        out
    }

    fn evaluate_liveness(&mut self, helmet: &HelmetId, t: Millis, out: &mut Vec<TransitionRecord>) {
        let tl = &self.timelines[helmet];
        let now = Liveness::classify(
            t.saturating_sub(tl.last_packet_at),
            self.config.stale_after_ms,
            self.config.offline_after_ms,
        );
        let before = tl.liveness;
        if now != before {
            self.timelines.get_mut(helmet).expect("exists").liveness = now;
            self.log.append(
                t,
                RecordBody::Liveness(LivenessRecord {
                    helmet_id: helmet.clone(),
                    from: before,
                    to: now,
                }),
            );
        }
        let offline = now == Liveness::Offline;
        match self
            .open
            .get(&(helmet.clone(), AlertKind::Offline))
            .copied()
        {
            None if offline => {
                let tl = &self.timelines[helmet];
                let evidence = Self::evidence(tl, &[]);
                out.push(self.raise(helmet, AlertKind::Offline, Severity::Warning, evidence, t));
            }
            Some(id) if !offline && self.alerts[&id].state == AlertState::Acknowledged => {
                out.push(self.transition(id, AlertState::Resolved, t).expect("legal"));
            }
            _ => {}
        }
    }

    fn evaluate_environment(
        &mut self,
        helmet: &HelmetId,
        t: Millis,
        out: &mut Vec<TransitionRecord>,
    ) {
        for kind in [AlertKind::Gas, AlertKind::Temperature, AlertKind::Noise] {
            let tl = &self.timelines[helmet];
            let active: Vec<Channel> = Channel::ALL
                .into_iter()
                .filter(|&c| AlertKind::for_channel(c) == Some(kind))
                .filter(|&c| self.channel_active(tl, c))
                .collect();
            let fused = kind == AlertKind::Gas
                && active
                    .iter()
                    .any(|&c| tl.local_alarm(c) && self.fused(&tl.zone_id, c, t));
            let severity = if fused {
                Severity::Critical
            } else {
                Severity::Warning
            };
            match self.open.get(&(helmet.clone(), kind)).copied() {
                None if !active.is_empty() => {
                    let evidence = Self::evidence(tl, &active);
                    out.push(self.raise(helmet, kind, severity, evidence, t));
                }
                None => {}
                Some(id) => {
                    if fused && self.alerts[&id].severity == Severity::Warning {
                        let alert = self.alerts.get_mut(&id).expect("open alert exists");
                        alert.severity = Severity::Critical;
                        let body = Self::transition_record(
                            alert,
                            TransitionChange::Severity,
                            Some(alert.state),
                        );
                        if let RecordBody::AlertTransition(r) = &body {
                            out.push(r.clone());
                        }
                        self.log.append(t, body);
                    }
                    if active.is_empty() {
                        let since = *self.clear_since.entry(id).or_insert(t);
                        let alert = &self.alerts[&id];
                        if alert.state == AlertState::Acknowledged
                            && t - since >= self.config.auto_resolve_clear_ms
                        {
                            out.push(self.transition(id, AlertState::Resolved, t).expect("legal"));
                        }
                    } else {
                        self.clear_since.remove(&id);
                    }
                }
            }
        }
    }

    fn evaluate_edges(&mut self, helmet: &HelmetId, t: Millis, out: &mut Vec<TransitionRecord>) {
        let tl = &self.timelines[helmet];
        let fall = tl.state.fall.value;
        let worn = tl.worn();
        let battery_low = tl.battery() < self.config.low_battery_pct;
        let edges = self.edges.get(helmet).cloned().unwrap_or_default();

        if fall && !edges.fall && !self.open.contains_key(&(helmet.clone(), AlertKind::Fall)) {
            let evidence = Evidence {
                seq: tl.state.fall.t_ms.and(tl.state.last_seq),
                t_ms: tl.state.fall.t_ms.unwrap_or(t),
                channels: vec![],
                readings: vec![],
            };
            out.push(self.raise(helmet, AlertKind::Fall, Severity::Critical, evidence, t));
        }
        let tl = &self.timelines[helmet];
        if !worn
            && edges.worn
            && !self
                .open
                .contains_key(&(helmet.clone(), AlertKind::HelmetRemoved))
        {
            let evidence = Evidence {
                seq: tl.state.last_seq,
                t_ms: tl.state.worn.t_ms.unwrap_or(t),
                channels: vec![],
                readings: vec![],
            };
            out.push(self.raise(
                helmet,
                AlertKind::HelmetRemoved,
                Severity::Critical,
                evidence,
                t,
            ));
        }
        let tl = &self.timelines[helmet];
        let mut low_latched = edges.low_battery_latched;
        if battery_low && !low_latched {
            low_latched = true;
            if !self
                .open
                .contains_key(&(helmet.clone(), AlertKind::LowBattery))
            {
                let evidence = Evidence {
                    seq: tl.state.last_seq,
                    t_ms: tl.state.battery.t_ms.unwrap_or(t),
                    channels: vec![],
                    readings: vec![],
                };
                out.push(self.raise(
                    helmet,
                    AlertKind::LowBattery,
                    Severity::Warning,
                    evidence,
                    t,
                ));
            }
        } else if !battery_low {
            low_latched = false;
        }
        self.edges.insert(
            helmet.clone(),
            HelmetEdges {
                fall,
                worn,
                low_battery_latched: low_latched,
            },
        );
    }

    /// Snapshot of every open alert key; used by invariant checks.
    pub fn open_keys(&self) -> BTreeSet<(HelmetId, AlertKind)> {
        self.open.keys().cloned().collect()
    }

    pub fn history(&self, q: &HistoryQuery) -> Result<Vec<&EventLogRecord>, ControlError> {
        if q.from_ms > q.to_ms {
            return Err(ControlError::InvertedRange {
                from_ms: q.from_ms,
                to_ms: q.to_ms,
            });
        }
        Ok(self.log.query(q))
    }
}

/// `query_history` with an explicit error for inverted ranges.
pub fn query_history<'a>(
    log: &'a EventLog,
    q: &HistoryQuery,
) -> Result<Vec<&'a EventLogRecord>, ControlError> {
    if q.from_ms > q.to_ms {
        return Err(ControlError::InvertedRange {
            from_ms: q.from_ms,
            to_ms: q.to_ms,
        });
    }
    Ok(log.query(q))
}
