//! Replay a log through the alert state machine.

use std::collections::BTreeMap;

use thiserror::Error;

use super::alert::{AlertId, AlertKind, AlertState};
use super::log::{EventLogRecord, NotificationReason, RecordBody, TransitionChange};
use crate::clock::Millis;
use crate::types::HelmetId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogViolation {
    #[error("offset {found} at position {position}")]
    OffsetGap { position: usize, found: u64 },
    #[error("alert {alert_id} at offset {offset}: illegal transition {from:?} -> {to}")]
    IllegalTransition {
        offset: u64,
        alert_id: AlertId,
        from: Option<AlertState>,
        to: AlertState,
    },
    #[error(
        "alert {alert_id} at offset {offset}: record claims {claimed:?} but replay has {actual:?}"
    )]
    StateMismatch {
        offset: u64,
        alert_id: AlertId,
        claimed: Option<AlertState>,
        actual: Option<AlertState>,
    },
    #[error("alert {alert_id} at offset {offset}: change at {t} before raise at {raised_at}")]
    BeforeRaise {
        offset: u64,
        alert_id: AlertId,
        t: Millis,
        raised_at: Millis,
    },
    #[error("second open alert for ({helmet}, {kind}) at offset {offset}")]
    DuplicateOpen {
        offset: u64,
        helmet: HelmetId,
        kind: AlertKind,
    },
    #[error("alert {alert_id}: {initial} initial and {escalation} escalation notifications, escalated={escalated}")]
    NotificationCount {
        alert_id: AlertId,
        initial: usize,
        escalation: usize,
        escalated: bool,
    },
}

#[derive(Debug, Default)]
struct Replay {
    state: Option<AlertState>,
    raised_at: Millis,
    reached_notified: bool,
    escalated: bool,
    initial: usize,
    escalation: usize,
}

/// Summary of a clean replay.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplaySummary {
    pub alerts: usize,
    pub transitions: usize,
    pub notifications: usize,
}

/// Check offsets, the legal-transition table, timestamp ordering,
/// at-most-one-open per (helmet, kind) and notification completeness.
pub fn validate_log(records: &[EventLogRecord]) -> Result<ReplaySummary, Vec<LogViolation>> {
    let mut violations = Vec::new();
    let mut alerts: BTreeMap<AlertId, Replay> = BTreeMap::new();
    let mut open: BTreeMap<(HelmetId, AlertKind), AlertId> = BTreeMap::new();
    let mut summary = ReplaySummary::default();

    for (i, rec) in records.iter().enumerate() {
        if rec.offset != i as u64 {
            violations.push(LogViolation::OffsetGap {
                position: i,
                found: rec.offset,
            });
        }
        match &rec.body {
            RecordBody::AlertTransition(tr) => {
                summary.transitions += 1;
                let entry = alerts.entry(tr.alert_id).or_default();
                if entry.state != tr.from {
                    violations.push(LogViolation::StateMismatch {
                        offset: rec.offset,
                        alert_id: tr.alert_id,
                        claimed: tr.from,
                        actual: entry.state,
                    });
                }
                if tr.change == TransitionChange::Severity {
                    if tr.from != Some(tr.to) {
                        violations.push(LogViolation::IllegalTransition {
                            offset: rec.offset,
                            alert_id: tr.alert_id,
                            from: tr.from,
                            to: tr.to,
                        });
                    }
                    continue;
                }
                let legal = match tr.from {
                    None => tr.to == AlertState::Raised,
                    Some(from) => from.can_transition(tr.to),
                };
                if !legal {
                    violations.push(LogViolation::IllegalTransition {
                        offset: rec.offset,
                        alert_id: tr.alert_id,
                        from: tr.from,
                        to: tr.to,
                    });
                }
                if tr.from.is_none() {
                    entry.raised_at = rec.t;
                    let key = (tr.helmet_id.clone(), tr.kind);
                    if open.contains_key(&key) {
                        violations.push(LogViolation::DuplicateOpen {
                            offset: rec.offset,
                            helmet: tr.helmet_id.clone(),
                            kind: tr.kind,
                        });
                    }
                    open.insert(key, tr.alert_id);
                    summary.alerts += 1;
                } else if rec.t < entry.raised_at {
                    violations.push(LogViolation::BeforeRaise {
                        offset: rec.offset,
                        alert_id: tr.alert_id,
                        t: rec.t,
                        raised_at: entry.raised_at,
                    });
                }
                match tr.to {
                    AlertState::Notified => entry.reached_notified = true,
                    AlertState::Escalated => entry.escalated = true,
                    AlertState::Resolved => {
                        open.remove(&(tr.helmet_id.clone(), tr.kind));
                    }
                    _ => {}
                }
                entry.state = Some(tr.to);
            }
            RecordBody::Notification(n) => {
                summary.notifications += 1;
                let entry = alerts.entry(n.alert.alert_id).or_default();
                match n.reason {
                    NotificationReason::Initial => entry.initial += 1,
                    NotificationReason::Escalation => entry.escalation += 1,
                }
            }
            _ => {}
        }
    }

    for (id, r) in &alerts {
        let expected_initial = usize::from(r.reached_notified);
        let expected_escalation = usize::from(r.escalated);
        if r.initial != expected_initial || r.escalation != expected_escalation {
            violations.push(LogViolation::NotificationCount {
                alert_id: *id,
                initial: r.initial,
                escalation: r.escalation,
                escalated: r.escalated,
            });
        }
    }

    if violations.is_empty() {
        Ok(summary)
    } else {
        Err(violations)
    }
}
