//! Ground-truth hazards, alerts recovered from the event log, and greedy
//! temporal matching between the two.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::control::{AlertId, AlertKind, EventLogRecord, RecordBody, Severity};
use crate::env::{HazardKind, MineEnvironment};
use crate::types::{HelmetId, ZoneId};

pub const DEFAULT_MATCH_SLACK_MS: Millis = 60_000;

/// One scripted hazard instance to be detected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hazard {
    pub hazard_id: usize,
    pub kind: AlertKind,
    pub zone_id: ZoneId,
    /// Set for helmet-level hazards (fall, removal).
    pub helmet_id: Option<HelmetId>,
    pub onset: Millis,
    /// `None` when the hazard persists to the end of the run.
    pub duration: Option<Millis>,
}

/// Hazards in the environment's event order. Rewear events are not hazards.
pub fn hazards_from_env(env: &MineEnvironment) -> Vec<Hazard> {
    env.events()
        .into_iter()
        .filter_map(|e| {
            let kind = match &e.kind {
                HazardKind::GasLeak { .. } => AlertKind::Gas,
                HazardKind::TempRamp { .. } => AlertKind::Temperature,
                HazardKind::NoiseBurst { .. } => AlertKind::Noise,
                HazardKind::Fall { .. } => AlertKind::Fall,
                HazardKind::HelmetRemoval { .. } => AlertKind::HelmetRemoved,
                HazardKind::HelmetRewear { .. } => return None,
            };
            Some((kind, e))
        })
        .enumerate()
        .map(|(i, (kind, e))| Hazard {
            hazard_id: i,
            kind,
            zone_id: e.location.clone(),
            helmet_id: e.kind.helmet().cloned(),
            onset: e.onset,
            duration: match env.hazard_duration(e) {
                Some(0) if kind.is_environmental() => None,
                d => d,
            },
        })
        .collect()
}

/// The identity of a raised alert, as recovered from its first transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertSummary {
    pub alert_id: AlertId,
    pub kind: AlertKind,
    pub severity: Severity,
    pub helmet_id: HelmetId,
    pub zone_id: ZoneId,
    pub raised_at: Millis,
}

/// Every raised alert in the log, with its final severity.
pub fn alerts_from_log(records: &[EventLogRecord]) -> Vec<AlertSummary> {
    let mut out: BTreeMap<AlertId, AlertSummary> = BTreeMap::new();
    for r in records {
        if let RecordBody::AlertTransition(tr) = &r.body {
            match out.get_mut(&tr.alert_id) {
                Some(a) => a.severity = tr.severity,
                None if tr.from.is_none() => {
                    out.insert(
                        tr.alert_id,
                        AlertSummary {
                            alert_id: tr.alert_id,
                            kind: tr.kind,
                            severity: tr.severity,
                            helmet_id: tr.helmet_id.clone(),
                            zone_id: tr.zone_id.clone(),
                            raised_at: r.t,
                        },
                    );
                }
                None => {}
            }
        }
    }
    out.into_values().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MatchWindow {
    /// Hazard duration plus `slack_ms`; persistent hazards never close.
    HazardDuration {
        slack_ms: Millis,
    },
    Fixed {
        window_ms: Millis,
    },
}

impl Default for MatchWindow {
    fn default() -> Self {
        MatchWindow::HazardDuration {
            slack_ms: DEFAULT_MATCH_SLACK_MS,
        }
    }
}

impl MatchWindow {
    /// Latest raised-at that can still match `h`.
    pub fn closes_at(&self, h: &Hazard) -> Option<Millis> {
        match *self {
            MatchWindow::Fixed { window_ms } => Some(h.onset + window_ms),
            MatchWindow::HazardDuration { slack_ms } => h.duration.map(|d| h.onset + d + slack_ms),
        }
    }
}

/// Whether `alert` may be credited to `hazard`.
pub fn compatible(hazard: &Hazard, alert: &AlertSummary, window: MatchWindow) -> bool {
    hazard.kind == alert.kind
        && hazard.zone_id == alert.zone_id
        && hazard
            .helmet_id
            .as_ref()
            .is_none_or(|h| *h == alert.helmet_id)
        && alert.raised_at >= hazard.onset
        && window
            .closes_at(hazard)
            .is_none_or(|end| alert.raised_at <= end)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Outcome {
    TruePositive { hazard_id: usize },
    Duplicate { hazard_id: usize },
    FalsePositive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertOutcome {
    pub alert_id: AlertId,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPair {
    pub hazard_id: usize,
    pub alert_id: AlertId,
    pub onset: Millis,
    pub raised_at: Millis,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    /// In matching (raised-at) order.
    pub outcomes: Vec<AlertOutcome>,
    pub matches: Vec<MatchPair>,
    pub missed: Vec<usize>,
}

impl Classification {
    fn count(&self, f: impl Fn(&Outcome) -> bool) -> usize {
        self.outcomes.iter().filter(|o| f(&o.outcome)).count()
    }

    pub fn tp(&self) -> usize {
        self.matches.len()
    }

    pub fn fp(&self) -> usize {
        self.count(|o| matches!(o, Outcome::FalsePositive))
    }

    pub fn fn_count(&self) -> usize {
        self.missed.len()
    }

    pub fn duplicates(&self) -> usize {
        self.count(|o| matches!(o, Outcome::Duplicate { .. }))
    }
}

/// Greedy matching in raised-at order. Each alert takes the earliest-onset
/// compatible hazard that is still unmatched; an alert that finds none but
/// shares (helmet, kind) with an alert already credited to a compatible
/// hazard is a duplicate.
pub fn match_alerts(
    hazards: &[Hazard],
    alerts: &[AlertSummary],
    window: MatchWindow,
) -> Classification {
    let mut order: Vec<&AlertSummary> = alerts.iter().collect();
    order.sort_by_key(|a| (a.raised_at, a.alert_id));

    let mut credited: BTreeMap<usize, Vec<&HelmetId>> = BTreeMap::new();
    let mut out = Classification::default();
    for alert in order {
        let fresh = hazards
            .iter()
            .filter(|h| !credited.contains_key(&h.hazard_id) && compatible(h, alert, window))
            .min_by_key(|h| (h.onset, h.hazard_id));
        let outcome = if let Some(h) = fresh {
            credited.insert(h.hazard_id, vec![&alert.helmet_id]);
            out.matches.push(MatchPair {
                hazard_id: h.hazard_id,
                alert_id: alert.alert_id,
                onset: h.onset,
                raised_at: alert.raised_at,
            });
            Outcome::TruePositive {
                hazard_id: h.hazard_id,
            }
        } else if let Some(h) = hazards.iter().find(|h| {
            credited
                .get(&h.hazard_id)
                .is_some_and(|helmets| helmets.contains(&&alert.helmet_id))
                && compatible(h, alert, window)
        }) {
            Outcome::Duplicate {
                hazard_id: h.hazard_id,
            }
        } else {
            Outcome::FalsePositive
        };
        out.outcomes.push(AlertOutcome {
            alert_id: alert.alert_id,
            outcome,
        });
    }
    out.missed = hazards
        .iter()
        .filter(|h| !credited.contains_key(&h.hazard_id))
        .map(|h| h.hazard_id)
        .collect();
    out
}
