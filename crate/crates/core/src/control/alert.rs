use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::helmet::Reading;
use crate::types::{Channel, HelmetId, OperatorId, ZoneId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlertId(pub u64);

impl fmt::Display for AlertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    Gas,
    Temperature,
    Noise,
    Fall,
    HelmetRemoved,
    Offline,
    LowBattery,
}

impl AlertKind {
    pub fn for_channel(channel: Channel) -> Option<AlertKind> {
        match channel {
            Channel::Co | Channel::Ch4 | Channel::Lpg => Some(AlertKind::Gas),
            Channel::Temperature => Some(AlertKind::Temperature),
            Channel::Noise => Some(AlertKind::Noise),
            Channel::Humidity => None,
        }
    }

    /// Environmental kinds resolve themselves once the reading clears.
    pub fn is_environmental(self) -> bool {
        matches!(
            self,
            AlertKind::Gas | AlertKind::Temperature | AlertKind::Noise
        )
    }

    /// Kinds that correspond to a physical hazard (as opposed to helmet
    /// health such as offline or low battery).
    pub fn is_hazard(self) -> bool {
        !matches!(self, AlertKind::Offline | AlertKind::LowBattery)
    }

    pub fn name(self) -> &'static str {
        match self {
            AlertKind::Gas => "gas",
            AlertKind::Temperature => "temperature",
            AlertKind::Noise => "noise",
            AlertKind::Fall => "fall",
            AlertKind::HelmetRemoved => "helmet_removed",
            AlertKind::Offline => "offline",
            AlertKind::LowBattery => "low_battery",
        }
    }
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertState {
    Raised,
    Notified,
    Acknowledged,
    Resolved,
    Escalated,
}

impl AlertState {
    pub fn can_transition(self, to: AlertState) -> bool {
        use AlertState::*;
        matches!(
            (self, to),
            (Raised, Notified)
                | (Notified, Acknowledged)
                | (Notified, Escalated)
                | (Escalated, Acknowledged)
                | (Acknowledged, Resolved)
        )
    }

    pub fn is_open(self) -> bool {
        self != AlertState::Resolved
    }

    pub fn name(self) -> &'static str {
        match self {
            AlertState::Raised => "raised",
            AlertState::Notified => "notified",
            AlertState::Acknowledged => "acknowledged",
            AlertState::Resolved => "resolved",
            AlertState::Escalated => "escalated",
        }
    }

    pub fn from_name(name: &str) -> Option<AlertState> {
        use AlertState::*;
        [Raised, Notified, Acknowledged, Resolved, Escalated]
            .into_iter()
            .find(|s| s.name() == name)
    }
}

impl fmt::Display for AlertState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The readings that caused an alert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub seq: Option<u64>,
    pub t_ms: Millis,
    pub channels: Vec<Channel>,
    pub readings: Vec<Reading>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: AlertId,
    pub kind: AlertKind,
    pub severity: Severity,
    pub helmet_id: HelmetId,
    pub zone_id: ZoneId,
    pub raised_at: Millis,
    pub state: AlertState,
    pub ack_by: Option<OperatorId>,
    pub evidence: Evidence,
    pub state_changed_at: Millis,
}
