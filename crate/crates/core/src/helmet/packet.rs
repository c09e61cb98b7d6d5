use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::types::{Channel, HelmetId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub channel: Channel,
    pub value: f64,
    pub unit: String,
}

impl Reading {
    pub fn new(channel: Channel, value: f64) -> Self {
        Self {
            channel,
            value,
            unit: channel.unit().to_owned(),
        }
    }
}

/// One helmet report. Field names are the wire names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPacket {
    pub helmet_id: HelmetId,
    pub seq: u64,
    pub t_ms: Millis,
    pub readings: Vec<Reading>,
    pub battery_pct: f64,
    pub worn: bool,
    pub local_alarms: Vec<Channel>,
    pub fall: bool,
}

impl TelemetryPacket {
    pub fn reading(&self, channel: Channel) -> Option<f64> {
        self.readings
            .iter()
            .find(|r| r.channel == channel)
            .map(|r| r.value)
    }

    pub fn has_alarm(&self, channel: Channel) -> bool {
        self.local_alarms.contains(&channel)
    }
}
