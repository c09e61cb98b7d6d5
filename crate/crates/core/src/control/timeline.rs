use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::helmet::TelemetryPacket;
use crate::types::{Channel, HelmetId, ZoneId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Liveness {
    Online,
    Stale,
    Offline,
}

impl Liveness {
    pub fn classify(silence: Millis, stale_after: Millis, offline_after: Millis) -> Liveness {
        if silence > offline_after {
            Liveness::Offline
        } else if silence > stale_after {
            Liveness::Stale
        } else {
            Liveness::Online
        }
    }
}

/// A field value together with the packet time it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub value: T,
    pub t_ms: Option<Millis>,
}

impl<T> Stamped<T> {
    pub fn initial(value: T) -> Self {
        Self { value, t_ms: None }
    }

    /// Replace the value iff `t` is newer than the current stamp.
    pub fn offer(&mut self, value: T, t: Millis) -> bool {
        if self.t_ms.is_some_and(|cur| t <= cur) {
            return false;
        }
        self.value = value;
        self.t_ms = Some(t);
        true
    }
}

/// Sequence numbers seen so far: a contiguous prefix plus a sparse set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeqSet {
    below: u64,
    sparse: BTreeSet<u64>,
}

impl SeqSet {
    /// Returns false if `seq` was already present.
    pub fn insert(&mut self, seq: u64) -> bool {
        if seq < self.below || !self.sparse.insert(seq) {
            return false;
        }
        while self.sparse.remove(&self.below) {
            self.below += 1;
        }
        true
    }

    pub fn contains(&self, seq: u64) -> bool {
        seq < self.below || self.sparse.contains(&seq)
    }
}

/// The packet-derived part of a timeline, compared by ingest tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSnapshot {
    pub helmet_id: HelmetId,
    pub last_seq: Option<u64>,
    pub readings: BTreeMap<Channel, Stamped<f64>>,
    pub worn: Stamped<bool>,
    pub battery: Stamped<f64>,
    pub local_alarms: Stamped<Vec<Channel>>,
    pub fall: Stamped<bool>,
}

impl TimelineSnapshot {
    pub fn new(helmet_id: HelmetId) -> Self {
        Self {
            helmet_id,
            last_seq: None,
            readings: BTreeMap::new(),
            worn: Stamped::initial(true),
            battery: Stamped::initial(100.0),
            local_alarms: Stamped::initial(Vec::new()),
            fall: Stamped::initial(false),
        }
    }

    /// Fold one packet in; each field only moves forward in packet time.
    pub fn apply(&mut self, p: &TelemetryPacket) {
        self.last_seq = Some(self.last_seq.map_or(p.seq, |s| s.max(p.seq)));
        for r in &p.readings {
            self.readings
                .entry(r.channel)
                .or_insert_with(|| Stamped::initial(r.value))
                .offer(r.value, p.t_ms);
        }
        self.worn.offer(p.worn, p.t_ms);
        self.battery.offer(p.battery_pct, p.t_ms);
        self.local_alarms.offer(p.local_alarms.clone(), p.t_ms);
        self.fall.offer(p.fall, p.t_ms);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelmetTimeline {
    #[serde(flatten)]
    pub state: TimelineSnapshot,
    pub zone_id: ZoneId,
    /// Arrival time of the most recent accepted packet (or registration).
    pub last_packet_at: Millis,
    pub liveness: Liveness,
    #[serde(skip)]
    pub(crate) seen: SeqSet,
}

impl HelmetTimeline {
    pub fn new(helmet_id: HelmetId, zone_id: ZoneId, registered_at: Millis) -> Self {
        Self {
            state: TimelineSnapshot::new(helmet_id),
            zone_id,
            last_packet_at: registered_at,
            liveness: Liveness::Online,
            seen: SeqSet::default(),
        }
    }

    pub fn helmet_id(&self) -> &HelmetId {
        &self.state.helmet_id
    }

    pub fn worn(&self) -> bool {
        self.state.worn.value
    }

    pub fn battery(&self) -> f64 {
        self.state.battery.value
    }

    pub fn reading(&self, channel: Channel) -> Option<f64> {
        self.state.readings.get(&channel).map(|s| s.value)
    }

    pub fn local_alarm(&self, channel: Channel) -> bool {
        self.state.local_alarms.value.contains(&channel)
    }
}
