//! Append-only event log with an in-memory offset index.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::alert::{Alert, AlertId, AlertKind, AlertState, Severity};
use super::timeline::Liveness;
use crate::clock::Millis;
use crate::helmet::TelemetryPacket;
use crate::types::{HelmetId, OperatorId, ZoneId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Packet,
    AlertTransition,
    Notification,
    OperatorAction,
    Liveness,
}

impl RecordKind {
    pub fn from_name(s: &str) -> Option<RecordKind> {
        use RecordKind::*;
        match s {
            "packet" => Some(Packet),
            "alert_transition" => Some(AlertTransition),
            "notification" => Some(Notification),
            "operator_action" => Some(OperatorAction),
            "liveness" => Some(Liveness),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub arrival_ms: Millis,
    pub packet: TelemetryPacket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionChange {
    /// A lifecycle state change.
    State,
    /// Same state, severity raised by cross-helmet fusion.
    Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub alert_id: AlertId,
    pub helmet_id: HelmetId,
    pub zone_id: ZoneId,
    pub kind: AlertKind,
    pub severity: Severity,
    pub change: TransitionChange,
    pub from: Option<AlertState>,
    pub to: AlertState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationReason {
    Initial,
    Escalation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotificationRecord {
    pub channel: String,
    pub reason: NotificationReason,
    pub alert: Alert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorActionKind {
    Acknowledge,
    Resolve,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorActionRecord {
    pub operator_id: OperatorId,
    pub action: OperatorActionKind,
    pub alert_id: AlertId,
    pub helmet_id: HelmetId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LivenessRecord {
    pub helmet_id: HelmetId,
    pub from: Liveness,
    pub to: Liveness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum RecordBody {
    Packet(PacketRecord),
    AlertTransition(TransitionRecord),
    Notification(NotificationRecord),
    OperatorAction(OperatorActionRecord),
    Liveness(LivenessRecord),
}

impl RecordBody {
    pub fn kind(&self) -> RecordKind {
        match self {
            RecordBody::Packet(_) => RecordKind::Packet,
            RecordBody::AlertTransition(_) => RecordKind::AlertTransition,
            RecordBody::Notification(_) => RecordKind::Notification,
            RecordBody::OperatorAction(_) => RecordKind::OperatorAction,
            RecordBody::Liveness(_) => RecordKind::Liveness,
        }
    }

    pub fn helmet_id(&self) -> &HelmetId {
        match self {
            RecordBody::Packet(p) => &p.packet.helmet_id,
            RecordBody::AlertTransition(r) => &r.helmet_id,
            RecordBody::Notification(n) => &n.alert.helmet_id,
            RecordBody::OperatorAction(a) => &a.helmet_id,
            RecordBody::Liveness(l) => &l.helmet_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogRecord {
    pub offset: u64,
    pub t: Millis,
    #[serde(flatten)]
    pub body: RecordBody,
}

impl EventLogRecord {
    pub fn kind(&self) -> RecordKind {
        self.body.kind()
    }

    /// Records pushed on the live stream: notifications and timeline
    /// updates (packets).
    pub fn is_streamed(&self) -> bool {
        matches!(
            self.body,
            RecordBody::Notification(_) | RecordBody::Packet(_)
        )
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log records always serialize")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryQuery {
    pub helmet: Option<HelmetId>,
    pub kind: Option<RecordKind>,
    pub from_ms: Millis,
    pub to_ms: Millis,
    /// First log offset to consider.
    pub offset: u64,
    pub limit: Option<usize>,
}

impl HistoryQuery {
    pub fn everything() -> Self {
        Self {
            to_ms: Millis::MAX,
            ..Default::default()
        }
    }
}

#[derive(Default)]
pub struct EventLog {
    records: Vec<EventLogRecord>,
    by_helmet: BTreeMap<HelmetId, Vec<usize>>,
    sink: Option<Box<dyn Write + Send>>,
    sink_error: Option<String>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog")
            .field("len", &self.records.len())
            .field("has_sink", &self.sink.is_some())
            .finish()
    }
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mirror every appended record as one JSON line into `sink`.
    pub fn with_sink(sink: Box<dyn Write + Send>) -> Self {
        Self {
            sink: Some(sink),
            ..Self::default()
        }
    }

    pub fn append(&mut self, t: Millis, body: RecordBody) -> &EventLogRecord {
        let offset = self.records.len() as u64;
        let record = EventLogRecord { offset, t, body };
        if let Some(sink) = self.sink.as_mut() {
            let line = record.to_json_line();
            if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                tracing::error!(error = %e, "event log sink write failed");
                self.sink_error.get_or_insert_with(|| e.to_string());
            }
        }
        self.by_helmet
            .entry(record.body.helmet_id().clone())
            .or_default()
            .push(offset as usize);
        self.records.push(record);
        self.records.last().expect("just pushed")
    }

    pub fn sink_error(&self) -> Option<&str> {
        self.sink_error.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EventLogRecord] {
        &self.records
    }

    pub fn get(&self, offset: u64) -> Option<&EventLogRecord> {
        self.records.get(offset as usize)
    }

    /// Streamed records at or after `offset`: what a reconnecting subscriber
    /// replays.
    pub fn replay_from(&self, offset: u64) -> impl Iterator<Item = &EventLogRecord> {
        self.records
            .iter()
            .skip(offset as usize)
            .filter(|r| r.is_streamed())
    }

    pub fn query(&self, q: &HistoryQuery) -> Vec<&EventLogRecord> {
        let matches = |r: &&EventLogRecord| {
            r.offset >= q.offset
                && r.t >= q.from_ms
                && r.t <= q.to_ms
                && q.kind.is_none_or(|k| r.kind() == k)
        };
        let limit = q.limit.unwrap_or(usize::MAX);
        match &q.helmet {
            Some(h) => self
                .by_helmet
                .get(h)
                .into_iter()
                .flatten()
                .map(|&i| &self.records[i])
                .filter(matches)
                .take(limit)
                .collect(),
            None => self.records.iter().filter(matches).take(limit).collect(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            writeln!(w, "{}", r.to_json_line())?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Load a JSON-lines log, checking offsets are gapless from zero.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<EventLog, String> {
        let mut log = EventLog::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EventLogRecord =
                serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
            if rec.offset != log.len() as u64 {
                return Err(format!(
                    "line {}: expected offset {}, found {}",
                    i + 1,
                    log.len(),
                    rec.offset
                ));
            }
            log.append(rec.t, rec.body);
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::helmet::Reading;
    use crate::types::Channel;

    fn packet(helmet: &str, seq: u64, t: Millis) -> RecordBody {
        RecordBody::Packet(PacketRecord {
            arrival_ms: t,
            packet: TelemetryPacket {
                helmet_id: helmet.into(),
                seq,
                t_ms: t,
                readings: vec![Reading::new(Channel::Co, 1.5)],
                battery_pct: 99.0,
                worn: true,
                local_alarms: vec![],
                fall: false,
            },
        })
    }

    fn sample_log() -> EventLog {
        let mut log = EventLog::new();
        for i in 0..30u64 {
            let h = ["h1", "h2", "h3"][(i % 3) as usize];
            log.append(i * 100, packet(h, i / 3 + 1, i * 100));
        }
        log
    }

    #[test]
    fn empty_log_query() {
        assert!(EventLog::new()
            .query(&HistoryQuery::everything())
            .is_empty());
    }

    #[test]
    fn offsets_are_gapless() {
        let log = sample_log();
        for (i, r) in log.records().iter().enumerate() {
            assert_eq!(r.offset, i as u64);
        }
    }

    #[test]
    fn helmet_filter_matches_linear_scan() {
        let log = sample_log();
        for h in ["h1", "h2", "h3", "h4"] {
            let q = HistoryQuery {
                helmet: Some(h.into()),
                from_ms: 500,
                to_ms: 2000,
                ..HistoryQuery::everything()
            };
            let indexed: Vec<u64> = log.query(&q).iter().map(|r| r.offset).collect();
            let scanned: Vec<u64> = log
                .records()
                .iter()
                .filter(|r| r.body.helmet_id().as_str() == h && r.t >= 500 && r.t <= 2000)
                .map(|r| r.offset)
                .collect();
            assert_eq!(indexed, scanned);
        }
    }

    #[test]
    fn whole_range_returns_whole_log_in_order() {
        let log = sample_log();
        let all: Vec<u64> = log
            .query(&HistoryQuery::everything())
            .iter()
            .map(|r| r.offset)
            .collect();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn pagination() {
        let log = sample_log();
        let q = HistoryQuery {
            offset: 10,
            limit: Some(5),
            ..HistoryQuery::everything()
        };
        let page: Vec<u64> = log.query(&q).iter().map(|r| r.offset).collect();
        assert_eq!(page, vec![10, 11, 12, 13, 14]);
    }

    #[test]
    fn jsonl_round_trip() {
        let log = sample_log();
        let text = log.to_jsonl();
        let back = EventLog::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back.records(), log.records());
        assert_eq!(back.to_jsonl(), text);
        let first = text.lines().next().unwrap();
        assert!(first.starts_with(r#"{"offset":0,"t":0,"kind":"packet","payload":{"#));
    }

    #[test]
    fn read_rejects_offset_gap() {
        let log = sample_log();
        let text: String = log
            .to_jsonl()
            .lines()
            .enumerate()
            .filter(|(i, _)| *i != 3)
            .map(|(_, l)| format!("{l}\n"))
            .collect();
        assert!(EventLog::read_jsonl(text.as_bytes()).is_err());
    }
}
