//! Helmet-to-control-unit wire format: one JSON object per packet, framed
//! with a 4-byte big-endian length on stream transports.

use std::collections::BTreeSet;
use std::io::{self, Read, Write};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::helmet::{Reading, TelemetryPacket};
use crate::types::{Channel, HelmetId};

pub const MAX_FRAME_BYTES: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("packet is not valid JSON: {0}")]
    Json(String),
    #[error("field `{field}`: {reason}")]
    Field { field: String, reason: String },
}

fn bad(field: impl Into<String>, reason: impl Into<String>) -> WireError {
    WireError::Field {
        field: field.into(),
        reason: reason.into(),
    }
}

pub fn encode_packet(p: &TelemetryPacket) -> String {
    serde_json::to_string(p).expect("packets always serialize")
}

/// Parse a packet, naming the first field that is missing or malformed.
pub fn decode_packet(text: &str) -> Result<TelemetryPacket, WireError> {
    let value: Value = serde_json::from_str(text).map_err(|e| WireError::Json(e.to_string()))?;
    decode_value(&value)
}

pub fn decode_value(value: &Value) -> Result<TelemetryPacket, WireError> {
    let obj = value
        .as_object()
        .ok_or_else(|| bad("<root>", "expected a JSON object"))?;
    let get = |name: &str| obj.get(name).ok_or_else(|| bad(name, "missing"));

    let helmet_id = get("helmet_id")?
        .as_str()
        .ok_or_else(|| bad("helmet_id", "expected a string"))?;
    let seq = get("seq")?
        .as_u64()
        .ok_or_else(|| bad("seq", "expected an unsigned integer"))?;
    let t_ms = get("t_ms")?
        .as_u64()
        .ok_or_else(|| bad("t_ms", "expected an unsigned integer"))?;
    let readings_v = get("readings")?
        .as_array()
        .ok_or_else(|| bad("readings", "expected an array"))?;
    let mut readings = Vec::with_capacity(readings_v.len());
    for (i, r) in readings_v.iter().enumerate() {
        readings.push(decode_reading(i, r)?);
    }
    let battery_pct = get("battery_pct")?
        .as_f64()
        .ok_or_else(|| bad("battery_pct", "expected a number"))?;
    let worn = get("worn")?
        .as_bool()
        .ok_or_else(|| bad("worn", "expected a boolean"))?;
    let alarms_v = get("local_alarms")?
        .as_array()
        .ok_or_else(|| bad("local_alarms", "expected an array"))?;
    let mut local_alarms = Vec::with_capacity(alarms_v.len());
    for (i, a) in alarms_v.iter().enumerate() {
        let field = format!("local_alarms[{i}]");
        let name = a
            .as_str()
            .ok_or_else(|| bad(&field, "expected a channel name"))?;
        local_alarms.push(
            Channel::from_name(name)
                .ok_or_else(|| bad(&field, format!("unknown channel `{name}`")))?,
        );
    }
    let fall = get("fall")?
        .as_bool()
        .ok_or_else(|| bad("fall", "expected a boolean"))?;

    let packet = TelemetryPacket {
        helmet_id: HelmetId::new(helmet_id),
        seq,
        t_ms,
        readings,
        battery_pct,
        worn,
        local_alarms,
        fall,
    };
    validate_packet(&packet)?;
    Ok(packet)
}

fn decode_reading(i: usize, r: &Value) -> Result<Reading, WireError> {
    let obj: &Map<String, Value> = r
        .as_object()
        .ok_or_else(|| bad(format!("readings[{i}]"), "expected an object"))?;
    let field = |name: &str| format!("readings[{i}].{name}");
    let name = obj
        .get("channel")
        .and_then(Value::as_str)
        .ok_or_else(|| bad(field("channel"), "expected a channel name"))?;
    let channel = Channel::from_name(name)
        .ok_or_else(|| bad(field("channel"), format!("unknown channel `{name}`")))?;
    let value = obj
        .get("value")
        .and_then(Value::as_f64)
        .ok_or_else(|| bad(field("value"), "expected a number"))?;
    let unit = obj
        .get("unit")
        .and_then(Value::as_str)
        .ok_or_else(|| bad(field("unit"), "expected a string"))?;
    Ok(Reading {
        channel,
        value,
        unit: unit.to_owned(),
    })
}

/// Semantic checks shared by the JSON decoder and in-process ingest.
pub fn validate_packet(p: &TelemetryPacket) -> Result<(), WireError> {
    if p.helmet_id.as_str().is_empty() {
        return Err(bad("helmet_id", "must not be empty"));
    }
    let mut seen = BTreeSet::new();
    for (i, r) in p.readings.iter().enumerate() {
        if !seen.insert(r.channel) {
            return Err(bad(format!("readings[{i}].channel"), "duplicate channel"));
        }
        if !r.value.is_finite() {
            return Err(bad(format!("readings[{i}].value"), "must be finite"));
        }
        if r.unit != r.channel.unit() {
            return Err(bad(
                format!("readings[{i}].unit"),
                format!("expected `{}` for {}", r.channel.unit(), r.channel),
            ));
        }
    }
    if !(0.0..=100.0).contains(&p.battery_pct) {
        return Err(bad("battery_pct", "must be within [0, 100]"));
    }
    let mut alarms = BTreeSet::new();
    for (i, c) in p.local_alarms.iter().enumerate() {
        if !alarms.insert(*c) {
            return Err(bad(format!("local_alarms[{i}]"), "duplicate channel"));
        }
    }
    Ok(())
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    if payload.len() > MAX_FRAME_BYTES {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "frame too large",
        ));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)
}

/// Read one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "frame too large",
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}
