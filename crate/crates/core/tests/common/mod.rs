//! Shared fixtures and independent oracles for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use minesentinel_core::control::{AlertId, AlertKind, Severity, Stamped, TimelineSnapshot};
use minesentinel_core::harness::{compatible, AlertSummary, Hazard, MatchWindow, Scenario};
use minesentinel_core::helmet::TelemetryPacket;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub fn parse(v: &Value) -> Scenario {
    Scenario::from_json_str(&v.to_string()).unwrap_or_else(|e| panic!("fixture invalid: {e}"))
}

/// Sensor overrides making every transducer ideal: no lag, noise or drift.
pub fn ideal_sensors() -> Value {
    let mut m = serde_json::Map::new();
    for k in [
        "co",
        "ch4",
        "lpg",
        "temperature",
        "humidity",
        "noise",
        "accelerometer",
        "limit_switch",
    ] {
        m.insert(
            k.into(),
            json!({ "lag_time_constant": 0.0, "noise_stddev": 0.0, "drift_rate": 0.0 }),
        );
    }
    Value::Object(m)
}

/// One zone `z1` at the origin with `helmets` wifi helmets 5 m from the
/// base station and no events.
pub fn one_zone(horizon_ms: u64, helmets: usize) -> Value {
    let hs: Vec<Value> = (1..=helmets)
        .map(|i| json!({ "helmet_id": format!("h{i}"), "zone_id": "z1", "position": [5.0, i as f64] }))
        .collect();
    json!({
        "zones": [{ "zone_id": "z1", "position": [0.0, 0.0] }],
        "helmets": hs,
        "events": [],
        "config": { "horizon_ms": horizon_ms }
    })
}

/// Maximum bipartite matching size by brute force over alert choices.
pub fn exhaustive_tp(hazards: &[Hazard], alerts: &[AlertSummary], window: MatchWindow) -> usize {
    fn go(i: usize, h: &[Hazard], a: &[AlertSummary], w: MatchWindow, used: &mut [bool]) -> usize {
        if i == a.len() {
            return 0;
        }
        let mut best = go(i + 1, h, a, w, used);
        for j in 0..h.len() {
            if !used[j] && compatible(&h[j], &a[i], w) {
                used[j] = true;
                best = best.max(1 + go(i + 1, h, a, w, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, hazards, alerts, window, &mut vec![false; hazards.len()])
}

const KINDS: [AlertKind; 3] = [AlertKind::Gas, AlertKind::Noise, AlertKind::Temperature];

/// Up to 5 zone hazards, each alone in a 200 s slot so that no two match
/// windows (duration + 60 s) overlap, and up to 10 alerts scattered over
/// the same span.
pub fn small_matching_case(seed: u64) -> (Vec<Hazard>, Vec<AlertSummary>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zones = ["z1", "z2"];
    let n_h = rng.random_range(0..=5);
    let hazards: Vec<Hazard> = (0..n_h)
        .map(|i| Hazard {
            hazard_id: i,
            kind: KINDS[rng.random_range(0..KINDS.len())],
            zone_id: zones[rng.random_range(0..2)].into(),
            helmet_id: None,
            onset: i as u64 * 200_000 + rng.random_range(0..20) * 1000,
            duration: Some(rng.random_range(0..=60) * 1000),
        })
        .collect();
    let span = (n_h.max(1) as u64) * 200_000;
    let n_a = rng.random_range(0..=10);
    let alerts = (0..n_a)
        .map(|i| {
            // Bias towards alerts that land near a hazard.
            let (kind, zone, raised_at) = match hazards.get(rng.random_range(0..=n_h)) {
                Some(h) if rng.random_bool(0.7) => (
                    h.kind,
                    h.zone_id.clone(),
                    h.onset + rng.random_range(0..150) * 1000,
                ),
                _ => (
                    KINDS[rng.random_range(0..KINDS.len())],
                    zones[rng.random_range(0..2)].into(),
                    rng.random_range(0..span / 100) * 100,
                ),
            };
            AlertSummary {
                alert_id: AlertId(i as u64 + 1),
                kind,
                severity: Severity::Warning,
                helmet_id: format!("h{}", rng.random_range(1..=3)).as_str().into(),
                zone_id: zone,
                raised_at,
            }
        })
        .collect();
    (hazards, alerts)
}

/// Final timeline by brute force: distinct packets by seq, each field taken
/// from the packet with the latest sample time.
pub fn reference_timeline(helmet: &str, packets: &[TelemetryPacket]) -> TimelineSnapshot {
    let mut unique: BTreeMap<u64, &TelemetryPacket> = BTreeMap::new();
    for p in packets.iter().filter(|p| p.helmet_id.as_str() == helmet) {
        unique.entry(p.seq).or_insert(p);
    }
    let mut by_time: Vec<&TelemetryPacket> = unique.values().copied().collect();
    by_time.sort_by_key(|p| p.t_ms);
    let mut snap = TimelineSnapshot::new(helmet.into());
    snap.last_seq = unique.keys().max().copied();
    for p in by_time {
        let at = Some(p.t_ms);
        for r in &p.readings {
            snap.readings.insert(
                r.channel,
                Stamped {
                    value: r.value,
                    t_ms: at,
                },
            );
        }
        snap.worn = Stamped {
            value: p.worn,
            t_ms: at,
        };
        snap.battery = Stamped {
            value: p.battery_pct,
            t_ms: at,
        };
        snap.local_alarms = Stamped {
            value: p.local_alarms.clone(),
            t_ms: at,
        };
        snap.fall = Stamped {
            value: p.fall,
            t_ms: at,
        };
    }
    snap
}
