//! Deterministic simulation and monitoring core for underground-mine hazard
//! detection with smart helmets.
//!
//! The pipeline is split the same way the runtime system is:
//!
//! - [`env`] holds the scripted ground truth of the mine (gas, temperature,
//!   humidity, noise) per zone, plus per-helmet motion and switch truth.
//! - [`helmet`] simulates one helmet: imperfect transducers, EWMA filtering,
//!   hysteresis thresholds, fall and removal detection, battery accounting
//!   and telemetry packetization.
//! - [`net`] models the star-topology wireless hop with per-protocol range,
//!   latency, loss and transmit energy.
//! - [`control`] is the central service: authenticated ingest, timelines,
//!   alert lifecycle, escalation and the append-only event log.
//! - [`harness`] loads scenarios, drives the virtual clock and scores the
//!   resulting alerts against ground truth.

pub mod clock;
pub mod control;
pub mod env;
pub mod exec;
pub mod harness;
pub mod helmet;
pub mod net;
pub mod rng;
pub mod types;

pub use clock::{Millis, TICK_MS};
pub use types::{Channel, HelmetId, ZoneId};
