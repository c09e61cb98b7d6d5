//! Live front end for a [`Simulation`]: the HTTP API, the resumable JSON
//! lines stream, a length-delimited TCP ingest and a wall-clock ticker.
//!
//! Every mutation goes through one mutex around the simulation, so the
//! control unit sees a single ordered event loop whatever the transport.

mod api;
mod stream;
mod tcp;

use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use minesentinel_core::harness::Simulation;
use minesentinel_core::Millis;
use tokio::sync::watch;

pub use api::{router, ApiError};
pub use tcp::{serve_tcp, TcpAck};

struct Shared {
    sim: Mutex<Simulation>,
    /// Current log length, bumped after every mutation.
    log_len: watch::Sender<u64>,
}

#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    pub fn new(sim: Simulation) -> Self {
        let len = sim.control().log().len() as u64;
        Self {
            shared: Arc::new(Shared {
                sim: Mutex::new(sim),
                log_len: watch::Sender::new(len),
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Simulation> {
        self.shared.sim.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Run `f` against the simulation, then wake stream subscribers if the
    /// log grew.
    pub fn with_sim<R>(&self, f: impl FnOnce(&mut Simulation) -> R) -> R {
        let mut sim = self.lock();
        let out = f(&mut sim);
        let len = sim.control().log().len() as u64;
        drop(sim);
        self.shared.log_len.send_if_modified(|cur| {
            let grew = *cur != len;
            *cur = len;
            grew
        });
        out
    }

    pub fn tick(&self) -> Option<Millis> {
        self.with_sim(|s| s.tick())
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.shared.log_len.subscribe()
    }
}

/// Tick once per `period` of wall time until the simulation reaches its
/// horizon. Returns the last tick run.
pub async fn run_clock(state: AppState, period: Duration) -> Option<Millis> {
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut last = None;
    loop {
        interval.tick().await;
        match state.tick() {
            Some(t) => last = Some(t),
            None => return last,
        }
    }
}
