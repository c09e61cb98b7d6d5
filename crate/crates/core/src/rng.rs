//! Per-entity random streams derived from the run seed.
//!
//! Each helmet and each link gets its own ChaCha stream seeded from
//! `SHA-256(domain || seed || id)`, so adding an entity never shifts the
//! draws seen by any other entity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    Sensor,
    Link,
    Scenario,
    Fault,
}

impl StreamDomain {
    fn tag(self) -> &'static [u8] {
        match self {
            StreamDomain::Sensor => b"minesentinel/sensor",
            StreamDomain::Link => b"minesentinel/link",
            StreamDomain::Scenario => b"minesentinel/scenario",
            StreamDomain::Fault => b"minesentinel/fault",
        }
    }
}

pub fn stream_seed(domain: StreamDomain, seed: u64, id: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(domain.tag());
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    hasher.finalize().into()
}

pub fn stream(domain: StreamDomain, seed: u64, id: &str) -> SimRng {
    SimRng::from_seed(stream_seed(domain, seed, id))
}
