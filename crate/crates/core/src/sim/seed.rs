use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Seed of one replication. Every random stream of a run (one per stop, one
/// per bus) is derived from it, so replication `j` of two different
/// deployment patterns sees the same passengers and the same noise draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplicationSeed {
    pub base: u64,
    pub replication: u64,
}

pub(crate) const BUS_STREAM_OFFSET: u64 = 1000;

impl ReplicationSeed {
    pub fn new(base: u64, replication: u64) -> Self {
        Self { base, replication }
    }

    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.base.to_le_bytes());
        key[8..16].copy_from_slice(&self.replication.to_le_bytes());
        key[16..24].copy_from_slice(b"dblsim\0\0");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        rng
    }

    pub fn stop_stream(&self, stop: usize) -> ChaCha8Rng {
        self.stream(stop as u64)
    }

    pub fn bus_stream(&self, bus: usize) -> ChaCha8Rng {
        self.stream(BUS_STREAM_OFFSET + bus as u64)
    }
}
