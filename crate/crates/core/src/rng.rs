//! Seeded random streams keyed by trial and role.
//!
//! Each `(root seed, trial, role)` triple maps to its own ChaCha8 stream:
//! the root seed and trial index form the 256-bit key and the role selects
//! the stream id. Streams never share state, so trials and agents can be
//! processed in any order (or concurrently) with identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Who consumes a stream within a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Instance,
    Environment,
    Adversary,
    Topology,
    Agent(u32),
    Byzantine(u32),
}

impl Role {
    fn stream_id(self) -> u64 {
        match self {
            Role::Instance => 0,
            Role::Environment => 1,
            Role::Adversary => 2,
            Role::Topology => 3,
            Role::Agent(i) => (1 << 32) | u64::from(i),
            Role::Byzantine(i) => (2 << 32) | u64::from(i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub trial: u64,
    pub role: Role,
}

/// Opens the stream for `key` under `root_seed`.
pub fn stream(root_seed: u64, key: StreamKey) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&root_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&key.trial.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(key.role.stream_id());
    rng
}
