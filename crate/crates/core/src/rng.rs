//! Seed lineage: deterministic, order-independent random streams derived from
//! a root seed and a path of integer keys.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Stream = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the seed tree. Children and streams are pure functions of the
/// root seed and the key path, so replicate `k` of a simulation sees the same
/// numbers no matter how many other replicates ran before it or in parallel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedLineage {
    state: u64,
}

impl SeedLineage {
    pub fn new(seed: u64) -> Self {
        SeedLineage { state: splitmix64(seed ^ 0x6A09_E667_F3BC_C908) }
    }

    pub fn child(&self, key: u64) -> Self {
        SeedLineage { state: splitmix64(self.state ^ splitmix64(key.wrapping_add(0x3C6E_F372_FE94_F82B))) }
    }

    pub fn path(&self, keys: &[u64]) -> Self {
        keys.iter().fold(*self, |l, &k| l.child(k))
    }

    /// A 64-bit seed summarizing this node, for APIs that take plain seeds.
    pub fn seed(&self) -> u64 {
        splitmix64(self.state)
    }

    pub fn stream(&self) -> Stream {
        let mut bytes = [0u8; 32];
        let mut z = self.state;
        for chunk in bytes.chunks_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }

    pub fn stream_at(&self, keys: &[u64]) -> Stream {
        self.path(keys).stream()
    }
}
