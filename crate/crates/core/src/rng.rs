//! Seed derivation.
//!
//! A run has one 64-bit seed. Every consumer derives its own ChaCha stream
//! from that seed plus a path of integers (a domain tag followed by indices
//! such as epoch or class id), so streams never overlap and do not depend
//! on the order in which they are requested.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags for derived streams.
pub mod tag {
    pub const COUNTS: u64 = 1;
    pub const SUPER_CENTERS: u64 = 2;
    pub const FINE_CENTERS: u64 = 3;
    pub const TRAIN_SAMPLES: u64 = 4;
    pub const TEST_SAMPLES: u64 = 5;
    pub const AUX_CENTERS: u64 = 6;
    pub const AUX_SAMPLES: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const AUX_EPOCH: u64 = 9;
    pub const INIT: u64 = 10;
    pub const CLASS_ORDER: u64 = 11;
    pub const PROBE: u64 = 12;
    pub const AUX_SELECT: u64 = 13;
    pub const FINE_BASIS: u64 = 14;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Hashes the path into a 256-bit ChaCha key.
    pub fn derive(&self, path: &[u64]) -> ChaCha8Rng {
        let mut state = splitmix64(self.seed);
        for &p in path {
            state = splitmix64(state ^ splitmix64(p.wrapping_add(GOLDEN)));
        }
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_mut(8).enumerate() {
            state = splitmix64(state.wrapping_add(i as u64));
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    /// Child seed stream rooted at `path`.
    pub fn child(&self, path: &[u64]) -> SeedStream {
        let mut state = splitmix64(self.seed);
        for &p in path {
            state = splitmix64(state ^ splitmix64(p.wrapping_add(GOLDEN)));
        }
        SeedStream { seed: state }
    }
}
