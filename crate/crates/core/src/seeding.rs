//! Seed derivation. Substreams are keyed by content, never by iteration
//! order, so parallel and sequential schedules draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, stable across platforms and toolchains.
fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Seed(u64);

impl Seed {
    pub(crate) fn new(root: u64) -> Self {
        Seed(splitmix64(root))
    }

    pub(crate) fn with_u64(self, v: u64) -> Self {
        Seed(splitmix64(self.0 ^ splitmix64(v)))
    }

    pub(crate) fn with_str(self, s: &str) -> Self {
        self.with_u64(hash_str(s))
    }

    pub(crate) fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// The derived value itself, for APIs that take a plain `u64` seed.
    pub(crate) fn rng_u64(self) -> u64 {
        self.0
    }
}
