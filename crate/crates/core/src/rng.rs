//! Named seed streams.
//!
//! Every random consumer derives its own ChaCha stream from the run seed and a
//! stable label, so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A seed plus a path of labels, turned into an independent ChaCha stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive a child stream from a label and an index.
    pub fn child(&self, label: &str, index: u64) -> SeedStream {
        let mut h = fnv1a(label.as_bytes()) ^ self.seed.rotate_left(17);
        h = splitmix(h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        SeedStream {
            seed: splitmix(h ^ self.seed),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
