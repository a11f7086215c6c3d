//! Seeded, splittable randomness.
//!
//! Every stochastic step draws from a ChaCha8 stream: the 64-bit seed keys the
//! cipher and a 64-bit stream id selects an independent substream, so results
//! do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RandomSeed(pub u64);

impl RandomSeed {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Generator for substream `stream` of this seed.
    pub fn stream(self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream);
        rng
    }

    /// Child seed for item `index` (e.g. one phantom of an experiment).
    pub fn derive(self, index: u64) -> RandomSeed {
        RandomSeed(splitmix64(
            self.0 ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)),
        ))
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
