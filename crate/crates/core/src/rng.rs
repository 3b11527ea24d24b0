//! Seeded random streams.
//!
//! Every random draw in a drop comes from a ChaCha stream keyed by the
//! campaign seed, a stream tag and an index (frame number, etc). Two calls with
//! the same key always produce the same sequence, independently of the order
//! in which other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Independent random streams used while building one drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Topology,
    Fading,
    Shadowing,
    CsiError,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Topology => 0x746f_706f,
            Stream::Fading => 0x6661_6465,
            Stream::Shadowing => 0x7368_6164,
            Stream::CsiError => 0x6373_6965,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Child seed for a sub-experiment, e.g. one drop of a campaign.
    pub fn derive(&self, parts: &[u64]) -> RngSeed {
        let mut h = splitmix64(self.seed);
        for &p in parts {
            h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
        }
        RngSeed { seed: h }
    }

    pub fn rng(&self, stream: Stream, index: u64) -> ChaCha8Rng {
        let key = splitmix64(splitmix64(self.seed ^ stream.tag()) ^ index);
        ChaCha8Rng::seed_from_u64(key)
    }
}
