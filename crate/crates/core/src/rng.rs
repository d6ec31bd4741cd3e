//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`Seed`]. Child streams are
//! derived by the split function `child(i) = splitmix64(seed ^ splitmix64(i + φ))`,
//! so the root seed alone determines all draws regardless of how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    pub fn child(self, index: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(index.wrapping_add(GOLDEN))))
    }

    /// Shorthand for a chain of `child` calls.
    pub fn path(self, indices: &[u64]) -> Seed {
        indices.iter().fold(self, |s, &i| s.child(i))
    }

    pub fn rng(self) -> Stream {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
