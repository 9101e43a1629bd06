//! Seedable, splittable random streams.
//!
//! Every random draw in the crate comes from a [`Stream`]. A stream is a
//! 64-bit key; [`Stream::split`] derives an independent child key, so trials
//! can be generated in any order (or in parallel) with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Random generator handed to the sampling routines.
pub type StreamRng = ChaCha12Rng;

/// Well-known child labels.
pub mod label {
    pub const INPUT: u64 = 0x1;
    pub const NOISE: u64 = 0x2;
    pub const SIGNS: u64 = 0x3;
    pub const TRIAL: u64 = 0x10;
    pub const PROBE: u64 = 0x20;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream {
    key: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            key: mix(seed ^ 0x5350_535f_454f_4121),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Child stream for `label`; distinct labels give unrelated streams.
    pub fn split(&self, label: u64) -> Stream {
        Stream {
            key: mix(self
                .key
                .wrapping_add(mix(label.wrapping_add(0x9e37_79b9_7f4a_7c15)))),
        }
    }

    /// Child stream for trial number `index`.
    pub fn trial(&self, index: usize) -> Stream {
        self.split(label::TRIAL).split(index as u64)
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::seed_from_u64(self.key)
    }
}

// splitmix64 finaliser
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
