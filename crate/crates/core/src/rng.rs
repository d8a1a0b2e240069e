//! Counter-based seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator addressed by a
//! `(seed, stream)` pair, so replica `i` of an experiment draws the same
//! numbers no matter which worker runs it or in what order. Tree broods use
//! the same mechanism keyed by vertex, which makes a lazily grown environment
//! a pure function of its seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines two words into one well-mixed word.
#[inline]
pub fn combine(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b).rotate_left(23))
}

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Splits a master seed into named, indexed sub-seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSplitter {
    master: u64,
}

impl SeedSplitter {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// A child splitter for one component of a larger run.
    pub fn fork(&self, tag: &str) -> SeedSplitter {
        SeedSplitter::new(combine(self.master, tag_hash(tag)))
    }

    /// Plain 64-bit seed for replica `index` (used for environment seeds).
    pub fn seed(&self, index: u64) -> u64 {
        combine(self.master, index.wrapping_add(0x5EED))
    }

    /// Random stream for replica `index`.
    pub fn rng(&self, index: u64) -> Rng {
        stream_rng(self.master, index)
    }
}

/// FNV-1a, enough to turn a component name into a tag word.
pub fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
