//! Seed splitting for reproducible parallel ensembles.
//!
//! Every consumer of randomness receives a [`ChaCha8Rng`] keyed by the root
//! seed and a 64-bit stream id. ChaCha exposes 2^64 independent streams per
//! key, so trajectory `i` of an ensemble always draws the same numbers no
//! matter which rayon worker runs it or how many workers exist.
//!
//! Stream ids are namespaced by a purpose tag in the high 16 bits, the index
//! in the low 48 bits. Two subsystems sharing a root seed therefore never
//! read overlapping streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags for the high bits of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Purpose {
    Trajectory = 1,
    Bootstrap = 2,
    Probe = 3,
    Direct = 4,
    Pilot = 5,
    Reference = 6,
    Pairs = 7,
    Misc = 8,
}

/// The rng for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (index & 0xFFFF_FFFF_FFFF));
    rng
}

/// Derives a child seed, used when a stage needs a whole family of streams.
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
