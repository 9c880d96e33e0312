//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit `u64` seed. Streams are
//! ChaCha8 generators keyed by that seed; independent purposes (pairing,
//! noise, shuffling of a given epoch, ...) use distinct ChaCha stream ids so
//! they never share keystream even when the seed is the same. ChaCha is a
//! counter-mode generator, so a stream id is a cheap and exact way to split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids for the distinct stochastic purposes in the crate.
pub mod stream {
    pub const SAMPLE: u64 = 1;
    pub const PAIRING: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const SUBSAMPLE: u64 = 6;
    /// Per-epoch shuffles use `SHUFFLE_BASE + epoch`.
    pub const SHUFFLE_BASE: u64 = 1 << 32;
}

/// Generator for `(seed, stream)`.
pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, used to give each trial of an experiment its own
/// independent seed space.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer over the combined words.
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
