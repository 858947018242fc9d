//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a master
//! seed and a short list of tags (replication index, stream id, k, batch).
//! Tags are folded in with the SplitMix64 finalizer, so a stream depends only
//! on `(master, tags)` and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout. Fixed so reports stay reproducible across
/// versions.
pub type SlopeRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `seed = mix(...mix(mix(master) ^ tag_0) ^ tag_1 ...)`.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(master: u64, tags: &[u64]) -> SlopeRng {
    SlopeRng::seed_from_u64(derive_seed(master, tags))
}
