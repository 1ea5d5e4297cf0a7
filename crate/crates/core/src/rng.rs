//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from
//! `mix_seed(master, stream)`, so a query's output depends only on the master
//! seed and its index, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type WbcpRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `stream` from `master`.
pub fn mix_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_from_seed(seed: u64) -> WbcpRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, stream: u64) -> WbcpRng {
    rng_from_seed(mix_seed(master, stream))
}
