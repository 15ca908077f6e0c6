//! Deterministic seed derivation.
//!
//! Every randomized stage receives its own RNG derived from a master seed and
//! a `(stream, index)` pair, so adding repetitions or reordering stages never
//! perturbs the seeds of earlier ones.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Named RNG streams. The discriminant is part of the derivation, so streams
/// are independent even for equal indices.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Partition = 1,
    MatchTrain = 2,
    MatchTest = 3,
    CrossVal = 4,
    Simulate = 5,
    Sweep = 6,
    AltTest = 7,
}

/// SplitMix64 finalizer; full-period mixing of a 64-bit counter.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed, a stream tag and a counter.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    let mixed = splitmix64(master ^ splitmix64((stream as u64) << 32 | 0xa5a5));
    splitmix64(mixed ^ splitmix64(index))
}

/// The RNG used everywhere in this crate.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, stream: Stream, index: u64) -> Rng {
    rng_from_seed(derive_seed(master, stream, index))
}
