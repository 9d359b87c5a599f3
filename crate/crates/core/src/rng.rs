//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`)
//! seeded with `ChaCha8Rng::seed_from_u64(seed)` and then moved to a
//! purpose-specific stream with `set_stream(Stream as u64)`, so independent
//! consumers of one user seed never share a keystream. Child seeds for
//! repeated runs come from [`split_seed`], a SplitMix64 step over
//! `seed + index`. Shuffles use `rand` 0.9's `SliceRandom::shuffle`;
//! Gaussians use `rand_distr::StandardNormal`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    TrainShuffle = 1,
    KShot = 2,
    MixtureNoise = 3,
    Corruption = 4,
    ManifestSeeds = 5,
    ProbeInit = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// SplitMix64 finalizer over `seed + index`: derives independent child seeds.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
