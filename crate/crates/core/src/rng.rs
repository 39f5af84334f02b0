//! Seeded generators. Every stochastic routine takes an explicit generator so
//! runs are reproducible; sub-streams are derived by mixing identifiers into
//! the parent seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a parent seed and a list of ids.
pub fn derive_seed(parent: u64, ids: &[u64]) -> u64 {
    ids.iter().fold(mix(parent), |acc, &id| mix(acc ^ mix(id)))
}
