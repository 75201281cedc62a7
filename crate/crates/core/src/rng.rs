//! Seed derivation. Every random stream is a ChaCha8 generator keyed by a
//! seed mixed from a root seed and a purpose-specific path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer over the combined words.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let s = path.iter().fold(seed, |acc, &p| mix(acc, p));
    ChaCha8Rng::seed_from_u64(s)
}

// Salts for the different consumers of randomness.
pub const SALT_WEIGHTS: u64 = 1;
pub const SALT_DELAYS: u64 = 2;
pub const SALT_INHIBITION: u64 = 3;
pub const SALT_ENCODE: u64 = 4;
pub const SALT_TRAIN: u64 = 5;
pub const SALT_EVAL: u64 = 6;
