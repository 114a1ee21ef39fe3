//! Seed derivation. Every seeded operation derives its stream from the run
//! seed plus stable coordinates (example index, purpose, epoch), so parallel
//! and serial execution draw identical numbers.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `seed` with an ordered list of coordinates.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix64(seed), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// Purposes used as the first coordinate of [`derive_seed`].
pub mod stream {
    pub const RANDOM_SCORES: u64 = 1;
    pub const MASK_SAMPLING: u64 = 2;
    pub const MASK_RESAMPLE: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const MUTATION: u64 = 7;
}
