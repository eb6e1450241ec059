//! Seed derivation. Every random stream in the crate is keyed by the user
//! seed plus a fixed path of integers, never by execution order.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Stream tags.
pub const TAG_SPLIT: u64 = 1;
pub const TAG_RFF: u64 = 2;
pub const TAG_FOLDS: u64 = 3;
pub const TAG_CV_RFF: u64 = 4;
