//! Deterministic seed derivation.
//!
//! Every source of randomness in the crate is a ChaCha stream whose seed is
//! derived from a scenario seed plus a purpose tag, so that (a) reruns are
//! bit-reproducible, (b) independent subsystems (world generation, calibration
//! replay noise, mission sensor noise) never share a stream, and (c) the same
//! mission noise can be replayed across frameworks for paired comparisons.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived streams. Values are arbitrary but fixed forever.
pub mod tags {
    pub const WORLDGEN: u64 = 0x57_4f_52_4c_44_47_45_4e; // "WORLDGEN"
    pub const MISSION_NOISE: u64 = 0x4d_49_53_4e_4f_49_53_45;
    pub const CALIB_NOISE: u64 = 0x43_41_4c_4e_4f_49_53_45;
    pub const CALIB_PATHS: u64 = 0x43_41_4c_50_41_54_48_53;
    pub const STEP: u64 = 0x53_54_45_50_53_45_45_44;
    pub const CALIB_SET: u64 = 0x43_41_4c_53_43_45_4e_53;
    pub const TEST_SET: u64 = 0x54_45_53_54_53_43_45_4e;
}

/// SplitMix64 finalizer; full-period bijection on u64.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with a purpose tag.
pub fn mix2(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed ^ tag.rotate_left(32)) ^ tag)
}

/// Mix a base seed with a purpose tag and an index (path id, step id, ...).
pub fn mix3(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(mix2(seed, tag) ^ splitmix64(index.wrapping_add(0x1234_5678_9abc_def1)))
}

/// ChaCha stream for `(seed, tag)`.
pub fn stream2(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix2(seed, tag))
}

/// ChaCha stream for `(seed, tag, index)`.
pub fn stream3(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix3(seed, tag, index))
}
