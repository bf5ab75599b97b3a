//! Seed derivation for reproducible, schedule-independent random streams.
//!
//! Every random object is drawn from a ChaCha stream whose seed is a pure
//! function of a master seed and a path of indices, so trial `i` sees the
//! same numbers whatever thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream labels used below a per-observation seed.
pub mod label {
    pub const SIGNAL: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const RESTARTS: u64 = 3;
    pub const SPHERE_SAMPLES: u64 = 4;
    pub const CHAIN: u64 = 5;
    pub const NULL_CALIBRATION: u64 = 6;
    pub const NULL_FRESH: u64 = 7;
    pub const ALTERNATIVE: u64 = 8;
    pub const MULTISTART: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a seed with a path of indices into a new seed.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &i| splitmix64(acc ^ splitmix64(i.wrapping_add(0x632b_e59b_d9b4_e019))))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(seed: u64, path: &[u64]) -> StreamRng {
    stream(derive(seed, path))
}
