//! Deterministic derivation of independent RNG streams from a master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of stream tags into a new seed.
pub fn derive(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(master), |acc, &t| splitmix(acc ^ splitmix(t)))
}

pub fn rng(master: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive(master, tags))
}

/// Stream tags, kept in one place so no two subsystems share a stream.
pub mod stream {
    pub const CHANNEL: u64 = 1;
    pub const PERTURB: u64 = 2;
    pub const XI_NOISE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const ACTOR: u64 = 5;
    pub const CALIBRATION: u64 = 6;
    pub const ESTIMATOR: u64 = 7;
    pub const PPO: u64 = 8;
    pub const EVAL: u64 = 9;
    pub const POLICY: u64 = 10;
    pub const SEARCH: u64 = 11;
    pub const EPISODE: u64 = 12;
}
