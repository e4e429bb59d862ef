//! Counter-mode seed derivation.
//!
//! Every random stream in a campaign is a pure function of the master seed
//! and a small tuple of indices, so results do not depend on how trials are
//! scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels used to separate independent families of seeds.
pub mod stream {
    pub const CODE: u64 = 0x636f_6465;
    pub const TRAFFIC: u64 = 0x7472_6166;
    pub const AVG_TRAFFIC: u64 = 0x6176_6774;
    pub const LINK: u64 = 0x6c69_6e6b;
    pub const COEFF: u64 = 0x636f_6566;
    pub const CHUNK: u64 = 0x6368_6e6b;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `parts` into `seed`, one splitmix round per part.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}
