//! Seeded random streams.
//!
//! Every consumer draws from a ChaCha stream keyed by `(seed, domain, index)`
//! so results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha20Rng;

/// Stream domains; keeps e.g. path noise and Monte-Carlo times independent.
pub mod domain {
    pub const OU_PATH: u64 = 0x4f55_5041_5448;
    pub const OU_BRIDGE: u64 = 0x4252_4944_4745;
    pub const DYSON_TIMES: u64 = 0x4459_534f_4e54;
    pub const DUHAMEL_TIMES: u64 = 0x4455_4841_4d45;
    pub const BETA_SAMPLES: u64 = 0x4245_5441_5350;
    pub const MISC: u64 = 0x4d49_5343;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: u64, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    let words = [splitmix(seed), splitmix(seed ^ domain), splitmix(domain.rotate_left(17)), splitmix(!seed)];
    for (chunk, w) in key.chunks_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

pub fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}
