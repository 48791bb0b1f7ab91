//! Seed derivation for independent, order-free random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of tags into a child seed.
///
/// The result depends only on `(master, tags)`, never on call order, so
/// per-message streams stay identical however a batch is scheduled.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(GOLDEN))))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used with [`derive_seed`].
pub mod tag {
    pub const CALIBRATION: u64 = 0xca11;
    pub const TRANSMIT: u64 = 0x7e57;
    pub const MESSAGE: u64 = 0x4d53;
    pub const TEXT: u64 = 0x7e47;
    pub const NOISE: u64 = 0x0153;
    pub const JITTER: u64 = 0x1177;
    pub const PHRASE: u64 = 0x9a5e;
}
