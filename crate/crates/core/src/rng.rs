//! Deterministic random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream derived from a
//! master seed and a path of integer tags, so work can be split across
//! threads or reordered without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SmcdRng = ChaCha8Rng;

pub mod tag {
    pub const DATASET: u64 = 0x6461_7461;
    pub const TRAIN: u64 = 0x7472_6169;
    pub const INIT: u64 = 0x696e_6974;
    pub const EVAL: u64 = 0x6576_616c;
    pub const FILTER: u64 = 0x6669_6c74;
    pub const ORACLE: u64 = 0x6f72_6163;
    pub const CONTROL: u64 = 0x6374_726c;
    pub const BANK: u64 = 0x6261_6e6b;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a sequence of tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64, tags: &[u64]) -> SmcdRng {
    SmcdRng::seed_from_u64(derive_seed(seed, tags))
}
