//! Seed plumbing. Every random draw in the crate comes from an explicit seed;
//! independent streams are split off by hashing tags into the seed and by
//! selecting a ChaCha stream per row, so shards can be generated in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mix a list of tags into a base seed (splitmix64 finalizer per tag).
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// Domain tags for derive_seed.
pub(crate) const TAG_NOISE: u64 = 0x6e6f_6973_65;
pub(crate) const TAG_TRAIN: u64 = 0x7472_6169_6e;
pub(crate) const TAG_INIT: u64 = 0x696e_6974;
pub(crate) const TAG_PHI: u64 = 0x7068_69;
pub(crate) const TAG_TEST: u64 = 0x7465_7374;
