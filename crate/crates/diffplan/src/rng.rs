//! Named, reproducible random substreams.
//!
//! Every piece of randomness in the pipeline is drawn from a stream derived
//! from `(root_seed, stream_name, index)`. Scene 17 of a run always sees the
//! same generator no matter what ran before it, which is what makes paired
//! comparisons (guidance on vs. off) and byte-identical reruns possible.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

/// Stream names used across the pipeline. Free-form strings are allowed;
/// these constants just keep call sites consistent.
pub mod stream {
    pub const SCENE: &str = "scene";
    pub const QUERY: &str = "query";
    pub const PLAN: &str = "plan";
    pub const NOISE: &str = "noise";
    pub const DROPOUT: &str = "dropout";
    pub const INIT: &str = "init";
    pub const TRAIN: &str = "train";
    pub const SMOOTH: &str = "smooth";
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the 64-bit seed for a named substream.
pub fn substream_seed(root: u64, name: &str, index: u64) -> u64 {
    let mixed = splitmix64(root) ^ fnv1a(name.as_bytes()).rotate_left(17) ^ splitmix64(index ^ 0x5851_f42d_4c95_7f2d);
    splitmix64(mixed)
}

/// A fresh generator for `(root, name, index)`.
pub fn substream(root: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(root, name, index))
}
