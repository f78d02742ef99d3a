//! Named random sub-streams.
//!
//! Every random draw in an experiment goes through a stream derived from
//! `(seed, name)`, so adding a consumer never shifts another consumer's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stable 64-bit derivation of a sub-stream seed (FNV-1a over the name, then a
/// splitmix64 finalizer mixed with the parent seed).
pub fn substream_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

pub fn substream(seed: u64, name: &str) -> Rng {
    Rng::seed_from_u64(substream_seed(seed, name))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
