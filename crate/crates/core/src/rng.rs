//! Named, index-addressable random streams.
//!
//! Every random decision is drawn from a stream keyed by `(seed, purpose,
//! indices...)`, so results never depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// Derive a 64-bit sub-seed from a parent seed, a purpose tag and indices.
pub fn derive(seed: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ fnv(tag));
    for &i in indices {
        h = splitmix(h ^ splitmix(i.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn stream(seed: u64, tag: &str, indices: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive(seed, tag, indices))
}
