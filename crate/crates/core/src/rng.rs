//! Deterministic hierarchical randomness.
//!
//! Every random decision in the solver draws from a stream derived from the
//! user seed plus a fixed path of integer tags (iteration index, cluster
//! index, SRE id, ...). Streams never depend on thread scheduling, so runs
//! are reproducible for any worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent stream from `seed` and a tag path.
pub fn derive(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed ^ 0x5bf0_3635_16f5_33cd);
    for &tag in path {
        state = splitmix64(state ^ splitmix64(tag.wrapping_add(0x1357_9bdf_2468_ace0)));
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        state = splitmix64(state.wrapping_add(i as u64 + 1));
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
