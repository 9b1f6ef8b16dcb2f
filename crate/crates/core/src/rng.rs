//! Deterministic stream derivation for resampling and simulation.
//!
//! Every randomized routine derives its generator from a master seed plus a
//! list of integer tags (resample index, run index, restart index, ...).
//! Identical (seed, tags) always yields an identical stream, independent of
//! thread scheduling, so parallel and serial runs agree bit for bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; mixes tag words into the seed state.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent ChaCha stream from a master seed and a tag path.
pub fn derive_rng(master: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = master;
    let mut key = [0u8; 32];
    let mut word = splitmix64(&mut state);
    for tag in tags {
        state ^= tag.wrapping_mul(0xff51_afd7_ed55_8ccd);
        word = splitmix64(&mut state);
    }
    for chunk in key.chunks_mut(8) {
        word = splitmix64(&mut state);
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    let _ = word;
    ChaCha8Rng::from_seed(key)
}

/// Stable 64-bit hash of a string, used to derive per-strategy seeds.
pub fn hash_str(s: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
