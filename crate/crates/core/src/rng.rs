//! Seed derivation.
//!
//! Every stochastic component takes an explicit seed. Independent streams are
//! derived from a master seed plus a tag path (e.g. `[snr_index, frame_index]`)
//! so that Monte Carlo work can be split across threads while staying
//! reproducible: the stream depends only on the tags, never on scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 step; used as the mixing function for seed derivation.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 256-bit ChaCha seed from a master seed and a tag path.
pub fn derive_seed(master: u64, tags: &[u64]) -> [u8; 32] {
    let mut state = master ^ 0x6a09_e667_f3bc_c908;
    let mut acc = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        acc ^= splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    let mut s = acc;
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    seed
}

/// Deterministic RNG for the stream identified by `(master, tags)`.
pub fn stream_rng(master: u64, tags: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::from_seed(derive_seed(master, tags))
}
