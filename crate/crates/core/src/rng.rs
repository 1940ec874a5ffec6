//! SplitMix64 streams with splittable seed derivation.
//!
//! A stream is identified by `(global_seed, stream_id, item_index)`; its
//! initial state is `mix64(global_seed ^ mix64(stream_id) ^ mix64(item_index))`.
//! Every step adds the golden-ratio increment and returns the finalized state,
//! so the sequence is bit-exact across platforms and languages.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream ids used by the toolkit. Keeping them here avoids accidental reuse.
pub mod streams {
    pub const AUGMENT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const REFNET_INIT: u64 = 3;
    pub const TRANSFORM_AUX: u64 = 4;
}

/// The SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    /// Raw stream starting from `state`.
    pub fn from_state(state: u64) -> Self {
        Self { state }
    }

    pub fn derive(global_seed: u64, stream_id: u64, item_index: u64) -> Self {
        Self {
            state: mix64(global_seed ^ mix64(stream_id) ^ mix64(item_index)),
        }
    }

    pub fn state(&self) -> u64 {
        self.state
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
