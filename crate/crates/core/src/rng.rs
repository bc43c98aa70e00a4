//! Splittable random streams.
//!
//! Every random draw is taken from a ChaCha8 stream keyed by
//! `(seed, purpose, step)` and selected by the item index (pixel, dual site,
//! ...). A pixel therefore sees the same numbers whether it is processed on
//! one thread or many.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; keeps streams of different stages disjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Synthesis = 1,
    Thinning = 2,
    DepthProposal = 3,
    Reflectivity = 4,
    Auxiliary = 5,
    PriorDepth = 6,
    PriorReflectivity = 7,
    PriorAuxiliary = 8,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key shared by all items of one `(seed, purpose, step)` stage.
#[derive(Clone, Copy, Debug)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose, step: u64) -> Self {
        let mut state = seed ^ (purpose as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
        let mut mix = splitmix64(&mut state) ^ step.wrapping_mul(0xA24B_AED4_963E_E407);
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut mix).to_le_bytes());
        }
        StreamKey(bytes)
    }

    /// Independent generator for item `index`.
    pub fn stream(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(index as u64);
        rng
    }
}
