//! Keyed random streams.
//!
//! Every draw in the crate comes from a ChaCha stream whose key is derived
//! from `(seed, path of tags)`, e.g. `(seed, replica, field id, level, node)`.
//! Streams are independent of evaluation order, so replicas can run on any
//! number of threads and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Field and domain identifiers used as the second path component.
pub mod tag {
    pub const CASCADE: u64 = 0x0c5c;
    pub const FIELD: u64 = 0xf1e1;
    pub const FIELD_Y: u64 = 0xf1e2;
    pub const COUPLING: u64 = 0xc0c0;
    pub const COUPLING_PRIME: u64 = 0xc0c1;
    pub const RECURSION: u64 = 0x4ec0;
    pub const GIBBS: u64 = 0x61bb;
    pub const OPTIMIZER: u64 = 0x0b71;
    pub const TERMINAL: u64 = 0x7e4a;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(splitmix64(seed ^ 0x6d73_6b5f_726e_6721))
    }

    pub fn child(self, tag: u64) -> Self {
        StreamKey(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x632b_e59b_d9b4_e019))))
    }

    pub fn path(self, tags: &[u64]) -> Self {
        tags.iter().fold(self, |k, &t| k.child(t))
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut state = self.0;
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}
