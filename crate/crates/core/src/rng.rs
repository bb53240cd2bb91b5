//! Seeded, splittable randomness.
//!
//! Every stochastic routine in the crate draws from an [`RngStream`]. A stream
//! is identified by a `(seed, stream_id)` pair and backed by ChaCha12 (from
//! `rand_chacha`): the 256-bit key is the little-endian concatenation of four
//! SplitMix64 outputs seeded with `seed`, and `stream_id` selects the ChaCha
//! stream. ChaCha output is platform independent, so a pair always yields the
//! same sequence.
//!
//! Parallel work never shares a stream. Instead each task receives
//! [`RngStream::child`] with its own index; children are derived from the
//! parent's identifiers only (not from its consumed state), so the child a task
//! receives does not depend on scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(a: u64, b: u64) -> u64 {
    let mut s = a;
    let x = splitmix64(&mut s);
    let mut t = b ^ x.rotate_left(17);
    splitmix64(&mut t) ^ x
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha12Rng::from_seed(key);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Derived stream for sub-task `index`. Depends only on this stream's
    /// identifiers, never on how many values have been drawn from it.
    pub fn child(&self, index: u64) -> RngStream {
        RngStream::with_stream(mix(self.seed, self.stream), index)
    }
}

/// Free-function form of [`RngStream::child`].
pub fn child_stream(rng: &RngStream, index: u64) -> RngStream {
    rng.child(index)
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
