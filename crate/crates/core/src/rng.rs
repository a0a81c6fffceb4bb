//! Counter-based random streams.
//!
//! Every experiment draws from a [`Stream`] addressed by `(seed, stream_id)`.
//! Output `i` of a stream is a pure function of `(seed, stream_id, i)`, so a
//! trial can be replayed in isolation and serial and parallel runs see the
//! same numbers. The mixing function is the SplitMix64 finalizer applied to a
//! Weyl sequence offset by a per-stream key.

use rand::{Error as RandError, RngCore};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline(always)]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the key of substream `stream_id` under `seed`.
#[inline]
pub fn stream_key(seed: u64, stream_id: u64) -> u64 {
    mix64(mix64(seed ^ 0x5851_f42d_4c95_7f2d).wrapping_add(stream_id.wrapping_mul(GOLDEN)) ^ stream_id)
}

/// Value at position `counter` of the stream with the given key.
#[inline(always)]
pub fn counter_u64(key: u64, counter: u64) -> u64 {
    mix64(key.wrapping_add(counter.wrapping_mul(GOLDEN)))
}

/// A seekable random stream. Implements [`RngCore`] so the usual `rand`
/// distributions can be sampled from it.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Stream {
            key: stream_key(seed, stream_id),
            counter: 0,
        }
    }

    /// A named substream, e.g. `"params"` vs `"rounding"`, so that unrelated
    /// draws under the same seed never collide.
    pub fn named(seed: u64, name: &str, stream_id: u64) -> Self {
        let tag = name
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        Stream::new(seed ^ mix64(tag), stream_id)
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn position(&self) -> u64 {
        self.counter
    }

    pub fn seek(&mut self, counter: u64) {
        self.counter = counter;
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[-1, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_symmetric(&mut self) -> f64 {
        ((self.next_u64() as i64) >> 10) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_unit();
        let u2 = self.next_unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

impl RngCore for Stream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let v = counter_u64(self.key, self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.fill_bytes(dest);
        Ok(())
    }
}
