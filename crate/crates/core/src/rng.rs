//! Deterministic random streams.
//!
//! A scenario owns one 64-bit master seed. Every consumer draws from its own
//! ChaCha8 stream, selected by the generator's 64-bit stream counter: the key
//! is derived from the master seed and the stream id is `(module << 32) | index`.
//! Streams never overlap, so adding a consumer never shifts the draws seen by
//! another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Module identifiers occupying the upper half of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Stream {
    Mechanics = 1,
    Interferometry = 2,
    Plasmonics = 3,
    Emitter = 4,
    Imaging = 5,
    Lifetime = 6,
    Trace = 7,
}

/// Splits one master seed into independent per-module streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSplitter {
    master: u64,
}

impl SeedSplitter {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, module: Stream, index: u32) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(((module as u64) << 32) | index as u64);
        rng
    }

    /// A plain 64-bit seed for APIs that take one (first word of the stream).
    pub fn seed(&self, module: Stream, index: u32) -> u64 {
        use rand::RngCore;
        self.stream(module, index).next_u64()
    }
}

/// Generator for APIs that accept a bare seed.
pub fn from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One standard-normal draw scaled by `sigma`; always consumes exactly one draw.
pub fn normal<T: crate::Real, R: rand::Rng + ?Sized>(rng: &mut R, sigma: T) -> T {
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    T::lit(z) * sigma
}
