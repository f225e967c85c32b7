//! Deterministic splittable random streams.
//!
//! A stream is identified by a `(seed, stream_id)` pair; the same pair
//! reproduces the identical sequence on every platform. Distinct stream ids
//! select disjoint keystreams of the same counter-based generator and are
//! statistically independent, which is what parallel Monte Carlo splits on.
//! Streams are single-owner mutable values — never share one across workers,
//! derive a sub-stream per worker instead.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::normal;

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RandomStream {
            seed,
            stream_id,
            rng,
        }
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream with the same seed and the given id offset from this
    /// stream's id. Used to split work: chunk `c` gets `substream(c)`.
    pub fn substream(&self, offset: u64) -> RandomStream {
        RandomStream::new(self.seed, self.stream_id.wrapping_add(offset))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw strictly inside (0, 1).
    ///
    /// 53-bit lattice offset by half a step, so neither endpoint is reachable
    /// and inversion sampling stays finite.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal draw by inversion of a uniform.
    #[inline]
    pub fn next_std_normal(&mut self) -> f64 {
        normal::std_normal_quantile_unchecked(self.next_uniform())
    }

    /// Fill `buf` with standard normal draws.
    pub fn fill_std_normal(&mut self, buf: &mut [f64]) {
        for v in buf.iter_mut() {
            *v = self.next_std_normal();
        }
    }
}
