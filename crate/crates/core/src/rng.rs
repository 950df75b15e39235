//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed with an
//! explicit stream id, so replication `r` always sees the same draws no
//! matter which other replications ran or in which order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids with this bit set are reserved for covariate generation so they
/// never collide with replication (assignment/response) streams.
pub const COVARIATE_STREAM_BIT: u64 = 1 << 63;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Stream used for covariate draws that belong to replication `stream`.
    pub fn covariates(seed: u64, stream: u64) -> Self {
        Self::new(seed, stream | COVARIATE_STREAM_BIT)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Uniform draw on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// `true` with probability `p`; consumes exactly one uniform.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
