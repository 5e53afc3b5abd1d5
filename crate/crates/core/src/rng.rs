//! Seeded random streams.
//!
//! Every experiment derives its randomness from a single `u64` seed. Distinct
//! consumers (reservoir matrix, input weights, samples, ...) read from
//! distinct ChaCha streams of the same key so adding draws to one consumer
//! never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as LabRng;

/// Well-known stream ids.
pub mod stream {
    pub const RESERVOIR: u64 = 1;
    pub const INPUT: u64 = 2;
    pub const BIAS: u64 = 3;
    pub const SAMPLES: u64 = 4;
    pub const BOUNDARY: u64 = 5;
    pub const PROBES: u64 = 6;
    pub const PERTURB: u64 = 7;
    pub const ROLLOUT: u64 = 8;
    pub const TRIALS: u64 = 9;
}

/// Generator for `seed` on stream 0.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `seed` on a dedicated stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
