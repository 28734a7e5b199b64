//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit seed and draws from a ChaCha8
//! stream built from it, so runs are reproducible bit for bit and parallel
//! replicates use independent streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
