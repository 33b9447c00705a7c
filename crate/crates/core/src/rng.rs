//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from a
//! single run seed, so adding a consumer never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent stream identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    PolicyInit = 1,
    ValueInit = 2,
    ActionSampling = 3,
    EpisodeSeeds = 4,
    Minibatch = 5,
    Mcmc = 6,
    Evaluation = 7,
    Demos = 8,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
