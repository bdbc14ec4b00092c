//! Seeded random number generation.
//!
//! One explicit ChaCha stream per run, threaded through every stochastic
//! operation; no hidden global state, so identical seeds give bit-identical
//! runs regardless of platform or crate version bumps.

pub use rand_chacha::ChaCha8Rng;

use rand::SeedableRng;

/// The run-level generator.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent substream, e.g. one per generated record.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
