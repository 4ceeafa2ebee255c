//! Seeded random number generation.
//!
//! Every stochastic operation in the crate draws from [`ChaCha8Rng`], a
//! counter-based generator whose output stream is fully specified and
//! identical across platforms. Independent sub-streams (one per MCMC
//! chain, per fold, per SME) are derived by selecting a ChaCha stream id
//! rather than by re-seeding, so streams never overlap.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator for `seed`, stream 0.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `seed` on an independent `stream`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
