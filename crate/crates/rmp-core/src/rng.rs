//! Seeded RNG construction.
//!
//! All stochastic code paths draw from ChaCha12 streams so that runs are
//! bit-reproducible from (seed, stream) and independent runs can be fanned out
//! without sharing state.

use rand_chacha::ChaCha12Rng;

pub use rand::SeedableRng;

/// Identifier recorded in run summaries so emitted artifacts name the
/// generator they were produced with.
pub const RNG_ALGORITHM: &str = "chacha12";

/// Deterministic generator for a given seed (stream 0).
pub fn seeded(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Deterministic generator for (seed, stream). Streams with the same seed are
/// independent, so per-run generators can be derived from a run index without
/// coupling results to execution order.
pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_draws() {
        let a: f64 = seeded(9).random();
        let b: f64 = seeded(9).random();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let a: f64 = seeded_stream(9, 0).random();
        let b: f64 = seeded_stream(9, 1).random();
        assert_ne!(a, b);
    }
}
