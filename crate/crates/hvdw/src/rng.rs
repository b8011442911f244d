//! Seeded random helpers shared by tests, gauge constructions and the solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeedRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeedRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample in `[-amp, amp]`.
pub fn sym(rng: &mut SeedRng, amp: f64) -> f64 {
    amp * (2.0 * rng.gen::<f64>() - 1.0)
}
