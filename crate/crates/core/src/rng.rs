//! Seeded random number generation shared by every module.
//!
//! All randomness flows from a single `u64` seed through ChaCha8, a
//! counter-based generator. Independent consumers draw from separate
//! streams of the same seed so adding draws in one place never shifts
//! another.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for a named sub-stream of `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Normal(0, std) truncated to [-2 std, 2 std] by rejection.
pub fn trunc_normal(rng: &mut Rng, std: f64) -> f64 {
    loop {
        let z = normal(rng);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}
