//! Seeded random sources shared by the simulator and the agents.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Independent stream derived from a run seed. Streams keep the environment's
/// draws decoupled from the agent's so that changing one never perturbs the other.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Circularly symmetric complex Gaussian with `E|z|^2 = variance`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re = normal(rng) * scale;
    let im = normal(rng) * scale;
    Complex64::new(re, im)
}

pub const ENV_STREAM: u64 = 1;
pub const AGENT_STREAM: u64 = 2;
pub const TRACE_STREAM: u64 = 3;
