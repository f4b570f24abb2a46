//! Portable random streams.
//!
//! Every generator is Xoshiro256++ seeded through SplitMix64
//! (`Xoshiro256PlusPlus::seed_from_u64`). Uniforms on (0, 1) are
//! `((next_u64 >> 11) + 0.5) * 2^-53`; standard normals come from the
//! Box–Muller transform applied to consecutive uniform pairs, cosine branch
//! first, then the cached sine branch.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Generator = Xoshiro256PlusPlus;

pub fn generator(seed: u64) -> Generator {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for item `index` of a batch seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> Generator {
    generator(splitmix64(seed ^ splitmix64(index)))
}

/// Uniform draw on the open interval (0, 1).
pub fn uniform(rng: &mut Generator) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variates via Box–Muller.
pub struct NormalStream {
    rng: Generator,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(rng: Generator) -> Self {
        Self { rng, spare: None }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(generator(seed))
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1 = uniform(&mut self.rng);
        let u2 = uniform(&mut self.rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn rng_mut(&mut self) -> &mut Generator {
        &mut self.rng
    }
}
