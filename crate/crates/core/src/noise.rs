//! Seeded Gaussian noise.
//!
//! Uniforms come from ChaCha8 (53-bit mantissa from the top of each `u64`);
//! normal pairs come from the Box-Muller transform
//! `r = sqrt(-2 ln u1)`, `(r cos 2 pi u2, r sin 2 pi u2)` with `u1` in `(0, 1]`.
//! Per-stage streams are derived from a session seed with SplitMix64 so that
//! adding a stage does not perturb the noise of the others.

use core::f64::consts::TAU;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn split_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct GaussianSource {
    rng: ChaCha8Rng,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Two independent standard normal deviates packed as a complex number.
    pub fn standard_pair(&mut self) -> Complex64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(TAU * u2);
        Complex64::new(r * c, r * s)
    }

    /// Circular complex noise with variance `sigma2` in each component.
    pub fn complex(&mut self, sigma2: f64) -> Complex64 {
        self.standard_pair() * libm::sqrt(sigma2)
    }
}
