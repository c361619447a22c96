//! Seeded randomness with a pinned algorithm identity (ChaCha8 + Box-Muller),
//! so that generated noise is reproducible across platforms and languages.

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Identity string echoed into experiment outputs.
pub const ALGORITHM: &str = "chacha8+box-muller";

pub fn from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform sample in [0, 1) using the top 53 bits of a ChaCha8 word.
fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal samples via the Box-Muller transform.
pub fn standard_normal(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    let mut out = DVector::zeros(len);
    let mut i = 0;
    while i < len {
        let u1 = loop {
            let u = unit_f64(rng);
            if u > 0.0 {
                break u;
            }
        };
        let u2 = unit_f64(rng);
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        out[i] = radius * angle.cos();
        i += 1;
        if i < len {
            out[i] = radius * angle.sin();
            i += 1;
        }
    }
    out
}
