use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::float;

/// Standard-normal variates from a ChaCha8 keystream via Box–Muller.
///
/// A stream is identified by `(seed, stream_id)`; distinct ids give
/// independent sequences, so workers can draw without coordination.
#[derive(Debug, Clone)]
pub struct NormalStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A child stream keyed by `(seed, stream_id, child)`.
    pub fn derive(seed: u64, stream_id: u64, child: u64) -> Self {
        // distinct (stream_id, child) pairs map to distinct ChaCha streams
        Self::new(seed, stream_id.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ child.rotate_left(17))
    }

    /// Uniform variate in `(0, 1]`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = float::sqrt(-2.0 * float::ln(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(r * float::sin(theta));
        r * float::cos(theta)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let a = NormalStream::new(42, 3).normal_vec(100);
        let b = NormalStream::new(42, 3).normal_vec(100);
        assert_eq!(a, b);
        let c = NormalStream::new(42, 4).normal_vec(100);
        assert_ne!(a, c);
        let d = NormalStream::new(43, 3).normal_vec(100);
        assert_ne!(a, d);
    }

    #[test]
    fn moments_of_a_million_draws() {
        let mut s = NormalStream::new(20240601, 0);
        let n = 1_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            sum += z;
            sum2 += z * z;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(mean.abs() < 4e-3, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-2, "var {var}");
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = NormalStream::new(1, 1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u <= 1.0);
        }
    }
}
