//! Counter-based random streams.
//!
//! Every stream is ChaCha8 (the 8-round ChaCha block function, RFC 7539 layout)
//! keyed by `seed` through the `rand_core` `seed_from_u64` expansion (PCG32 fill
//! of the 32-byte key), with `stream` written into the ChaCha nonce. A stream is
//! therefore addressed by the pair `(seed, stream)` and any ChaCha8
//! implementation can replay it.
//!
//! Derived quantities:
//! - uniform `[0, 1)`: top 53 bits of `next_u64`, times `2^-53`;
//! - integer below `n`: high word of the 128-bit product `next_u64 * n`;
//! - standard normal: Box-Muller on `(u1, u2)` with `u1 = 1 - uniform()`,
//!   emitting `r cos(2 pi u2)` then `r sin(2 pi u2)`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::element::Element;
use crate::error::{AutogradError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            inner,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `tag` under `base`; used to give every image, step and
/// purpose its own reproducible seed.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    splitmix64(base ^ splitmix64(tag))
}

/// Standard-normal tensor drawn from stream `(seed, 0)`.
pub fn randn<T: Element>(shape: &[usize], seed: u64) -> Result<Tensor<T>> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(AutogradError::ZeroDim(shape.to_vec()));
    }
    let n = shape.iter().product();
    let mut rng = RngStream::new(seed, 0);
    Tensor::new(
        shape,
        (0..n).map(|_| T::from_f64(rng.normal())).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn randn_is_deterministic() {
        let a = randn::<f32>(&[4], 7).unwrap();
        let b = randn::<f32>(&[4], 7).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn randn_seeds_differ() {
        let a = randn::<f32>(&[4], 7).unwrap();
        let b = randn::<f32>(&[4], 8).unwrap();
        assert_ne!(a.data(), b.data());
    }

    #[test]
    fn randn_moments() {
        let t = randn::<f64>(&[10000], 1).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((-0.05..=0.05).contains(&mean), "mean {mean}");
        assert!((0.9..=1.1).contains(&var), "var {var}");
    }

    #[test]
    fn randn_rejects_zero_dim() {
        assert!(matches!(
            randn::<f32>(&[3, 0], 1),
            Err(AutogradError::ZeroDim(_))
        ));
        assert!(randn::<f32>(&[], 1).is_err());
    }

    #[test]
    fn streams_are_independent() {
        let mut a = RngStream::new(5, 0);
        let mut b = RngStream::new(5, 1);
        let xa: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn below_covers_range() {
        let mut r = RngStream::new(3, 9);
        let mut seen = [false; 5];
        for _ in 0..200 {
            seen[r.below(5) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = RngStream::new(11, 2);
        for _ in 0..1000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
