//! Zero-padded DFT convolution helpers.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Smallest power of two that is at least `2 * len`.
pub fn padded_len(len: usize) -> usize {
    (2 * len.max(1)).next_power_of_two()
}

/// Forward and inverse transforms of a fixed length, planned once.
#[derive(Clone)]
pub struct FftPair {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPair").field("len", &self.len).finish()
    }
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward DFT in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len);
        self.forward.process(buf);
    }

    /// Inverse DFT in place, including the `1/len` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len);
        self.inverse.process(buf);
        let s = 1.0 / self.len as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }
}

/// Circular convolution `(a ⊛ b)[n] = Σ_k a[k] b[(n-k) mod L]` of equal-length sequences.
pub fn circular_convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(a.len(), b.len());
    let fft = FftPair::new(a.len());
    let mut fa = a.to_vec();
    let mut fb = b.to_vec();
    fft.forward(&mut fa);
    fft.forward(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    fft.inverse(&mut fa);
    fa
}

/// Full linear convolution of length `a.len() + b.len() - 1`, via a zero-padded DFT.
pub fn linear_convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let l = padded_len(a.len().max(b.len()));
    let mut pa = vec![Complex64::new(0.0, 0.0); l];
    let mut pb = pa.clone();
    pa[..a.len()].copy_from_slice(a);
    pb[..b.len()].copy_from_slice(b);
    let mut out = circular_convolve(&pa, &pb);
    out.truncate(out_len);
    out
}

/// Direct `O(len^2)` linear convolution.
pub fn linear_convolve_direct(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(n: usize, seed: u64) -> Vec<Complex64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let b = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                Complex64::new(a, b)
            })
            .collect()
    }

    #[test]
    fn padded_len_is_pow2_at_least_double() {
        assert_eq!(padded_len(1), 2);
        assert_eq!(padded_len(65), 256);
        assert_eq!(padded_len(64), 128);
        for n in 1..300 {
            let l = padded_len(n);
            assert!(l.is_power_of_two() && l >= 2 * n);
        }
    }

    #[test]
    fn fft_linear_convolution_matches_direct_sum() {
        for &(n, m) in &[(65usize, 17usize), (17, 65), (1, 5), (100, 100)] {
            let a = seq(n, 1);
            let b = seq(m, 2);
            let fast = linear_convolve(&a, &b);
            let slow = linear_convolve_direct(&a, &b);
            assert_eq!(fast.len(), slow.len());
            for (x, y) in fast.iter().zip(&slow) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn delta_is_identity() {
        let a = seq(33, 3);
        let mut d = vec![Complex64::new(0.0, 0.0); 33];
        d[0] = Complex64::new(1.0, 0.0);
        let c = circular_convolve(&a, &d);
        for (x, y) in c.iter().zip(&a) {
            assert!((x - y).norm() < 1e-14);
        }
    }
}
