//! Dense complex 2×2 matrices.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, MulAssign, Sub};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major 2×2 complex matrix `[[m11, m12], [m21, m22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub m: [Complex64; 4],
}

impl Default for Mat2 {
    fn default() -> Self {
        Self::zero()
    }
}

impl Mat2 {
    pub const fn new(m11: Complex64, m12: Complex64, m21: Complex64, m22: Complex64) -> Self {
        Self { m: [m11, m12, m21, m22] }
    }

    pub fn from_real(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Self::new(m11.into(), m12.into(), m21.into(), m22.into())
    }

    pub const fn zero() -> Self {
        Self { m: [ZERO; 4] }
    }

    pub const fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    pub fn sigma_x() -> Self {
        Self::from_real(0.0, 1.0, 1.0, 0.0)
    }

    pub fn sigma_z() -> Self {
        Self::from_real(1.0, 0.0, 0.0, -1.0)
    }

    #[inline]
    pub fn m11(&self) -> Complex64 {
        self.m[0]
    }
    #[inline]
    pub fn m12(&self) -> Complex64 {
        self.m[1]
    }
    #[inline]
    pub fn m21(&self) -> Complex64 {
        self.m[2]
    }
    #[inline]
    pub fn m22(&self) -> Complex64 {
        self.m[3]
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0] + self.m[3]
    }

    pub fn dagger(&self) -> Self {
        Self::new(self.m[0].conj(), self.m[2].conj(), self.m[1].conj(), self.m[3].conj())
    }

    /// `(A + A†)/2`.
    pub fn hermitize(&self) -> Self {
        (*self + self.dagger()).scale(0.5)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { m: self.m.map(|x| x * s) }
    }

    pub fn scale_c(&self, s: Complex64) -> Self {
        Self { m: self.m.map(|x| x * s) }
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }

    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        *self * *other + *other * *self
    }

    /// Eigenvalues of a general 2×2 matrix.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let half_tr = self.trace() * 0.5;
        let det = self.m[0] * self.m[3] - self.m[1] * self.m[2];
        let disc = (half_tr * half_tr - det).sqrt();
        [half_tr + disc, half_tr - disc]
    }

    /// `exp(-i·x·(a σ_z + b σ_x))` for real `a`, `b`, `x`.
    pub fn exp_pauli_unitary(a: f64, b: f64, x: f64) -> Self {
        let w = (a * a + b * b).sqrt();
        let phase = w * x;
        let c = phase.cos();
        let s = if w > 0.0 { phase.sin() / w } else { x };
        let i = Complex64::i();
        Self::new(
            Complex64::new(c, 0.0) - i * (a * s),
            -i * (b * s),
            -i * (b * s),
            Complex64::new(c, 0.0) + i * (a * s),
        )
    }

    /// `exp(-x·(a σ_z + b σ_x))` for real `a`, `b`, `x`.
    pub fn exp_pauli_real(a: f64, b: f64, x: f64) -> Self {
        let w = (a * a + b * b).sqrt();
        let phase = w * x;
        let c = phase.cosh();
        let s = if w > 0.0 { phase.sinh() / w } else { x };
        Self::from_real(c - a * s, -b * s, -b * s, c + a * s)
    }
}

impl Add for Mat2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            m: [self.m[0] + o.m[0], self.m[1] + o.m[1], self.m[2] + o.m[2], self.m[3] + o.m[3]],
        }
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, o: Self) {
        for (a, b) in self.m.iter_mut().zip(o.m) {
            *a += b;
        }
    }
}

impl Sub for Mat2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            m: [self.m[0] - o.m[0], self.m[1] - o.m[1], self.m[2] - o.m[2], self.m[3] - o.m[3]],
        }
    }
}

impl Mul for Mat2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let a = &self.m;
        let b = &o.m;
        Self::new(
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        )
    }
}

impl MulAssign for Mat2 {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}
