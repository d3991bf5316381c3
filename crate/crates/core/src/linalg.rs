//! Fixed-size 2-vectors and 2×2 matrices for the two-parameter model.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<S>(pub [S; 2]);

impl<S: Scalar> Vec2<S> {
    pub fn new(a: S, b: S) -> Self {
        Self([a, b])
    }

    pub fn zero() -> Self {
        Self([S::zero(); 2])
    }

    pub fn dot(&self, o: &Self) -> S {
        self.0[0] * o.0[0] + self.0[1] * o.0[1]
    }

    pub fn scale(&self, c: S) -> Self {
        Self([self.0[0] * c, self.0[1] * c])
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn outer(&self, o: &Self) -> Mat2<S> {
        Mat2([[self.0[0] * o.0[0], self.0[0] * o.0[1]], [self.0[1] * o.0[0], self.0[1] * o.0[1]]])
    }
}

impl<S> Index<usize> for Vec2<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.0[i]
    }
}

impl<S: Scalar> Add for Vec2<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }
}

impl<S: Scalar> Sub for Vec2<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }
}

impl<S: Scalar> Neg for Vec2<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self([-self.0[0], -self.0[1]])
    }
}

impl<S: Scalar> AddAssign for Vec2<S> {
    fn add_assign(&mut self, o: Self) {
        self.0[0] = self.0[0] + o.0[0];
        self.0[1] = self.0[1] + o.0[1];
    }
}

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2<S>(pub [[S; 2]; 2]);

impl<S: Scalar> Mat2<S> {
    pub fn zero() -> Self {
        Self([[S::zero(); 2]; 2])
    }

    pub fn identity() -> Self {
        Self([[S::one(), S::zero()], [S::zero(), S::one()]])
    }

    pub fn diag(a: S, b: S) -> Self {
        Self([[a, S::zero()], [S::zero(), b]])
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.0[i][j]
    }

    pub fn det(&self) -> S {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> S {
        self.0[0][0] + self.0[1][1]
    }

    pub fn transpose(&self) -> Self {
        Self([[self.0[0][0], self.0[1][0]], [self.0[0][1], self.0[1][1]]])
    }

    pub fn scale(&self, c: S) -> Self {
        Self([[self.0[0][0] * c, self.0[0][1] * c], [self.0[1][0] * c, self.0[1][1] * c]])
    }

    /// Adjugate over determinant. Callers screen for singularity with [`Mat2::condition_number`].
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == S::zero() || !d.is_finite() {
            return None;
        }
        let [[a, b], [c, e]] = self.0;
        Some(Self([[e / d, -b / d], [-c / d, a / d]]))
    }

    pub fn mul_vec(&self, v: &Vec2<S>) -> Vec2<S> {
        Vec2([self.0[0][0] * v.0[0] + self.0[0][1] * v.0[1], self.0[1][0] * v.0[0] + self.0[1][1] * v.0[1]])
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &Vec2<S>) -> S {
        v.dot(&self.mul_vec(v))
    }

    pub fn frobenius(&self) -> S {
        self.0.iter().flat_map(|r| r.iter()).fold(S::zero(), |acc, &x| acc + x * x).sqrt()
    }

    pub fn symmetrize(&self) -> Self {
        let off = (self.0[0][1] + self.0[1][0]) * lit(0.5);
        Self([[self.0[0][0], off], [off, self.0[1][1]]])
    }

    /// Singular values, largest first.
    pub fn singular_values(&self) -> [S; 2] {
        // σ₁² + σ₂² = ‖M‖_F², σ₁σ₂ = |det M|.
        let f2 = self.frobenius().powi(2);
        let d = self.det().abs();
        let disc = (f2 * f2 - lit::<S>(4.0) * d * d).max(S::zero()).sqrt();
        let s1 = ((f2 + disc) * lit(0.5)).sqrt();
        let s2 = if s1 > S::zero() { d / s1 } else { S::zero() };
        [s1, s2]
    }

    /// Ratio of extreme singular values; infinite for a singular matrix.
    pub fn condition_number(&self) -> S {
        let [s1, s2] = self.singular_values();
        if s2 == S::zero() || !s2.is_finite() {
            S::infinity()
        } else {
            s1 / s2
        }
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> [S; 2] {
        let m = self.symmetrize();
        let half_tr = m.trace() * lit(0.5);
        let diff = (m.0[0][0] - m.0[1][1]) * lit(0.5);
        let r = (diff * diff + m.0[0][1] * m.0[0][1]).sqrt();
        [half_tr - r, half_tr + r]
    }

    /// Lower Cholesky factor of a symmetric positive semi-definite matrix.
    pub fn cholesky(&self) -> Option<Self> {
        let a = self.0[0][0];
        if a < S::zero() {
            return None;
        }
        let l11 = a.sqrt();
        let l21 = if l11 > S::zero() { self.0[1][0] / l11 } else { S::zero() };
        let rem = self.0[1][1] - l21 * l21;
        if rem < -(self.frobenius() * lit(1e-12)) {
            return None;
        }
        Some(Self([[l11, S::zero()], [l21, rem.max(S::zero()).sqrt()]]))
    }
}

impl<S: Scalar> Add for Mat2<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self([
            [self.0[0][0] + o.0[0][0], self.0[0][1] + o.0[0][1]],
            [self.0[1][0] + o.0[1][0], self.0[1][1] + o.0[1][1]],
        ])
    }
}

impl<S: Scalar> Sub for Mat2<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self([
            [self.0[0][0] - o.0[0][0], self.0[0][1] - o.0[0][1]],
            [self.0[1][0] - o.0[1][0], self.0[1][1] - o.0[1][1]],
        ])
    }
}

impl<S: Scalar> AddAssign for Mat2<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar> Mul for Mat2<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let a = self.0;
        let b = o.0;
        Self([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }
}
