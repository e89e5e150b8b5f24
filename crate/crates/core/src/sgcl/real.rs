//! Scalar abstraction shared by plain evaluation and the gradient tape.

use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::math;

/// A real number the forward pass can be written against once.
///
/// `f64` evaluates directly; [`super::tape::Var`] records every operation for
/// reverse-mode differentiation. Branching code reads [`Real::val`] and only
/// ever selects between values, so the branch itself carries no gradient.
pub trait Real:
    Copy
    + core::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn val(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn abs(self) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).fold(Self::cst(0.0), |acc, (&x, &y)| acc + x * y)
    }

    fn sum(a: &[Self]) -> Self {
        a.iter().fold(Self::cst(0.0), |acc, &x| acc + x)
    }

    fn max(self, other: Self) -> Self {
        if other.val() > self.val() {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other.val() < self.val() {
            other
        } else {
            self
        }
    }

    fn clamp01(self) -> Self {
        if self.val() < 0.0 {
            Self::cst(0.0)
        } else if self.val() > 1.0 {
            Self::cst(1.0)
        } else {
            self
        }
    }

    /// `log(sum(exp(x)))` shifted by the maximum for stability.
    fn logsumexp(x: &[Self]) -> Self {
        let m = x.iter().map(|v| v.val()).fold(f64::NEG_INFINITY, f64::max);
        let exps: alloc::vec::Vec<Self> = x.iter().map(|&v| (v - Self::cst(m)).exp()).collect();
        Self::sum(&exps).ln() + Self::cst(m)
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn val(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        math::exp(self)
    }
    fn ln(self) -> Self {
        math::ln(self)
    }
    fn tanh(self) -> Self {
        math::tanh(self)
    }
    fn sigmoid(self) -> Self {
        math::sigmoid(self)
    }
    fn softplus(self) -> Self {
        math::softplus(self)
    }
    fn sin(self) -> Self {
        math::sin(self)
    }
    fn cos(self) -> Self {
        math::cos(self)
    }
    fn abs(self) -> Self {
        math::abs(self)
    }
}

/// Softmax over the positions where `allowed` is true; other weights are 0.
///
/// Returns all zeros when nothing is allowed.
pub fn masked_softmax<S: Real>(logits: &[S], allowed: impl Fn(usize) -> bool) -> alloc::vec::Vec<S> {
    let m = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| allowed(i))
        .map(|(_, v)| v.val())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: alloc::vec::Vec<S> = logits
        .iter()
        .enumerate()
        .map(|(i, &v)| if allowed(i) { (v - S::cst(m)).exp() } else { S::cst(0.0) })
        .collect();
    if m == f64::NEG_INFINITY {
        return exps;
    }
    let total = S::sum(&exps);
    exps.into_iter().map(|e| e / total).collect()
}
