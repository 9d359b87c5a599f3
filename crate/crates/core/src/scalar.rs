//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All math is written against [`Scalar`], which is implemented for `f32` and
//! `f64`. Persistence always goes through 32-bit floats; in-memory pipelines
//! default to `f64` via the aliases at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Lossless widening from the on-disk representation.
    fn from_f32_exact(v: f32) -> Self;

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to any Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    fn as_f32(self) -> f32 {
        self.to_f32().expect("Scalar converts to f32")
    }

    fn count(n: usize) -> Self {
        Self::of(n as f64)
    }
}

impl Scalar for f32 {
    fn from_f32_exact(v: f32) -> Self {
        v
    }
}

impl Scalar for f64 {
    fn from_f32_exact(v: f32) -> Self {
        f64::from(v)
    }
}

/// Numerically stable softmax of `logits` into a fresh vector.
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let mut out: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: F = out.iter().copied().sum();
    for p in &mut out {
        *p = *p / total;
    }
    out
}

/// `ln Σ exp(z)` without overflow.
pub fn log_sum_exp<F: Scalar>(logits: &[F]) -> F {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let total: F = logits.iter().map(|&z| (z - max).exp()).sum();
    max + total.ln()
}

pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn sq_dist<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| {
        let t = x - y;
        acc + t * t
    })
}

pub(crate) fn norm<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}
