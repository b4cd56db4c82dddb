//! Scalar abstraction shared by the reward and policy-optimization math.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type usable by the reward engine and the GRPO core.
///
/// Implemented for `f32` and `f64`. The serde bounds let configuration and
/// report types stay generic while still round-tripping through JSON/TOML.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Every finite `f64` is representable (possibly
    /// rounded) in the implementing types.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().copied().sum::<T>() / T::from_count(xs.len()))
}

/// Population variance (divides by `n`), computed with a two-pass sum.
pub fn population_variance<T: Scalar>(xs: &[T]) -> Option<T> {
    let mu = mean(xs)?;
    let ss: T = xs.iter().map(|&x| (x - mu) * (x - mu)).sum();
    Some(ss / T::from_count(xs.len()))
}

/// Numerically stable softmax of `logits / temperature`.
pub fn softmax<T: Scalar>(logits: &[T], temperature: T) -> Vec<T> {
    let scaled: Vec<T> = logits.iter().map(|&z| z / temperature).collect();
    let max = scaled
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<T> = scaled.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Log-softmax of `logits / temperature` using log-sum-exp.
pub fn log_softmax<T: Scalar>(logits: &[T], temperature: T) -> Vec<T> {
    let scaled: Vec<T> = logits.iter().map(|&z| z / temperature).collect();
    let max = scaled
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let lse = max + scaled.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    scaled.into_iter().map(|z| z - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_variance() {
        assert_eq!(mean::<f64>(&[]), None);
        assert_eq!(mean(&[1.0f64, 2.0, 3.0, 4.0]), Some(2.5));
        assert_eq!(population_variance(&[1.0f64, 2.0, 3.0, 4.0]), Some(1.25));
    }

    #[test]
    fn softmax_sums_to_one_in_both_precisions() {
        let p64 = softmax(&[1.0f64, -3.0, 700.0, 2.5], 0.8);
        assert!((p64.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let p32 = softmax(&[1.0f32, -3.0, 0.5], 1.0);
        assert!((p32.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn log_softmax_matches_ln_of_softmax() {
        let z = [0.3f64, -1.2, 2.0, 0.0];
        let p = softmax(&z, 0.7);
        let lp = log_softmax(&z, 0.7);
        for (a, b) in p.iter().zip(&lp) {
            assert!((a.ln() - b).abs() < 1e-12);
        }
    }
}
