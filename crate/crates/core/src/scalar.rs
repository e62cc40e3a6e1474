//! Floating-point scalar abstraction used by the scoring, loss and metric code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the numeric core is written against: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
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
    /// Lossy conversion from `f64`; used for constants and hyperparameters.
    fn of(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("f64 constant representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable `log(sum(exp(xs)))`. Empty input yields negative infinity.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

pub fn log_softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| x - lse).collect()
}

pub fn softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    log_softmax(xs).into_iter().map(Float::exp).collect()
}

/// Index of the maximum element; ties resolve to the lowest index.
/// Returns `(index, tied)` where `tied` reports that another index shares the maximum.
pub fn argmax<T: Scalar>(xs: &[T]) -> Option<(usize, bool)> {
    let mut best: Option<(usize, T)> = None;
    let mut tied = false;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            None => best = Some((i, x)),
            Some((_, b)) if x > b => {
                best = Some((i, x));
                tied = false;
            }
            Some((_, b)) if x == b => tied = true,
            _ => {}
        }
    }
    best.map(|(i, _)| (i, tied))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_normalizes() {
        let lp = log_softmax(&[1.0_f64, 2.0, 3.0]);
        let total: f64 = lp.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_large_inputs() {
        let v = log_sum_exp(&[1000.0_f64, 1000.0]);
        assert!((v - (1000.0 + 2.0_f64.ln())).abs() < 1e-9);
        let v32 = log_sum_exp(&[100.0_f32, 0.0]);
        assert!(v32.is_finite());
    }

    #[test]
    fn argmax_tie_goes_low() {
        assert_eq!(argmax(&[1.0_f64, 3.0, 3.0]), Some((1, true)));
        assert_eq!(argmax(&[4.0_f64, 3.0]), Some((0, false)));
        assert_eq!(argmax::<f64>(&[]), None);
    }
}
