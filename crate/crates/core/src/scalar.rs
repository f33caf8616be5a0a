use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar used by the numeric parts of the crate: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 converts to every float scalar")
    }

    fn from_usize_lossy(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize converts to every float scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("float scalar converts to f64")
    }

    fn half() -> Self {
        Self::from_f64_lossy(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn l2_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_symmetric_and_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!((sigmoid(3.0f64) + sigmoid(-3.0f64) - 1.0).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f32), 1.0);
    }

    #[test]
    fn norms_in_both_precisions() {
        assert_eq!(l2_norm(&[3.0f32, 4.0]), 5.0);
        assert_eq!(dot(&[1.0f64, 2.0], &[3.0, 4.0]), 11.0);
    }
}
