//! Dense tanh MLPs with hand-written reverse-mode gradients.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

mod adam;
mod dist;
pub mod loss;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use dist::{entropy_row, log_softmax_row, sample_row, HeadLayout, MaskedCategorical};
pub use mlp::{Dense, Mlp, MlpTape};

use std::fmt::Debug;
use std::ops::AddAssign;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, NumCast};
use thiserror::Error;

pub trait Real:
    Float + LinalgScalar + ScalarOperand + NumCast + AddAssign + Debug + Default + Send + Sync + 'static
{
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("representable literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("finite cast")
    }

    /// Hidden-layer activation.
    #[inline]
    fn activation(self) -> Self {
        self.tanh()
    }
}

impl Real for f32 {
    /// Rational minimax approximation of tanh, within a few ulp of the libm
    /// result and several times faster (it vectorizes).
    #[inline]
    #[allow(clippy::excessive_precision)]
    fn activation(self) -> Self {
        const CLAMP: f32 = 7.905_311;
        const A: [f32; 7] = [
            4.893_524_6e-3,
            6.372_619_3e-4,
            1.485_722_4e-5,
            5.122_297e-8,
            -8.604_671_5e-11,
            2.000_187_9e-13,
            -2.760_768_5e-16,
        ];
        const B: [f32; 4] = [4.893_525_2e-3, 2.268_434_6e-3, 1.185_347_1e-4, 1.198_258_4e-6];
        let x = self.clamp(-CLAMP, CLAMP);
        let x2 = x * x;
        let mut p = A[6];
        for &a in A[..6].iter().rev() {
            p = p * x2 + a;
        }
        let q = ((B[3] * x2 + B[2]) * x2 + B[1]) * x2 + B[0];
        x * p / q
    }
}

impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("every action in row {0} is masked")]
    FullyMasked(usize),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
}

#[cfg(test)]
mod tests {
    use super::Real;

    #[test]
    fn fast_tanh_tracks_std() {
        let worst = (-100_000..=100_000)
            .map(|i| i as f32 * 1e-4)
            .map(|x| (f64::from(x.activation()) - f64::from(x).tanh()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        assert_eq!(0.0f32.activation(), 0.0);
        assert_eq!(50.0f32.activation(), -(-50.0f32).activation());
    }
}
