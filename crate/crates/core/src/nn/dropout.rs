use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-element multiplier: `0` for dropped units, `1 / (1 - rate)` for kept.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask<T> {
    scale: Vec<T>,
}

impl<T: Scalar> DropoutMask<T> {
    pub fn identity(n: usize) -> Self {
        Self { scale: vec![T::one(); n] }
    }

    /// Samples an inverted-dropout mask. Identity in eval mode or at rate 0.
    pub fn sample<R: Rng>(n: usize, rate: f64, mode: Mode, rng: &mut R) -> Result<Self, NnError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::DropoutRate(rate));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(Self::identity(n));
        }
        let keep = T::from_f64(1.0 / (1.0 - rate)).expect("finite");
        let scale = (0..n).map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep }).collect();
        Ok(Self { scale })
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.scale).map(|(a, s)| *a * *s).collect()
    }

    /// Dropout is linear in `x`, so the backward pass is the same product.
    pub fn backward(&self, dy: &[T]) -> Vec<T> {
        self.apply(dy)
    }

    pub fn len(&self) -> usize {
        self.scale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale.is_empty()
    }
}

/// Applies dropout to `x` with a mask drawn from `seed`.
pub fn dropout<T: Scalar>(x: &[T], rate: f64, mode: Mode, seed: u64) -> Result<Vec<T>, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DropoutMask::sample(x.len(), rate, mode, &mut rng)?.apply(x))
}
