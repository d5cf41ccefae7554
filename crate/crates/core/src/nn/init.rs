//! Seeded parameter initialization.

use rand::Rng;

use super::Tensor;
use crate::{lit, Scalar};

/// Glorot/Xavier uniform: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<T: Scalar, R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, a, rng)
}

pub fn uniform<T: Scalar, R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| lit(rng.gen_range(-bound..=bound))).collect();
    Tensor::from_vec(shape, data).expect("shape product matches data length")
}

/// Gate-stacked recurrent matrix (`gates * hidden` rows): each gate block
/// is initialized with its own fan-in/fan-out.
pub fn xavier_gates<T: Scalar, R: Rng>(gates: usize, hidden: usize, input: usize, rng: &mut R) -> Tensor<T> {
    let mut data = Vec::with_capacity(gates * hidden * input);
    for _ in 0..gates {
        let block: Tensor<T> = xavier_uniform(&[hidden, input], input, hidden, rng);
        data.extend_from_slice(block.data());
    }
    Tensor::from_vec(&[gates * hidden, input], data).expect("gate block shapes")
}
