use rand::Rng;

use super::linalg::{gemv_add, gemv_t_add, ger_add};
use super::param::{Param, Parameters};
use super::{check_dim, init, NnError};
use crate::Scalar;

/// Affine layer `y = W x + b`.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub w: Param<T>,
    pub b: Param<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        Self { w: Param::new(init::xavier_uniform(&[output, input], input, output, rng)), b: Param::zeros(&[output]) }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self { w: Param::zeros(&[output, input]), b: Param::zeros(&[output]) }
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.value.rows()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, NnError> {
        check_dim("dense input", self.input_dim(), x.len())?;
        let mut y = self.b.value.data().to_vec();
        gemv_add(self.w.value.data(), x, &mut y);
        Ok(y)
    }

    /// Accumulates `dW`, `db`; returns `dx`.
    pub fn backward(&mut self, x: &[T], dy: &[T]) -> Vec<T> {
        ger_add(&mut self.w.grad, dy, x);
        for (g, d) in self.b.grad.iter_mut().zip(dy) {
            *g += *d;
        }
        let mut dx = vec![T::zero(); x.len()];
        gemv_t_add(self.w.value.data(), dy, &mut dx);
        dx
    }
}

impl<T: Scalar> Parameters<T> for Dense<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        f("w", &self.w);
        f("b", &self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("w", &mut self.w);
        f("b", &mut self.b);
    }
}
