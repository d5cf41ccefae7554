use std::collections::BTreeMap;

use super::{NnError, Tensor};
use crate::Scalar;

/// A trainable tensor with its gradient buffer and Adam moments.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Vec<T>,
    pub(crate) m: Vec<T>,
    pub(crate) v: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let n = value.len();
        Self { value, grad: vec![T::zero(); n], m: vec![T::zero(); n], v: vec![T::zero(); n] }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    /// First and second Adam moments.
    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.m, &self.v)
    }

    pub fn reset_moments(&mut self) {
        self.m.iter_mut().for_each(|x| *x = T::zero());
        self.v.iter_mut().for_each(|x| *x = T::zero());
    }
}

/// Anything holding named parameters.
///
/// Names are dotted paths (`word_encoder.fwd.w`) and are stable across
/// versions: checkpoints key tensors by them.
pub trait Parameters<T: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, p| p.zero_grad());
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| n += p.len());
        n
    }

    fn param_set(&self) -> ParamSet<T> {
        let mut set = ParamSet::default();
        self.visit(&mut |name, p| {
            set.tensors.insert(name.to_string(), p.value.clone());
        });
        set
    }

    /// Copies values from `set`; every parameter must be present with the
    /// same shape. Optimizer state is reset.
    fn load_param_set(&mut self, set: &ParamSet<T>) -> Result<(), NnError> {
        let mut err = None;
        self.visit_mut(&mut |name, p| {
            if err.is_some() {
                return;
            }
            match set.tensors.get(name) {
                Some(t) if t.shape() == p.value.shape() => {
                    p.value = t.clone();
                    p.zero_grad();
                    p.reset_moments();
                }
                Some(t) => {
                    err = Some(NnError::Checkpoint(format!(
                        "tensor {name}: shape {:?} != expected {:?}",
                        t.shape(),
                        p.value.shape()
                    )))
                }
                None => err = Some(NnError::Checkpoint(format!("missing tensor {name}"))),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Visits `child` with every name prefixed by `prefix.`.
pub(crate) fn visit_child<T: Scalar, P: Parameters<T> + ?Sized>(
    child: &P,
    prefix: &str,
    f: &mut dyn FnMut(&str, &Param<T>),
) {
    child.visit(&mut |name, p| f(&format!("{prefix}.{name}"), p));
}

pub(crate) fn visit_child_mut<T: Scalar, P: Parameters<T> + ?Sized>(
    child: &mut P,
    prefix: &str,
    f: &mut dyn FnMut(&str, &mut Param<T>),
) {
    child.visit_mut(&mut |name, p| f(&format!("{prefix}.{name}"), p));
}

/// Named snapshot of parameter values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    pub tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}
