use std::marker::PhantomData;

use super::param::{visit_child, visit_child_mut, Param, Parameters};
use super::NnError;
use crate::Scalar;

/// A recurrent cell that can be unrolled over a sequence.
pub trait RecurrentCell<T: Scalar>: Parameters<T> {
    type State: Clone;
    type Cache;

    fn input_dim(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    /// Zero state; also used as the zero gradient of a state.
    fn initial_state(&self) -> Self::State;
    fn output(state: &Self::State) -> &[T];
    fn add_output_grad(d_state: &mut Self::State, dh: &[T]);
    fn forward_step(&self, x: &[T], prev: &Self::State) -> Result<(Self::State, Self::Cache), NnError>;
    /// Returns `(dx, d_prev_state)` and accumulates parameter gradients.
    fn backward_step(&mut self, cache: &Self::Cache, d_state: &Self::State) -> (Vec<T>, Self::State);
}

/// Bidirectional encoder: output `t` is `[fwd_h_t ; bwd_h_t]` where the
/// backward cell reads the sequence right to left.
#[derive(Clone, Debug)]
pub struct BiRnn<T, C> {
    pub fwd: C,
    pub bwd: C,
    _scalar: PhantomData<T>,
}

pub struct BiRnnCache<T: Scalar, C: RecurrentCell<T>> {
    fwd: Vec<C::Cache>,
    // indexed by sequence position, not processing order
    bwd: Vec<C::Cache>,
}

impl<T: Scalar, C: RecurrentCell<T>> BiRnnCache<T, C> {
    pub fn len(&self) -> usize {
        self.fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }
}

impl<T: Scalar, C: RecurrentCell<T>> BiRnn<T, C> {
    pub fn new(fwd: C, bwd: C) -> Self {
        Self { fwd, bwd, _scalar: PhantomData }
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    /// Width of each output vector (twice the cell hidden size).
    pub fn output_dim(&self) -> usize {
        self.fwd.hidden_dim() + self.bwd.hidden_dim()
    }

    pub fn forward(&self, xs: &[Vec<T>]) -> Result<(Vec<Vec<T>>, BiRnnCache<T, C>), NnError> {
        if xs.is_empty() {
            return Err(NnError::EmptySequence);
        }
        let n = xs.len();
        let hf = self.fwd.hidden_dim();
        let mut out: Vec<Vec<T>> = vec![Vec::with_capacity(self.output_dim()); n];
        let mut fwd_caches = Vec::with_capacity(n);
        let mut state = self.fwd.initial_state();
        for (t, x) in xs.iter().enumerate() {
            let (s, cache) = self.fwd.forward_step(x, &state)?;
            out[t].extend_from_slice(C::output(&s));
            fwd_caches.push(cache);
            state = s;
        }
        let mut bwd_caches: Vec<Option<C::Cache>> = (0..n).map(|_| None).collect();
        let mut state = self.bwd.initial_state();
        for t in (0..n).rev() {
            let (s, cache) = self.bwd.forward_step(&xs[t], &state)?;
            out[t].extend_from_slice(C::output(&s));
            bwd_caches[t] = Some(cache);
            state = s;
        }
        debug_assert!(out.iter().all(|o| o.len() == hf + self.bwd.hidden_dim()));
        Ok((out, BiRnnCache { fwd: fwd_caches, bwd: bwd_caches.into_iter().map(|c| c.expect("filled")).collect() }))
    }

    /// Backpropagates `d_out` (one gradient per output vector); returns the
    /// gradient for each input vector.
    pub fn backward(&mut self, cache: &BiRnnCache<T, C>, d_out: &[Vec<T>]) -> Vec<Vec<T>> {
        let n = cache.fwd.len();
        let hf = self.fwd.hidden_dim();
        let mut dxs: Vec<Vec<T>> = vec![vec![T::zero(); self.fwd.input_dim()]; n];
        let mut d_state = self.fwd.initial_state();
        for t in (0..n).rev() {
            C::add_output_grad(&mut d_state, &d_out[t][..hf]);
            let (dx, dprev) = self.fwd.backward_step(&cache.fwd[t], &d_state);
            super::linalg::add_assign(&mut dxs[t], &dx);
            d_state = dprev;
        }
        let mut d_state = self.bwd.initial_state();
        for t in 0..n {
            C::add_output_grad(&mut d_state, &d_out[t][hf..]);
            let (dx, dprev) = self.bwd.backward_step(&cache.bwd[t], &d_state);
            super::linalg::add_assign(&mut dxs[t], &dx);
            d_state = dprev;
        }
        dxs
    }
}

impl<T: Scalar, C: RecurrentCell<T>> Parameters<T> for BiRnn<T, C> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        visit_child(&self.fwd, "fwd", f);
        visit_child(&self.bwd, "bwd", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        visit_child_mut(&mut self.fwd, "fwd", f);
        visit_child_mut(&mut self.bwd, "bwd", f);
    }
}
