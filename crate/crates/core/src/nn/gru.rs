use rand::Rng;

use super::linalg::{gemv_add, gemv_t_add, ger_add, sigmoid};
use super::param::{Param, Parameters};
use super::rnn::RecurrentCell;
use super::{check_dim, init, NnError};
use crate::Scalar;

/// Gated recurrent unit.
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// ñ  = tanh(W_n x + U_n (r ⊙ h) + b_n)
/// h' = (1 - z) ⊙ h + z ⊙ ñ
/// ```
///
/// `w` is `3H x D`, `u` is `3H x H`, `b` is `3H`, gate blocks in z, r, n order.
#[derive(Clone, Debug)]
pub struct Gru<T> {
    pub w: Param<T>,
    pub u: Param<T>,
    pub b: Param<T>,
    hidden: usize,
}

#[derive(Clone, Debug)]
pub struct GruCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    z: Vec<T>,
    r: Vec<T>,
    n: Vec<T>,
    rh: Vec<T>,
}

impl<T: Scalar> Gru<T> {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w: Param::new(init::xavier_gates(3, hidden, input, rng)),
            u: Param::new(init::xavier_gates(3, hidden, hidden, rng)),
            b: Param::zeros(&[3 * hidden]),
            hidden,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Param::zeros(&[3 * hidden, input]),
            u: Param::zeros(&[3 * hidden, hidden]),
            b: Param::zeros(&[3 * hidden]),
            hidden,
        }
    }

    /// One step; returns the new hidden state and the cache for backward.
    pub fn step(&self, x: &[T], h_prev: &[T]) -> Result<(Vec<T>, GruCache<T>), NnError> {
        let h = self.hidden;
        check_dim("gru input", self.w.value.cols(), x.len())?;
        check_dim("gru hidden", h, h_prev.len())?;
        let w = self.w.value.data();
        let u = self.u.value.data();
        let d = x.len();

        let mut a = self.b.value.data().to_vec();
        gemv_add(w, x, &mut a);
        // z and r blocks see h directly
        gemv_add(&u[..2 * h * h], h_prev, &mut a[..2 * h]);
        let z: Vec<T> = a[..h].iter().map(|&v| sigmoid(v)).collect();
        let r: Vec<T> = a[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let rh: Vec<T> = r.iter().zip(h_prev).map(|(&a, &b)| a * b).collect();
        gemv_add(&u[2 * h * h..], &rh, &mut a[2 * h..]);
        let n: Vec<T> = a[2 * h..].iter().map(|&v| v.tanh()).collect();
        let h_new = (0..h).map(|i| (T::one() - z[i]) * h_prev[i] + z[i] * n[i]).collect();
        debug_assert_eq!(w.len(), 3 * h * d);
        Ok((h_new, GruCache { x: x.to_vec(), h_prev: h_prev.to_vec(), z, r, n, rh }))
    }

    /// Backward through one step given `dh` on the output; returns `(dx, dh_prev)`.
    pub fn step_backward(&mut self, cache: &GruCache<T>, dh: &[T]) -> (Vec<T>, Vec<T>) {
        let h = self.hidden;
        let one = T::one();
        let mut dh_prev: Vec<T> = (0..h).map(|i| dh[i] * (one - cache.z[i])).collect();
        let mut da = vec![T::zero(); 3 * h];
        for i in 0..h {
            let dz = dh[i] * (cache.n[i] - cache.h_prev[i]);
            let dn = dh[i] * cache.z[i];
            da[i] = dz * cache.z[i] * (one - cache.z[i]);
            da[2 * h + i] = dn * (one - cache.n[i] * cache.n[i]);
        }
        let u = self.u.value.data();
        // candidate block: U_n (r ⊙ h)
        let mut drh = vec![T::zero(); h];
        gemv_t_add(&u[2 * h * h..], &da[2 * h..], &mut drh);
        ger_add(&mut self.u.grad[2 * h * h..], &da[2 * h..], &cache.rh);
        for i in 0..h {
            let dr = drh[i] * cache.h_prev[i];
            dh_prev[i] += drh[i] * cache.r[i];
            da[h + i] = dr * cache.r[i] * (one - cache.r[i]);
        }
        // z and r blocks: U h_prev
        gemv_t_add(&u[..2 * h * h], &da[..2 * h], &mut dh_prev);
        ger_add(&mut self.u.grad[..2 * h * h], &da[..2 * h], &cache.h_prev);

        ger_add(&mut self.w.grad, &da, &cache.x);
        for (g, d) in self.b.grad.iter_mut().zip(&da) {
            *g += *d;
        }
        let mut dx = vec![T::zero(); cache.x.len()];
        gemv_t_add(self.w.value.data(), &da, &mut dx);
        (dx, dh_prev)
    }
}

impl<T: Scalar> Parameters<T> for Gru<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        f("w", &self.w);
        f("u", &self.u);
        f("b", &self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("w", &mut self.w);
        f("u", &mut self.u);
        f("b", &mut self.b);
    }
}

impl<T: Scalar> RecurrentCell<T> for Gru<T> {
    type State = Vec<T>;
    type Cache = GruCache<T>;

    fn input_dim(&self) -> usize {
        self.w.value.cols()
    }

    fn hidden_dim(&self) -> usize {
        self.hidden
    }

    fn initial_state(&self) -> Vec<T> {
        vec![T::zero(); self.hidden]
    }

    fn output(state: &Vec<T>) -> &[T] {
        state
    }

    fn add_output_grad(d_state: &mut Vec<T>, dh: &[T]) {
        for (a, b) in d_state.iter_mut().zip(dh) {
            *a += *b;
        }
    }

    fn forward_step(&self, x: &[T], prev: &Vec<T>) -> Result<(Vec<T>, GruCache<T>), NnError> {
        self.step(x, prev)
    }

    fn backward_step(&mut self, cache: &GruCache<T>, d_state: &Vec<T>) -> (Vec<T>, Vec<T>) {
        self.step_backward(cache, d_state)
    }
}
