use rand::Rng;

use super::linalg::{gemv_add, gemv_t_add, ger_add, sigmoid};
use super::param::{Param, Parameters};
use super::rnn::RecurrentCell;
use super::{check_dim, init, NnError};
use crate::Scalar;

/// Long short-term memory cell with gate blocks in i, f, g, o order.
///
/// ```text
/// c' = σ(a_f) ⊙ c + σ(a_i) ⊙ tanh(a_g)
/// h' = σ(a_o) ⊙ tanh(c')
/// ```
#[derive(Clone, Debug)]
pub struct Lstm<T> {
    pub w: Param<T>,
    pub u: Param<T>,
    pub b: Param<T>,
    hidden: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    i: Vec<T>,
    f: Vec<T>,
    g: Vec<T>,
    o: Vec<T>,
    tc: Vec<T>,
}

impl<T: Scalar> Lstm<T> {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w: Param::new(init::xavier_gates(4, hidden, input, rng)),
            u: Param::new(init::xavier_gates(4, hidden, hidden, rng)),
            b: Param::zeros(&[4 * hidden]),
            hidden,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Param::zeros(&[4 * hidden, input]),
            u: Param::zeros(&[4 * hidden, hidden]),
            b: Param::zeros(&[4 * hidden]),
            hidden,
        }
    }

    pub fn step(&self, x: &[T], prev: &LstmState<T>) -> Result<(LstmState<T>, LstmCache<T>), NnError> {
        let h = self.hidden;
        check_dim("lstm input", self.w.value.cols(), x.len())?;
        check_dim("lstm hidden", h, prev.h.len())?;
        check_dim("lstm cell", h, prev.c.len())?;
        let mut a = self.b.value.data().to_vec();
        gemv_add(self.w.value.data(), x, &mut a);
        gemv_add(self.u.value.data(), &prev.h, &mut a);
        let i: Vec<T> = a[..h].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<T> = a[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<T> = a[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
        let o: Vec<T> = a[3 * h..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<T> = (0..h).map(|k| f[k] * prev.c[k] + i[k] * g[k]).collect();
        let tc: Vec<T> = c.iter().map(|v| v.tanh()).collect();
        let hn = (0..h).map(|k| o[k] * tc[k]).collect();
        Ok((
            LstmState { h: hn, c },
            LstmCache { x: x.to_vec(), h_prev: prev.h.clone(), c_prev: prev.c.clone(), i, f, g, o, tc },
        ))
    }

    /// Backward through one step given gradients on `(h', c')`.
    pub fn step_backward(&mut self, cache: &LstmCache<T>, d: &LstmState<T>) -> (Vec<T>, LstmState<T>) {
        let h = self.hidden;
        let one = T::one();
        let mut da = vec![T::zero(); 4 * h];
        let mut dc_prev = vec![T::zero(); h];
        for k in 0..h {
            let dout = d.h[k] * cache.tc[k];
            let dc = d.c[k] + d.h[k] * cache.o[k] * (one - cache.tc[k] * cache.tc[k]);
            let di = dc * cache.g[k];
            let df = dc * cache.c_prev[k];
            let dg = dc * cache.i[k];
            dc_prev[k] = dc * cache.f[k];
            da[k] = di * cache.i[k] * (one - cache.i[k]);
            da[h + k] = df * cache.f[k] * (one - cache.f[k]);
            da[2 * h + k] = dg * (one - cache.g[k] * cache.g[k]);
            da[3 * h + k] = dout * cache.o[k] * (one - cache.o[k]);
        }
        ger_add(&mut self.w.grad, &da, &cache.x);
        ger_add(&mut self.u.grad, &da, &cache.h_prev);
        for (g, v) in self.b.grad.iter_mut().zip(&da) {
            *g += *v;
        }
        let mut dx = vec![T::zero(); cache.x.len()];
        gemv_t_add(self.w.value.data(), &da, &mut dx);
        let mut dh_prev = vec![T::zero(); h];
        gemv_t_add(self.u.value.data(), &da, &mut dh_prev);
        (dx, LstmState { h: dh_prev, c: dc_prev })
    }
}

impl<T: Scalar> Parameters<T> for Lstm<T> {
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

impl<T: Scalar> RecurrentCell<T> for Lstm<T> {
    type State = LstmState<T>;
    type Cache = LstmCache<T>;

    fn input_dim(&self) -> usize {
        self.w.value.cols()
    }

    fn hidden_dim(&self) -> usize {
        self.hidden
    }

    fn initial_state(&self) -> LstmState<T> {
        LstmState { h: vec![T::zero(); self.hidden], c: vec![T::zero(); self.hidden] }
    }

    fn output(state: &LstmState<T>) -> &[T] {
        &state.h
    }

    fn add_output_grad(d_state: &mut LstmState<T>, dh: &[T]) {
        for (a, b) in d_state.h.iter_mut().zip(dh) {
            *a += *b;
        }
    }

    fn forward_step(&self, x: &[T], prev: &LstmState<T>) -> Result<(LstmState<T>, LstmCache<T>), NnError> {
        self.step(x, prev)
    }

    fn backward_step(&mut self, cache: &LstmCache<T>, d_state: &LstmState<T>) -> (Vec<T>, LstmState<T>) {
        self.step_backward(cache, d_state)
    }
}
