use rand::Rng;

use super::linalg::{dot, gemv_add, gemv_t_add, ger_add};
use super::loss::softmax;
use super::param::{Param, Parameters};
use super::{check_dim, init, NnError};
use crate::Scalar;

/// Additive attention pooling with a learned context vector `u`.
///
/// `e_t = uᵀ tanh(W h_t + b)`, `α = softmax(e)`, `pooled = Σ α_t h_t`.
#[derive(Clone, Debug)]
pub struct Attention<T> {
    pub w: Param<T>,
    pub b: Param<T>,
    pub u: Param<T>,
}

#[derive(Clone, Debug)]
pub struct AttentionCache<T> {
    hs: Vec<Vec<T>>,
    k: Vec<Vec<T>>,
    alpha: Vec<T>,
}

impl<T: Scalar> Attention<T> {
    pub fn new<R: Rng>(input: usize, attn: usize, rng: &mut R) -> Self {
        Self {
            w: Param::new(init::xavier_uniform(&[attn, input], input, attn, rng)),
            b: Param::zeros(&[attn]),
            u: Param::new(init::xavier_uniform(&[attn], attn, 1, rng)),
        }
    }

    pub fn zeros(input: usize, attn: usize) -> Self {
        Self { w: Param::zeros(&[attn, input]), b: Param::zeros(&[attn]), u: Param::zeros(&[attn]) }
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.cols()
    }

    /// Returns `(pooled, α, cache)`.
    pub fn forward(&self, hs: &[Vec<T>]) -> Result<(Vec<T>, Vec<T>, AttentionCache<T>), NnError> {
        if hs.is_empty() {
            return Err(NnError::EmptySequence);
        }
        let d = self.input_dim();
        let mut k = Vec::with_capacity(hs.len());
        let mut e = Vec::with_capacity(hs.len());
        for h in hs {
            check_dim("attention input", d, h.len())?;
            let mut a = self.b.value.data().to_vec();
            gemv_add(self.w.value.data(), h, &mut a);
            let kt: Vec<T> = a.into_iter().map(|v| v.tanh()).collect();
            e.push(dot(self.u.value.data(), &kt));
            k.push(kt);
        }
        let alpha = softmax(&e);
        let mut pooled = vec![T::zero(); d];
        for (a, h) in alpha.iter().zip(hs) {
            for (p, v) in pooled.iter_mut().zip(h) {
                *p += *a * *v;
            }
        }
        Ok((pooled, alpha.clone(), AttentionCache { hs: hs.to_vec(), k, alpha }))
    }

    /// Returns the gradient for each input vector.
    pub fn backward(&mut self, cache: &AttentionCache<T>, d_pooled: &[T]) -> Vec<Vec<T>> {
        let alpha = &cache.alpha;
        let d_alpha: Vec<T> = cache.hs.iter().map(|h| dot(d_pooled, h)).collect();
        let mean: T = alpha.iter().zip(&d_alpha).map(|(a, g)| *a * *g).sum();
        let mut dhs = Vec::with_capacity(cache.hs.len());
        for t in 0..cache.hs.len() {
            let de = alpha[t] * (d_alpha[t] - mean);
            let kt = &cache.k[t];
            for (g, kv) in self.u.grad.iter_mut().zip(kt) {
                *g += de * *kv;
            }
            let u = self.u.value.data();
            let da: Vec<T> = kt.iter().zip(u).map(|(kv, uv)| de * *uv * (T::one() - *kv * *kv)).collect();
            ger_add(&mut self.w.grad, &da, &cache.hs[t]);
            for (g, v) in self.b.grad.iter_mut().zip(&da) {
                *g += *v;
            }
            let mut dh: Vec<T> = d_pooled.iter().map(|g| *g * alpha[t]).collect();
            gemv_t_add(self.w.value.data(), &da, &mut dh);
            dhs.push(dh);
        }
        dhs
    }
}

impl<T: Scalar> Parameters<T> for Attention<T> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param<T>)) {
        f("w", &self.w);
        f("b", &self.b);
        f("u", &self.u);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f("w", &mut self.w);
        f("b", &mut self.b);
        f("u", &mut self.u);
    }
}
