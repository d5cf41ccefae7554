//! Slice-level BLAS-like helpers. Matrices are row-major with
//! `cols == x.len()`.

use crate::Scalar;

/// `out += W x`
#[inline]
pub fn gemv_add<T: Scalar>(w: &[T], x: &[T], out: &mut [T]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), cols * out.len());
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        let mut acc = T::zero();
        for (a, b) in row.iter().zip(x) {
            acc += *a * *b;
        }
        *o += acc;
    }
}

/// `dx += Wᵀ dy`
#[inline]
pub fn gemv_t_add<T: Scalar>(w: &[T], dy: &[T], dx: &mut [T]) {
    let cols = dx.len();
    debug_assert_eq!(w.len(), cols * dy.len());
    for (g, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if *g == T::zero() {
            continue;
        }
        for (d, a) in dx.iter_mut().zip(row) {
            *d += *a * *g;
        }
    }
}

/// `dW += dy xᵀ`
#[inline]
pub fn ger_add<T: Scalar>(dw: &mut [T], dy: &[T], x: &[T]) {
    let cols = x.len();
    debug_assert_eq!(dw.len(), cols * dy.len());
    for (g, row) in dy.iter().zip(dw.chunks_exact_mut(cols)) {
        if *g == T::zero() {
            continue;
        }
        for (d, b) in row.iter_mut().zip(x) {
            *d += *g * *b;
        }
    }
}

#[inline]
pub fn add_assign<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += *b;
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn concat<T: Scalar>(parts: &[&[T]]) -> Vec<T> {
    let mut out = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}
