use crate::Scalar;

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against `target`, optionally scaled by
/// a per-class weight of the target class. Returns `(loss, dloss/dlogits)`.
pub fn softmax_xent<T: Scalar>(logits: &[T], target: usize, class_weights: Option<&[T]>) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let shifted: Vec<T> = logits.iter().map(|&v| v - max).collect();
    let log_z = shifted.iter().map(|v| v.exp()).sum::<T>().ln();
    let weight = class_weights.map_or(T::one(), |w| w[target]);
    let loss = weight * (log_z - shifted[target]);
    let grad = shifted
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let p = (*v - log_z).exp();
            let y = if k == target { T::one() } else { T::zero() };
            weight * (p - y)
        })
        .collect();
    (loss, grad)
}
