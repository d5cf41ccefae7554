//! Central finite-difference gradient checking.
//!
//! Relative error is `|a - n| / max(|a|, |n|, REL_FLOOR)`; the floor keeps
//! entries whose true gradient is essentially zero from dominating the
//! report with round-off.

use super::param::Parameters;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    fn record(&mut self, name: &str, idx: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if self.worst.is_none() || err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst = Some((name.to_string(), idx));
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

/// Checks parameter gradients of `model`.
///
/// `loss` must run a forward and backward pass, accumulating gradients into
/// the model, and return the scalar loss. At most `max_per_tensor` evenly
/// strided entries of each tensor are perturbed (`None` checks all).
pub fn check_params<M, F>(model: &mut M, mut loss: F, eps: f64, max_per_tensor: Option<usize>) -> GradCheckReport
where
    M: Parameters<f64>,
    F: FnMut(&mut M) -> f64,
{
    model.zero_grad();
    loss(model);
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    model.visit(&mut |name, p| analytic.push((name.to_string(), p.grad.clone())));
    model.zero_grad();

    let mut report = GradCheckReport::default();
    for (name, grads) in &analytic {
        let n = grads.len();
        let stride = max_per_tensor.map_or(1, |m| n.div_ceil(m.max(1)).max(1));
        for idx in (0..n).step_by(stride) {
            let orig = get_entry(model, name, idx);
            set_entry(model, name, idx, orig + eps);
            let plus = loss(model);
            set_entry(model, name, idx, orig - eps);
            let minus = loss(model);
            set_entry(model, name, idx, orig);
            model.zero_grad();
            report.record(name, idx, grads[idx], (plus - minus) / (2.0 * eps));
        }
    }
    report
}

/// Central-difference gradient of a scalar function of a vector.
pub fn numerical_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + eps;
            let plus = f(&xp);
            xp[i] = orig - eps;
            let minus = f(&xp);
            xp[i] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// Compares an analytic input gradient against [`numerical_grad`].
pub fn check_input(analytic: &[f64], f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> GradCheckReport {
    let numeric = numerical_grad(f, x, eps);
    let mut report = GradCheckReport::default();
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        report.record("input", i, *a, *n);
    }
    report
}

fn get_entry<M: Parameters<f64>>(model: &M, name: &str, idx: usize) -> f64 {
    let mut out = None;
    model.visit(&mut |n, p| {
        if n == name {
            out = Some(p.value.data()[idx]);
        }
    });
    out.expect("parameter exists")
}

fn set_entry<M: Parameters<f64>>(model: &mut M, name: &str, idx: usize, value: f64) {
    model.visit_mut(&mut |n, p| {
        if n == name {
            p.value.data_mut()[idx] = value;
        }
    });
}
