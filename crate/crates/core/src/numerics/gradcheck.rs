//! Central finite differences, used as the independent oracle for
//! [`super::Graph::backward`].

use super::{ParamId, ParamStore, Tensor};

/// `(f(θ + h·eᵢ) − f(θ − h·eᵢ)) / 2h` for every coordinate of `theta`.
pub fn finite_diff_grad<F>(mut loss_fn: F, theta: &Tensor, h: f64) -> Tensor
where
    F: FnMut(&Tensor) -> f64,
{
    let mut probe = theta.clone();
    let mut out = Vec::with_capacity(theta.numel());
    for i in 0..theta.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = loss_fn(&probe);
        probe.data_mut()[i] = orig - h;
        let down = loss_fn(&probe);
        probe.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Tensor::new(theta.shape(), out).expect("same shape as theta")
}

/// Finite-difference gradient of one tensor inside a store, holding the rest fixed.
pub fn finite_diff_param<F>(store: &ParamStore, id: ParamId, h: f64, mut loss_fn: F) -> Tensor
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut probe = store.clone();
    finite_diff_grad(
        |t| {
            probe.get_mut(id).data_mut().copy_from_slice(t.data());
            loss_fn(&probe)
        },
        store.get(id),
        h,
    )
}

/// Relative error used by all gradient checks: `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Largest [`relative_error`] over paired slices.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}
