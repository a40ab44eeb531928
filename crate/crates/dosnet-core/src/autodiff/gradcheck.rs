//! Central finite-difference gradient oracle.
//!
//! Used by tests and the acceptance suite to validate backward passes.
//! The oracle only ever calls the forward evaluation, so it stays
//! independent of the reverse-mode implementation it checks.

use super::tensor::Tensor;

/// Central finite differences of a scalar function of the parameter list,
/// one perturbed forward evaluation per real scalar component.
pub fn finite_difference_grads<F>(f: F, params: &[Tensor], h: f64) -> Vec<Tensor>
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut grads = Vec::with_capacity(params.len());
    let mut work: Vec<Tensor> = params.to_vec();
    for pi in 0..params.len() {
        let mut g = Tensor::zeros_like(&params[pi]);
        for i in 0..params[pi].real_scalar_count() {
            let orig = work[pi].real_scalar(i);
            work[pi].set_real_scalar(i, orig + h);
            let plus = f(&work);
            work[pi].set_real_scalar(i, orig - h);
            let minus = f(&work);
            work[pi].set_real_scalar(i, orig);
            g.set_real_scalar(i, (plus - minus) / (2.0 * h));
        }
        grads.push(g);
    }
    grads
}

/// Largest relative disagreement between analytic and finite-difference
/// gradients, with the denominator floored to avoid 0/0 on dead scalars.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for i in 0..a.real_scalar_count() {
            let av = a.real_scalar(i);
            let nv = n.real_scalar(i);
            let denom = av.abs().max(nv.abs()).max(1e-6);
            worst = worst.max((av - nv).abs() / denom);
        }
    }
    worst
}
