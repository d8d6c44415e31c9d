//! Central finite differences, used to validate analytic gradients.

use super::Tensor;

/// Floor on the denominator of [`relative_error`], so that gradients that are
/// zero up to rounding compare in absolute terms.
pub const REL_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// d f / d input for every entry of every input, by central differences.
pub fn numerical_gradient(
    f: &mut dyn FnMut(&[Tensor]) -> f64,
    inputs: &[Tensor],
    step: f64,
) -> Vec<Tensor> {
    let mut work = inputs.to_vec();
    let mut grads: Vec<Tensor> = inputs.iter().map(|t| Tensor::zeros(t.shape())).collect();
    for k in 0..inputs.len() {
        for j in 0..inputs[k].len() {
            let orig = work[k].data()[j];
            work[k].data_mut()[j] = orig + step;
            let up = f(&work);
            work[k].data_mut()[j] = orig - step;
            let down = f(&work);
            work[k].data_mut()[j] = orig;
            grads[k].data_mut()[j] = (up - down) / (2.0 * step);
        }
    }
    grads
}
