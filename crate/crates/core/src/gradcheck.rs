//! Central finite-difference checks.
//!
//! The error of one entry is `|analytic − numeric| / max(|analytic|,
//! |numeric|, 1)`: relative for entries of magnitude above one, absolute
//! below, so that rounding noise in near-zero entries does not dominate.

use crate::tensor::Tensor4;

/// Default step for central differences in f64.
pub const FD_STEP: f64 = 1e-6;

#[inline]
pub fn mixed_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Largest error between `analytic` and the central difference of `loss`
/// at every coordinate of `x`.
pub fn check_vec_grad(x: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64, step: f64) -> f64 {
    assert_eq!(x.len(), analytic.len(), "gradient length must match the parameter");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for idx in 0..x.len() {
        probe[idx] = x[idx] + step;
        let up = loss(&probe);
        probe[idx] = x[idx] - step;
        let down = loss(&probe);
        probe[idx] = x[idx];
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(mixed_error(analytic[idx], numeric));
    }
    worst
}

pub fn check_tensor_grad(
    x: &Tensor4<f64>,
    analytic: &Tensor4<f64>,
    loss: impl Fn(&Tensor4<f64>) -> f64,
    step: f64,
) -> f64 {
    assert_eq!(x.dims(), analytic.dims(), "gradient dims must match the input");
    let dims = x.dims();
    check_vec_grad(
        x.data(),
        analytic.data(),
        |v| loss(&Tensor4::from_vec(dims, v.to_vec()).expect("same dims")),
        step,
    )
}
