//! Radial convolution: every tap at the same rounded distance from the
//! filter center shares one weight, so each kernel is fixed by all eight
//! symmetries of the square.

use crate::error::{ensure_dim, Result};
use crate::ring_geometry::{accumulate_radial_grad, build_radial_filter, RadialWeights};
use crate::scalar::Real;
use crate::tensor::{conv2d_backward, conv2d_forward, Tensor4};

use super::standard::{add_bias, bias_grad};

#[derive(Clone, Debug)]
pub struct RadGrads<T> {
    pub input: Tensor4<T>,
    pub weights: RadialWeights<T>,
    pub bias: Vec<T>,
}

pub fn rad_forward<T: Real>(
    input: &Tensor4<T>,
    w: &RadialWeights<T>,
    bias: Option<&[T]>,
    stride: usize,
    padding: usize,
) -> Result<Tensor4<T>> {
    ensure_dim("rad_forward", "input channels", w.in_channels(), input.c())?;
    let filters = build_radial_filter(w, w.k())?;
    let mut out = conv2d_forward(input, &filters, stride, padding)?;
    if let Some(b) = bias {
        add_bias(&mut out, b)?;
    }
    Ok(out)
}

/// Chain rule through the dense convolution and then through the radial
/// weight sharing.
pub fn rad_backward<T: Real>(
    input: &Tensor4<T>,
    w: &RadialWeights<T>,
    grad_out: &Tensor4<T>,
    stride: usize,
    padding: usize,
) -> Result<RadGrads<T>> {
    ensure_dim("rad_backward", "input channels", w.in_channels(), input.c())?;
    let filters = build_radial_filter(w, w.k())?;
    let (gin, gdense) = conv2d_backward(input, &filters, grad_out, stride, padding)?;
    Ok(RadGrads {
        input: gin,
        weights: accumulate_radial_grad(&gdense, w.radius())?,
        bias: bias_grad(grad_out),
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::gradcheck::{check_tensor_grad, check_vec_grad, FD_STEP};
    use crate::tensor::rot90;

    fn random_weights(rng: &mut ChaCha8Rng, out: usize, cin: usize, radius: usize) -> RadialWeights<f64> {
        let vals = (0..out * cin * (radius + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        RadialWeights::from_vec(out, cin, radius, vals).unwrap()
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor4::<f64>::random([2, 3, 5, 5], 1.0, &mut rng);
        let w = RadialWeights::zeros(2, 3, 1);
        let y = rad_forward(&x, &w, Some(&[0.25, -1.5]), 1, 1).unwrap();
        assert!(y.plane(1, 0).iter().all(|&v| v == 0.25));
        assert!(y.plane(0, 1).iter().all(|&v| v == -1.5));
    }

    #[test]
    fn all_ones_window_sums_the_filter() {
        let x = Tensor4::filled([1, 1, 3, 3], 1.0f64);
        let w = RadialWeights::from_vec(1, 1, 1, vec![0.5, 2.0]).unwrap();
        let y = rad_forward(&x, &w, Some(&[0.125]), 1, 0).unwrap();
        assert_eq!(y.data(), &[0.5 + 8.0 * 2.0 + 0.125]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let x = Tensor4::<f64>::zeros(1, 2, 5, 5);
        let w = RadialWeights::<f64>::zeros(1, 3, 1);
        assert!(rad_forward(&x, &w, None, 1, 1).is_err());
        let g = Tensor4::<f64>::zeros(1, 1, 5, 5);
        assert!(rad_backward(&x, &w, &g, 1, 1).is_err());
    }

    #[test]
    fn equivariant_under_quarter_turns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for radius in [1, 2] {
            let k = 2 * radius + 1;
            let x = Tensor4::<f64>::random([2, 3, 9, 9], 1.0, &mut rng);
            let w = random_weights(&mut rng, 4, 3, radius);
            let y = rad_forward(&x, &w, Some(&[0.1, 0.2, 0.3, 0.4]), 1, k / 2).unwrap();
            for q in 1..4 {
                let yr = rad_forward(&rot90(&x, q), &w, Some(&[0.1, 0.2, 0.3, 0.4]), 1, k / 2).unwrap();
                assert!(yr.max_abs_diff(&rot90(&y, q)) < 1e-10);
            }
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor4::<f64>::random([1, 2, 4, 4], 1.0, &mut rng);
        let w = random_weights(&mut rng, 3, 2, 1);
        let g = rad_backward(&x, &w, &Tensor4::zeros(1, 3, 4, 4), 1, 1).unwrap();
        assert!(g.input.data().iter().chain(g.weights.values()).chain(&g.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_product_rule() {
        // With a 1×1 input and padding 1, only the center weight touches the pixel.
        let x = Tensor4::from_vec([1, 1, 1, 1], vec![3.0f64]).unwrap();
        let w = RadialWeights::from_vec(1, 1, 1, vec![2.0, 5.0]).unwrap();
        let g = Tensor4::from_vec([1, 1, 1, 1], vec![0.5f64]).unwrap();
        assert_eq!(rad_forward(&x, &w, None, 1, 1).unwrap().data(), &[6.0]);
        let grads = rad_backward(&x, &w, &g, 1, 1).unwrap();
        assert_eq!(grads.input.data(), &[1.0]);
        assert_eq!(grads.weights.values(), &[1.5, 0.0]);
        assert_eq!(grads.bias, vec![0.5]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &(radius, stride, pad) in &[(1usize, 1usize, 1usize), (2, 1, 2), (1, 2, 1), (2, 1, 0)] {
            let x = Tensor4::<f64>::random([2, 2, 7, 7], 1.0, &mut rng);
            let w = random_weights(&mut rng, 3, 2, radius);
            let bias = vec![0.1, -0.3, 0.2];
            let y = rad_forward(&x, &w, Some(&bias), stride, pad).unwrap();
            let r = Tensor4::random(y.dims(), 1.0, &mut rng);
            let g = rad_backward(&x, &w, &r, stride, pad).unwrap();
            let loss = |x: &Tensor4<f64>, w: &RadialWeights<f64>, b: &[f64]| {
                rad_forward(x, w, Some(b), stride, pad).unwrap().dot(&r)
            };
            assert!(check_tensor_grad(&x, &g.input, |x| loss(x, &w, &bias), FD_STEP) < 1e-6);
            let wl = |v: &[f64]| loss(&x, &RadialWeights::from_vec(3, 2, radius, v.to_vec()).unwrap(), &bias);
            assert!(check_vec_grad(w.values(), g.weights.values(), wl, FD_STEP) < 1e-6);
            assert!(check_vec_grad(&bias, &g.bias, |b| loss(&x, &w, b), FD_STEP) < 1e-6);
        }
    }
}
