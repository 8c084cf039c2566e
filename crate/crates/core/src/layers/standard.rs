//! Conventional layers needed to assemble full models.

use crate::error::{ensure_dim, Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor4;

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.1;

/// Adds `bias[c]` to every element of channel `c`.
pub fn add_bias<T: Real>(t: &mut Tensor4<T>, bias: &[T]) -> Result<()> {
    ensure_dim("add_bias", "channels", t.c(), bias.len())?;
    for b in 0..t.n() {
        for (c, &v) in bias.iter().enumerate() {
            for x in t.plane_mut(b, c) {
                *x += v;
            }
        }
    }
    Ok(())
}

/// Per-channel sum of an upstream gradient.
pub fn bias_grad<T: Real>(grad_out: &Tensor4<T>) -> Vec<T> {
    (0..grad_out.c())
        .map(|c| {
            (0..grad_out.n())
                .map(|b| grad_out.plane(b, c).iter().copied().sum::<T>())
                .sum()
        })
        .collect()
}

/// `max(x, 0)`; NaN passes through so divergence stays visible.
pub fn relu_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v <= T::zero() { T::zero() } else { v })
}

pub fn relu_backward<T: Real>(x: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    if x.dims() != grad_out.dims() {
        return Err(Error::invalid(format!(
            "relu_backward: grad dims {:?} differ from input dims {:?}",
            grad_out.dims(),
            x.dims()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4::from_vec(x.dims(), data)
}

/// Per-channel batch normalization with learnable scale and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: T,
    pub momentum: T,
}

/// Values saved by a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    x_hat: Tensor4<T>,
    inv_std: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: T::lit(BATCHNORM_EPS),
            momentum: T::lit(BATCHNORM_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes with batch statistics and updates the running averages.
    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<(Tensor4<T>, BatchNormCache<T>)> {
        ensure_dim("batchnorm_forward", "channels", self.channels(), x.c())?;
        let count = x.n() * x.plane_len();
        let count_t = T::lit(count as f64);
        let mut x_hat = x.zeros_like();
        let mut y = x.zeros_like();
        let mut inv_std = Vec::with_capacity(x.c());
        for c in 0..x.c() {
            let mean = (0..x.n()).map(|b| x.plane(b, c).iter().copied().sum::<T>()).sum::<T>() / count_t;
            let var = (0..x.n())
                .map(|b| x.plane(b, c).iter().map(|&v| (v - mean) * (v - mean)).sum::<T>())
                .sum::<T>()
                / count_t;
            let istd = T::one() / (var + self.eps).sqrt();
            inv_std.push(istd);
            for b in 0..x.n() {
                let src = x.plane(b, c);
                let xh = x_hat.plane_mut(b, c);
                for (h, &v) in xh.iter_mut().zip(src) {
                    *h = (v - mean) * istd;
                }
                let (g, be) = (self.gamma[c], self.beta[c]);
                for (o, &h) in y.plane_mut(b, c).iter_mut().zip(x_hat.plane(b, c)) {
                    *o = g * h + be;
                }
            }
            let unbiased = if count > 1 {
                var * count_t / T::lit((count - 1) as f64)
            } else {
                var
            };
            let m = self.momentum;
            self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * mean;
            self.running_var[c] = (T::one() - m) * self.running_var[c] + m * unbiased;
        }
        Ok((y, BatchNormCache { x_hat, inv_std }))
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        ensure_dim("batchnorm_forward", "channels", self.channels(), x.c())?;
        let mut y = x.clone();
        for c in 0..x.c() {
            let scale = self.gamma[c] / (self.running_var[c] + self.eps).sqrt();
            let shift = self.beta[c] - self.running_mean[c] * scale;
            for b in 0..x.n() {
                for v in y.plane_mut(b, c) {
                    *v = *v * scale + shift;
                }
            }
        }
        Ok(y)
    }

    /// Returns `(grad_input, grad_gamma, grad_beta)` for a training-mode pass.
    pub fn backward(&self, grad_out: &Tensor4<T>, cache: &BatchNormCache<T>) -> Result<(Tensor4<T>, Vec<T>, Vec<T>)> {
        if grad_out.dims() != cache.x_hat.dims() {
            return Err(Error::StaleState("batchnorm cache does not match the upstream gradient".into()));
        }
        let count = T::lit((grad_out.n() * grad_out.plane_len()) as f64);
        let mut gx = grad_out.zeros_like();
        let mut ggamma = Vec::with_capacity(self.channels());
        let mut gbeta = Vec::with_capacity(self.channels());
        for c in 0..grad_out.c() {
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for b in 0..grad_out.n() {
                for (&g, &h) in grad_out.plane(b, c).iter().zip(cache.x_hat.plane(b, c)) {
                    sum_g += g;
                    sum_gx += g * h;
                }
            }
            ggamma.push(sum_gx);
            gbeta.push(sum_g);
            let k = self.gamma[c] * cache.inv_std[c] / count;
            for b in 0..grad_out.n() {
                let dst = gx.plane_mut(b, c);
                for ((d, &g), &h) in dst.iter_mut().zip(grad_out.plane(b, c)).zip(cache.x_hat.plane(b, c)) {
                    *d = k * (count * g - sum_g - h * sum_gx);
                }
            }
        }
        Ok((gx, ggamma, gbeta))
    }
}

/// 2×2 max pooling with stride 2; trailing odd rows/columns are dropped.
/// Returns the pooled tensor and, per output element, the flat input index
/// of the winner (first maximum in row-major scan order).
pub fn maxpool2x2_forward<T: Real>(x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<usize>)> {
    let (h, w) = (x.h(), x.w());
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!("maxpool needs planes of at least 2x2, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros(x.n(), x.c(), oh, ow);
    let mut arg = Vec::with_capacity(out.data().len());
    for b in 0..x.n() {
        for c in 0..x.c() {
            let base = x.index(b, c, 0, 0);
            let plane = x.plane(b, c);
            let dst = out.plane_mut(b, c);
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = (2 * y) * w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = (2 * y + dy) * w + 2 * xx + dx;
                        if plane[idx] > plane[best] {
                            best = idx;
                        }
                    }
                    dst[y * ow + xx] = plane[best];
                    arg.push(base + best);
                }
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool2x2_backward<T: Real>(grad_out: &Tensor4<T>, argmax: &[usize], input_dims: [usize; 4]) -> Result<Tensor4<T>> {
    ensure_dim("maxpool_backward", "routing table length", grad_out.data().len(), argmax.len())?;
    let mut gin = Tensor4::filled(input_dims, T::zero());
    let len = gin.data().len();
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        if idx >= len {
            return Err(Error::StaleState("maxpool routing index out of range".into()));
        }
        gin.data_mut()[idx] += g;
    }
    Ok(gin)
}

/// `y[n, o] = Σ_i W[o, i] · x[n, i] + b[o]` on the flattened `c·h·w`
/// features of each batch item. `weights` is `out × in`, row-major.
pub fn fully_connected_forward<T: Real>(
    x: &Tensor4<T>,
    weights: &[T],
    bias: Option<&[T]>,
    out_features: usize,
) -> Result<Tensor4<T>> {
    let in_features = x.c() * x.plane_len();
    ensure_dim("fully_connected_forward", "weight count", out_features * in_features, weights.len())?;
    let mut y = Tensor4::zeros(x.n(), out_features, 1, 1);
    let item = in_features;
    for b in 0..x.n() {
        let xs = &x.data()[b * item..(b + 1) * item];
        for o in 0..out_features {
            let row = &weights[o * item..(o + 1) * item];
            let mut acc: T = row.iter().zip(xs).map(|(&w, &v)| w * v).sum();
            if let Some(bias) = bias {
                acc += bias[o];
            }
            y.set(b, o, 0, 0, acc);
        }
    }
    Ok(y)
}

/// Returns `(grad_input, grad_weights)`; the bias gradient is
/// [`bias_grad`] of `grad_out`.
pub fn fully_connected_backward<T: Real>(
    x: &Tensor4<T>,
    weights: &[T],
    grad_out: &Tensor4<T>,
) -> Result<(Tensor4<T>, Vec<T>)> {
    let item = x.c() * x.plane_len();
    let out_features = grad_out.c();
    ensure_dim("fully_connected_backward", "weight count", out_features * item, weights.len())?;
    ensure_dim("fully_connected_backward", "grad batch", x.n(), grad_out.n())?;
    let mut gx = x.zeros_like();
    let mut gw = vec![T::zero(); weights.len()];
    for b in 0..x.n() {
        let xs = &x.data()[b * item..(b + 1) * item];
        for o in 0..out_features {
            let g = grad_out.get(b, o, 0, 0);
            let row = &weights[o * item..(o + 1) * item];
            let gx_item = &mut gx.data_mut()[b * item..(b + 1) * item];
            for (d, &w) in gx_item.iter_mut().zip(row) {
                *d += g * w;
            }
            for (d, &v) in gw[o * item..(o + 1) * item].iter_mut().zip(xs) {
                *d += g * v;
            }
        }
    }
    Ok((gx, gw))
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits (`n × classes × 1 × 1`).
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor4<T>, labels: &[usize]) -> Result<(T, Tensor4<T>)> {
    ensure_dim("softmax_cross_entropy", "batch", logits.n(), labels.len())?;
    let classes = logits.c() * logits.plane_len();
    let n = T::lit(logits.n() as f64);
    let mut grad = logits.zeros_like();
    let mut loss = T::zero();
    for (b, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::invalid(format!("label {label} out of range for {classes} classes")));
        }
        let row = &logits.data()[b * classes..(b + 1) * classes];
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_sum = sum.ln() + max;
        loss += log_sum - row[label];
        let g = &mut grad.data_mut()[b * classes..(b + 1) * classes];
        for (d, &v) in g.iter_mut().zip(row) {
            *d = (v - log_sum).exp() / n;
        }
        g[label] -= T::one() / n;
    }
    Ok((loss / n, grad))
}

/// Index of the largest logit per batch item (first on ties).
pub fn argmax_rows<T: Real>(logits: &Tensor4<T>) -> Vec<usize> {
    let classes = logits.c() * logits.plane_len();
    logits
        .data()
        .chunks(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}
