use serde::Serialize;

use crate::error::{ensure_dim, Error, Result};
use crate::model::Model;
use crate::scalar::Real;

/// Update rule and its hyperparameters. Weight decay is coupled: it is added
/// to the gradient before the moments are updated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimConfig {
    SgdMomentum { lr: f64, momentum: f64, weight_decay: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64 },
}

impl OptimConfig {
    /// The CIFAR-10 recipe: lr 1e-3, betas 0.9/0.999, weight decay 5e-5.
    pub fn adam_default() -> Self {
        OptimConfig::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-5,
        }
    }

    /// The CIFAR-100 recipe: lr 0.1, momentum 0.9, weight decay 5e-4.
    pub fn sgd_default() -> Self {
        OptimConfig::SgdMomentum {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimConfig::SgdMomentum { lr, .. } | OptimConfig::Adam { lr, .. } => lr,
        }
    }

    pub fn weight_decay(&self) -> f64 {
        match *self {
            OptimConfig::SgdMomentum { weight_decay, .. } | OptimConfig::Adam { weight_decay, .. } => weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(key, msg));
        if !(self.lr() >= 0.0 && self.lr().is_finite()) {
            return bad("lr", "must be finite and non-negative");
        }
        if !(self.weight_decay() >= 0.0 && self.weight_decay().is_finite()) {
            return bad("weight_decay", "must be finite and non-negative");
        }
        match *self {
            OptimConfig::SgdMomentum { momentum, .. } if !(0.0..1.0).contains(&momentum) => bad("momentum", "must lie in [0, 1)"),
            OptimConfig::Adam { beta1, .. } if !(0.0..1.0).contains(&beta1) => bad("beta1", "must lie in [0, 1)"),
            OptimConfig::Adam { beta2, .. } if !(0.0..1.0).contains(&beta2) => bad("beta2", "must lie in [0, 1)"),
            OptimConfig::Adam { eps, .. } if eps.is_nan() || eps <= 0.0 => bad("eps", "must be positive"),
            _ => Ok(()),
        }
    }
}

/// SGD with heavy-ball momentum: `v ← µv + (g + λp)`, `p ← p − lr·v`.
pub fn sgd_step<T: Real>(param: &mut [T], grad: &[T], velocity: &mut [T], lr: f64, momentum: f64, weight_decay: f64) -> Result<()> {
    ensure_dim("sgd_step", "gradient length", param.len(), grad.len())?;
    ensure_dim("sgd_step", "velocity length", param.len(), velocity.len())?;
    let (lr, mu, wd) = (T::lit(lr), T::lit(momentum), T::lit(weight_decay));
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = mu * *v + g + wd * *p;
        *p -= lr * *v;
    }
    Ok(())
}

/// One bias-corrected ADAM update; `step` is the 1-based step number.
#[allow(clippy::too_many_arguments)]
pub fn adam_step<T: Real>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    lr: f64,
    (beta1, beta2, eps): (f64, f64, f64),
    weight_decay: f64,
) -> Result<()> {
    ensure_dim("adam_step", "gradient length", param.len(), grad.len())?;
    ensure_dim("adam_step", "first moment length", param.len(), m.len())?;
    ensure_dim("adam_step", "second moment length", param.len(), v.len())?;
    if step == 0 {
        return Err(Error::invalid("adam_step: step numbers start at 1"));
    }
    let c1 = 1.0 - beta1.powi(step.min(i32::MAX as u64) as i32);
    let c2 = 1.0 - beta2.powi(step.min(i32::MAX as u64) as i32);
    let (b1, b2, wd) = (T::lit(beta1), T::lit(beta2), T::lit(weight_decay));
    let (one, lr, eps, c1, c2) = (T::one(), T::lit(lr), T::lit(eps), T::lit(c1), T::lit(c2));
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        let g = g + wd * *p;
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
    Ok(())
}

/// Moment buffers for every trainable parameter of a model, in
/// [`Model::params`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub config: OptimConfig,
    pub step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> OptimState<T> {
    pub fn new(config: OptimConfig, model: &Model<T>) -> Result<Self> {
        config.validate()?;
        let first: Vec<Vec<T>> = model.params().filter(|p| p.trainable).map(|p| vec![T::zero(); p.value.len()]).collect();
        let second = match config {
            OptimConfig::Adam { .. } => first.clone(),
            OptimConfig::SgdMomentum { .. } => Vec::new(),
        };
        Ok(Self {
            config,
            step: 0,
            first,
            second,
        })
    }

    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.second
    }

    /// Applies one update with learning rate `lr` to every trainable
    /// parameter from its stored gradient.
    ///
    /// A zero learning rate is a no-op that leaves the moments and the step
    /// counter untouched, so frozen runs keep the optimizer at its initial
    /// state.
    pub fn apply(&mut self, model: &mut Model<T>, lr: f64) -> Result<()> {
        if lr == 0.0 {
            return Ok(());
        }
        self.step += 1;
        let trainable = model.params_mut().filter(|p| p.trainable);
        for (i, p) in trainable.enumerate() {
            let m = self
                .first
                .get_mut(i)
                .ok_or_else(|| Error::invalid("optimizer state has fewer buffers than the model has parameters"))?;
            match self.config {
                OptimConfig::SgdMomentum { momentum, weight_decay, .. } => sgd_step(&mut p.value, &p.grad, m, lr, momentum, weight_decay)?,
                OptimConfig::Adam {
                    beta1,
                    beta2,
                    eps,
                    weight_decay,
                    ..
                } => adam_step(&mut p.value, &p.grad, m, &mut self.second[i], self.step, lr, (beta1, beta2, eps), weight_decay)?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_and_decay_leave_params_unchanged() {
        let mut p = vec![1.0f64, -2.0, 0.5];
        let mut v = vec![0.0; 3];
        sgd_step(&mut p, &[0.0; 3], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        let (mut m, mut s) = (vec![0.0; 3], vec![0.0; 3]);
        adam_step(&mut p, &[0.0; 3], &mut m, &mut s, 1, 1e-3, (0.9, 0.999, 1e-8), 0.0).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn single_scalar_sgd() {
        let mut p = [1.0f64];
        sgd_step(&mut p, &[1.0], &mut [0.0], 0.1, 0.0, 0.0).unwrap();
        assert_eq!(p[0], 0.9);
    }

    #[test]
    fn sgd_momentum_accumulates_velocity() {
        let (mut p, mut v) = ([0.0f64], [0.0]);
        sgd_step(&mut p, &[1.0], &mut v, 1.0, 0.9, 0.0).unwrap();
        sgd_step(&mut p, &[1.0], &mut v, 1.0, 0.9, 0.0).unwrap();
        assert!((v[0] - 1.9).abs() < 1e-15);
        assert!((p[0] + 2.9).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_about_lr() {
        // m̂ = 1 and v̂ = 1 after bias correction, so the step is lr / (1 + eps).
        let mut p = [1.0f64];
        adam_step(&mut p, &[1.0], &mut [0.0], &mut [0.0], 1, 1e-3, (0.9, 0.999, 1e-8), 0.0).unwrap();
        assert!((1.0 - p[0] - 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_is_coupled() {
        let mut p = [2.0f64];
        sgd_step(&mut p, &[0.0], &mut [0.0], 0.5, 0.0, 0.1).unwrap();
        assert!((p[0] - (2.0 - 0.5 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(sgd_step(&mut [1.0f64, 2.0], &[1.0], &mut [0.0, 0.0], 0.1, 0.0, 0.0).is_err());
        assert!(adam_step(&mut [1.0f64], &[1.0], &mut [0.0, 0.0], &mut [0.0], 1, 0.1, (0.9, 0.999, 1e-8), 0.0).is_err());
    }

    #[test]
    fn invalid_hyperparameters_name_the_key() {
        let cfg = OptimConfig::SgdMomentum {
            lr: 0.1,
            momentum: 1.5,
            weight_decay: 0.0,
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("momentum"));
    }
}
