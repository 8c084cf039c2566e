use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{ensure_dim, Error, Result};
use crate::layers::standard::{argmax_rows, softmax_cross_entropy};
use crate::layers::{param_count, LayerSpec};
use crate::model::Model;
use crate::scalar::Real;
use crate::tensor::Tensor4;

use super::config::TrainConfig;
use super::optim::{OptimConfig, OptimState};

/// First record of a metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsHeader {
    pub record: &'static str,
    /// Sum of the per-layer weight counts, biases excluded.
    pub params: usize,
    pub layer_params: Vec<usize>,
    /// Every stored trainable value, biases included.
    pub trainable_values: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_size: usize,
    pub optimizer: OptimConfig,
    pub layers: Vec<LayerSpec>,
}

impl MetricsHeader {
    pub fn new<T: Real>(config: &TrainConfig, model: &Model<T>, train_size: usize) -> Result<Self> {
        let layer_params = config.model.iter().map(param_count).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            record: "header",
            params: layer_params.iter().sum(),
            layer_params,
            trainable_values: model.trainable_param_count(),
            seed: config.seed,
            epochs: config.epochs,
            batch_size: config.batch_size,
            train_size,
            optimizer: config.optimizer,
            layers: config.model.clone(),
        })
    }
}

/// One record per finished epoch. `epoch` counts from 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Accuracy of the training-mode forward passes during the epoch.
    pub train_acc: f64,
    pub eval_acc: Option<f64>,
}

/// Learning rate for 0-based `epoch`.
pub fn lr_at(config: &TrainConfig, epoch: usize) -> f64 {
    let mult = config
        .lr_schedule
        .iter()
        .take_while(|&&(e, _)| e <= epoch)
        .last()
        .map_or(1.0, |&(_, m)| m);
    config.optimizer.lr() * mult
}

/// Fraction of `labels` predicted by `model` in inference mode.
pub fn evaluate_accuracy<T: Real>(model: &Model<T>, x: &Tensor4<T>, labels: &[usize], batch: usize) -> Result<f64> {
    ensure_dim("evaluate_accuracy", "labels", x.n(), labels.len())?;
    let batch = batch.max(1);
    let mut correct = 0usize;
    let mut start = 0;
    while start < x.n() {
        let len = batch.min(x.n() - start);
        let logits = model.forward_eval(&x.batch_slice(start, len)?)?;
        correct += argmax_rows(&logits).iter().zip(&labels[start..start + len]).filter(|(p, l)| p == l).count();
        start += len;
    }
    Ok(correct as f64 / x.n().max(1) as f64)
}

/// Trains a freshly initialized model.
///
/// One ChaCha8 stream seeded from `config.seed` draws the initial weights
/// and then one permutation of the training set per epoch, so equal configs
/// and data give bit-identical results. `on_epoch` sees each record as it is
/// produced and may end training early with `ControlFlow::Break`.
pub fn train<T: Real>(
    config: &TrainConfig,
    train_x: &Tensor4<T>,
    train_y: &[usize],
    eval: Option<(&Tensor4<T>, &[usize])>,
    mut on_epoch: impl FnMut(&Model<T>, &EpochMetrics) -> Result<ControlFlow<()>>,
) -> Result<(Model<T>, Vec<EpochMetrics>)> {
    config.validate()?;
    ensure_dim("train", "labels", train_x.n(), train_y.len())?;
    if train_x.n() == 0 {
        return Err(Error::invalid("train: empty training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::new(&config.model, config.input_shape())?;
    model.init_glorot(&mut rng);
    let mut optim = OptimState::new(config.optimizer, &model)?;
    let mut order: Vec<usize> = (0..train_x.n()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            let x = train_x.gather(idx)?;
            let labels: Vec<usize> = idx.iter().map(|&i| train_y[i]).collect();
            let logits = model.forward_train(&x)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch: epoch + 1, step });
            }
            loss_sum += loss.as_f64() * idx.len() as f64;
            correct += argmax_rows(&logits).iter().zip(&labels).filter(|(p, l)| p == l).count();
            model.backward(&grad)?;
            optim.apply(&mut model, lr)?;
        }
        let eval_acc = match eval {
            Some((x, y)) => Some(evaluate_accuracy(&model, x, y, config.batch_size)?),
            None => None,
        };
        let record = EpochMetrics {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / train_x.n() as f64,
            train_acc: correct as f64 / train_x.n() as f64,
            eval_acc,
        };
        let flow = on_epoch(&model, &record)?;
        history.push(record);
        if flow.is_break() {
            break;
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{preprocess, synthetic_glyphs, SYNTHETIC_CLASSES};
    use crate::layers::LayerKind;
    use crate::model::small_cnn;
    use crate::trainer::config::DatasetKind;

    fn setup(kind: LayerKind, epochs: usize) -> (TrainConfig, Tensor4<f64>, Vec<usize>) {
        let specs = small_cnn(kind, 3, 3, &[4], SYNTHETIC_CLASSES, true).unwrap();
        let mut cfg = TrainConfig::new(specs, DatasetKind::Synthetic);
        cfg.image_size = 8;
        cfg.epochs = epochs;
        cfg.batch_size = 8;
        cfg.seed = 5;
        let set = synthetic_glyphs(24, 8, 1);
        (cfg, preprocess(&set).unwrap(), set.labels)
    }

    #[test]
    fn schedule_multiplies_the_base_rate() {
        let (mut cfg, _, _) = setup(LayerKind::Conv, 1);
        cfg.lr_schedule = vec![(2, 0.1), (4, 0.01)];
        let lrs: Vec<f64> = (0..6).map(|e| lr_at(&cfg, e)).collect();
        assert_eq!(lrs, vec![1e-3, 1e-3, 1e-3 * 0.1, 1e-3 * 0.1, 1e-3 * 0.01, 1e-3 * 0.01]);
    }

    #[test]
    fn zero_lr_keeps_the_initialization() {
        let (mut cfg, x, y) = setup(LayerKind::Ring, 1);
        cfg.optimizer = OptimConfig::Adam {
            lr: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-5,
        };
        let (trained, _) = train(&cfg, &x, &y, None, |_, _| Ok(ControlFlow::Continue(()))).unwrap();
        let mut init = Model::<f64>::new(&cfg.model, cfg.input_shape()).unwrap();
        init.init_glorot(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        for (a, b) in trained.params().zip(init.params()).filter(|(a, _)| a.trainable) {
            assert_eq!(a.value, b.value, "{}", a.name);
        }
    }

    #[test]
    fn same_seed_same_metrics_and_weights() {
        let (cfg, x, y) = setup(LayerKind::Rsdw, 2);
        let (a, ma) = train(&cfg, &x, &y, Some((&x, &y)), |_, _| Ok(ControlFlow::Continue(()))).unwrap();
        let (b, mb) = train(&cfg, &x, &y, Some((&x, &y)), |_, _| Ok(ControlFlow::Continue(()))).unwrap();
        assert_eq!(ma, mb);
        for (p, q) in a.params().zip(b.params()) {
            assert_eq!(p.value, q.value);
        }
        assert_eq!(ma.len(), 2);
        assert!(ma.iter().all(|m| m.eval_acc.is_some() && m.train_loss.is_finite()));
    }

    #[test]
    fn non_finite_loss_is_a_divergence() {
        let (cfg, mut x, y) = setup(LayerKind::Conv, 1);
        x.data_mut()[0] = f64::NAN;
        assert!(matches!(train(&cfg, &x, &y, None, |_, _| Ok(ControlFlow::Continue(()))), Err(Error::Divergence { epoch: 1, .. })));
    }

    #[test]
    fn loss_decreases_on_a_tiny_set() {
        let (mut cfg, x, y) = setup(LayerKind::Rad, 15);
        cfg.optimizer = OptimConfig::Adam {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let (_, m) = train(&cfg, &x, &y, None, |_, _| Ok(ControlFlow::Continue(()))).unwrap();
        assert!(m.last().unwrap().train_loss < m[0].train_loss);
    }

    #[test]
    fn callback_can_stop_early() {
        let (cfg, x, y) = setup(LayerKind::Conv, 5);
        let (_, m) = train(&cfg, &x, &y, None, |_, r| Ok(if r.epoch == 2 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })).unwrap();
        assert_eq!(m.len(), 2);
    }
}
