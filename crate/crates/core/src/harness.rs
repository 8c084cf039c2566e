//! Reports behind the command-line tool. Every report serializes to one
//! JSON object with stable field names.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{load_cifar, preprocess, rotated_eval_sets, stratified_subset, synthetic_glyphs, CifarVariant, LabeledImageSet, Split};
use crate::error::{Error, Result};
use crate::gradcheck::{check_tensor_grad, check_vec_grad, FD_STEP};
use crate::layers::standard::argmax_rows;
use crate::layers::{mac_count, orn8_reference, param_count, ring_forward, LayerKind, LayerSpec};
use crate::model::Model;
use crate::ring_geometry::RingWeights;
use crate::scalar::Real;
use crate::tensor::{global_avg_pool, rot90, FilterBank, Tensor4};
use crate::trainer::{load_checkpoint, save_checkpoint, train, DatasetKind, EpochMetrics, MetricsHeader, Precision, TrainConfig};

/// Tolerance of the f64 gradient checks.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
/// Tolerance of the f64 equivariance and invariance checks.
pub const INVARIANCE_TOLERANCE: f64 = 1e-9;
/// Smallest violation that counts as "not invariant" for plain convolution.
pub const VIOLATION_THRESHOLD: f64 = 1e-3;

/// A single random layer instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LayerProbe {
    pub kind: LayerKind,
    pub k: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Side of the square input planes.
    pub size: usize,
    pub batch: usize,
    pub seed: u64,
}

impl LayerProbe {
    pub fn new(kind: LayerKind, k: usize, seed: u64) -> Self {
        Self {
            kind,
            k,
            in_channels: 2,
            out_channels: 3,
            size: 7,
            batch: 2,
            seed,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        let (k, cin, cout) = (self.k, self.in_channels, self.out_channels);
        match self.kind {
            LayerKind::Conv => LayerSpec::conv(k, cin, cout),
            LayerKind::Rad => LayerSpec::rad(k, cin, cout),
            LayerKind::Rsdw => LayerSpec::rsdw(k, cin, cout, cout),
            LayerKind::Ring => LayerSpec::ring(k, cin, cout),
            LayerKind::Relu => LayerSpec::relu(),
            LayerKind::Batchnorm => LayerSpec::batchnorm(cin),
            LayerKind::Maxpool => LayerSpec::maxpool(),
            LayerKind::GlobalAvgPool => LayerSpec::global_avg_pool(),
            LayerKind::FullyConnected => LayerSpec::fully_connected(cin * self.size * self.size, cout),
        }
    }

    fn input_dims(&self) -> [usize; 4] {
        [self.batch, self.in_channels, self.size, self.size]
    }

    /// A one-layer model with Glorot weights and random biases, batchnorm
    /// scales and shifts, so that every gradient is exercised.
    fn model(&self, rng: &mut ChaCha8Rng) -> Result<Model<f64>> {
        let mut m = Model::new(&[self.spec()], (self.in_channels, self.size, self.size))?;
        m.init_glorot(rng);
        for p in m.params_mut().filter(|p| p.trainable) {
            if matches!(p.name, "bias" | "gamma" | "beta") {
                p.value.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            }
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradGroup {
    pub name: String,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub command: &'static str,
    pub probe: LayerProbe,
    pub zero_input: bool,
    pub groups: Vec<GradGroup>,
    pub max_error: f64,
    /// The layer has weights, and every weight gradient is exactly zero
    /// analytically and numerically, as happens at zero input.
    pub trivially_consistent: bool,
    pub pass: bool,
}

/// Finite-difference check of every gradient of one random layer, for the
/// loss `⟨L(x), r⟩` with a random `r`.
pub fn gradcheck(probe: &LayerProbe, zero_input: bool) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let mut model = probe.model(&mut rng)?;
    let x = if zero_input {
        Tensor4::zeros_like(&Tensor4::<f64>::random(probe.input_dims(), 1.0, &mut rng))
    } else {
        Tensor4::random(probe.input_dims(), 1.0, &mut rng)
    };
    let y = model.forward_train(&x)?;
    let r = Tensor4::random(y.dims(), 1.0, &mut rng);
    let gx = model.backward(&r)?;
    let snapshot = model.clone();
    let loss = |m: &Model<f64>, x: &Tensor4<f64>| m.clone().forward_train(x).expect("same shapes").dot(&r);

    let mut groups = vec![GradGroup {
        name: "input".into(),
        max_error: check_tensor_grad(&x, &gx, |x| loss(&snapshot, x), FD_STEP),
    }];
    let (mut has_weights, mut weights_zero) = (false, true);
    for (pi, p) in snapshot.layers()[0].params().iter().enumerate().filter(|(_, p)| p.trainable) {
        let err = check_vec_grad(
            &p.value,
            &p.grad,
            |v| {
                let mut m = snapshot.clone();
                m.layers_mut()[0].params_mut()[pi].value.copy_from_slice(v);
                loss(&m, &x)
            },
            FD_STEP,
        );
        if !matches!(p.name, "bias" | "beta") {
            has_weights = true;
            weights_zero &= err == 0.0 && p.grad.iter().all(|&v| v == 0.0);
        }
        groups.push(GradGroup {
            name: p.name.to_string(),
            max_error: err,
        });
    }
    let max_error = groups.iter().map(|g| g.max_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        command: "gradcheck",
        probe: *probe,
        zero_input,
        trivially_consistent: has_weights && weights_zero,
        pass: max_error < GRADCHECK_TOLERANCE,
        groups,
        max_error,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub command: &'static str,
    pub probe: LayerProbe,
    pub instances: usize,
    /// `max |L(rot90(x, q)) − rot90(L(x), q)|` over instances and `q = 1..3`.
    pub equivariance_error: f64,
    /// The same after global average pooling.
    pub pooled_error: f64,
    pub expect_invariant: bool,
    /// For RING 3×3: forward output equals the full-filter 45° rotation
    /// reference bit for bit.
    pub oracle_bit_exact: Option<bool>,
    pub pass: bool,
}

/// Rotation checks of a filter layer. Equivariant kinds pass when both
/// errors stay below [`INVARIANCE_TOLERANCE`]; plain convolution passes when
/// the check detects a violation above [`VIOLATION_THRESHOLD`].
pub fn invariance(probe: &LayerProbe, instances: usize) -> Result<InvarianceReport> {
    if !probe.kind.is_spatial_filter() {
        return Err(Error::invalid(format!("invariance checks filter layers, not {}", probe.kind)));
    }
    if probe.spec().stride != 1 {
        return Err(Error::invalid("invariance checks need stride 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let (mut eq, mut pooled) = (0.0f64, 0.0f64);
    let check_oracle = probe.kind == LayerKind::Ring && probe.k == 3;
    let mut oracle_ok = true;
    for _ in 0..instances.max(1) {
        let model = probe.model(&mut rng)?;
        let x = Tensor4::random(probe.input_dims(), 1.0, &mut rng);
        let y = model.forward_eval(&x)?;
        for q in 1..4 {
            let yr = model.forward_eval(&rot90(&x, q))?;
            eq = eq.max(yr.max_abs_diff(&rot90(&y, q)));
            pooled = pooled.max(global_avg_pool(&yr).max_abs_diff(&global_avg_pool(&y)));
        }
        if check_oracle {
            let layer = &model.layers()[0];
            let spec = layer.spec();
            let f = FilterBank::from_vec(spec.out_channels, spec.in_channels, 3, layer.params()[0].value.clone())?;
            let bias = layer.params().get(1).map(|p| p.value.as_slice());
            let (ours, _) = ring_forward(&x, &RingWeights::new(f.clone())?, bias, 1, spec.padding())?;
            let want = orn8_reference(&x, &f, bias, spec.padding())?;
            oracle_ok &= ours.data().iter().zip(want.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        }
    }
    let expect_invariant = probe.kind.is_rotation_equivariant();
    let pass = if expect_invariant {
        eq < INVARIANCE_TOLERANCE && pooled < INVARIANCE_TOLERANCE && oracle_ok
    } else {
        eq > VIOLATION_THRESHOLD
    };
    Ok(InvarianceReport {
        command: "invariance",
        probe: *probe,
        instances: instances.max(1),
        equivariance_error: eq,
        pooled_error: pooled,
        expect_invariant,
        oracle_bit_exact: check_oracle.then_some(oracle_ok),
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CountRow {
    pub layer: usize,
    pub kind: LayerKind,
    pub k: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub params: usize,
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CountsReport {
    pub command: &'static str,
    pub input: (usize, usize, usize),
    pub rows: Vec<CountRow>,
    pub total_params: usize,
    pub total_macs: u64,
}

/// Per-layer weight and MAC counts; MACs use each layer's output surface.
pub fn counts(specs: &[LayerSpec], input: (usize, usize, usize)) -> Result<CountsReport> {
    let mut shape = input;
    let mut rows = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        shape = spec.output_shape(shape)?;
        rows.push(CountRow {
            layer: i,
            kind: spec.kind,
            k: spec.k,
            in_channels: spec.in_channels,
            out_channels: shape.0,
            out_h: shape.1,
            out_w: shape.2,
            params: param_count(spec)?,
            macs: mac_count(spec, shape.1, shape.2)?,
        });
    }
    Ok(CountsReport {
        command: "counts",
        input,
        total_params: rows.iter().map(|r| r.params).sum(),
        total_macs: rows.iter().map(|r| r.macs).sum(),
        rows,
    })
}

impl CountsReport {
    /// Fixed-width text table with a totals row.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:>5}  {:<16} {:>3} {:>6} {:>6} {:>9} {:>12} {:>16}\n",
            "layer", "kind", "k", "in", "out", "surface", "params", "macs"
        );
        for r in &self.rows {
            s += &format!(
                "{:>5}  {:<16} {:>3} {:>6} {:>6} {:>9} {:>12} {:>16}\n",
                r.layer,
                r.kind.name(),
                r.k,
                r.in_channels,
                r.out_channels,
                format!("{}x{}", r.out_h, r.out_w),
                r.params,
                r.macs
            );
        }
        s += &format!("{:>5}  {:<16} {:>3} {:>6} {:>6} {:>9} {:>12} {:>16}\n", "", "total", "", "", "", "", self.total_params, self.total_macs);
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub command: &'static str,
    pub model_id: String,
    /// The filter kind shared by every filter layer, if there is one.
    pub layer_kind: Option<LayerKind>,
    pub seed: u64,
    pub samples: usize,
    /// Accuracy on the test set rotated by 0°, 90°, 180° and 270°.
    pub accuracies: [f64; 4],
    /// Mean `|logit − logit at 0°|` over all logits, per rotation.
    pub mean_logit_distance: [f64; 4],
    /// Fraction of items whose predicted label equals the 0° prediction.
    pub label_agreement: [f64; 4],
    pub error: Option<String>,
}

impl EvalReport {
    pub fn failed(model_id: &str, seed: u64, err: &Error) -> Self {
        Self {
            command: "eval_rotations",
            model_id: model_id.to_string(),
            layer_kind: None,
            seed,
            samples: 0,
            accuracies: [0.0; 4],
            mean_logit_distance: [0.0; 4],
            label_agreement: [0.0; 4],
            error: Some(err.to_string()),
        }
    }
}

fn logits_in_batches<T: Real>(model: &Model<T>, x: &Tensor4<T>, batch: usize) -> Result<Tensor4<T>> {
    let mut parts = Vec::new();
    let mut start = 0;
    while start < x.n() {
        let len = batch.max(1).min(x.n() - start);
        parts.extend(model.forward_eval(&x.batch_slice(start, len)?)?.into_vec());
        start += len;
    }
    let (c, h, w) = model.output_shape()?;
    Tensor4::from_vec([x.n(), c, h, w], parts)
}

/// Runs `model` on the four rotations of `set`.
pub fn eval_rotations<T: Real>(model: &Model<T>, set: &LabeledImageSet, model_id: &str, seed: u64, batch: usize) -> Result<EvalReport> {
    if set.is_empty() {
        return Err(Error::invalid("eval_rotations: empty test set"));
    }
    let sets = rotated_eval_sets(set)?;
    let mut logits = Vec::with_capacity(4);
    for s in &sets {
        logits.push(logits_in_batches(model, &preprocess::<T>(s)?, batch)?);
    }
    let preds: Vec<Vec<usize>> = logits.iter().map(argmax_rows).collect();
    let n = set.len() as f64;
    let acc = |p: &[usize]| p.iter().zip(&set.labels).filter(|(a, b)| a == b).count() as f64 / n;
    let agree = |p: &[usize]| p.iter().zip(&preds[0]).filter(|(a, b)| a == b).count() as f64 / n;
    let dist = |l: &Tensor4<T>| {
        l.data().iter().zip(logits[0].data()).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum::<f64>() / l.data().len() as f64
    };
    Ok(EvalReport {
        command: "eval_rotations",
        model_id: model_id.to_string(),
        layer_kind: model.filter_kind(),
        seed,
        samples: set.len(),
        accuracies: std::array::from_fn(|q| acc(&preds[q])),
        mean_logit_distance: std::array::from_fn(|q| dist(&logits[q])),
        label_agreement: std::array::from_fn(|q| agree(&preds[q])),
        error: None,
    })
}

/// The raw (unpreprocessed) split a config trains or evaluates on.
/// `data_dir` overrides the config's directory.
pub fn load_split(cfg: &TrainConfig, split: Split, data_dir: Option<&Path>) -> Result<LabeledImageSet> {
    let subset = match split {
        Split::Train => cfg.subset,
        Split::Test => cfg.test_subset,
    };
    let set = match cfg.dataset {
        DatasetKind::Synthetic => {
            let (n, seed) = match split {
                Split::Train => (cfg.synthetic_train, cfg.seed),
                Split::Test => (cfg.synthetic_test, cfg.seed ^ 0x5EED_7E57),
            };
            synthetic_glyphs(n, cfg.image_size, seed)
        }
        DatasetKind::Cifar10 | DatasetKind::Cifar100 => {
            let variant = if cfg.dataset == DatasetKind::Cifar10 { CifarVariant::Cifar10 } else { CifarVariant::Cifar100 };
            let dir = data_dir
                .map(Path::to_path_buf)
                .or_else(|| cfg.data_dir.clone())
                .ok_or_else(|| Error::config("data_dir", "CIFAR datasets need a data directory"))?;
            load_cifar(&dir, variant, split)?
        }
    };
    match subset {
        Some(n) if n < set.len() => stratified_subset(&set, n, cfg.seed),
        _ => Ok(set),
    }
}

/// Files written by [`train_to_dir`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub epochs: Vec<EpochMetrics>,
}

pub const CHECKPOINT_FILE: &str = "model.rcv";
pub const METRICS_FILE: &str = "metrics.jsonl";

/// Trains per `cfg` and writes `model.rcv` and `metrics.jsonl` into `out`.
/// The metrics file holds a header record and then one record per epoch,
/// flushed as each epoch ends, so it survives a divergence.
pub fn train_to_dir(cfg: &TrainConfig, data_dir: Option<&Path>, out: &Path) -> Result<TrainOutput> {
    cfg.validate()?;
    let train_set = load_split(cfg, Split::Train, data_dir)?;
    let test_set = load_split(cfg, Split::Test, data_dir)?;
    fs::create_dir_all(out)?;
    match cfg.precision {
        Precision::F32 => train_typed::<f32>(cfg, &train_set, &test_set, out),
        Precision::F64 => train_typed::<f64>(cfg, &train_set, &test_set, out),
    }
}

fn write_record(w: &mut impl Write, record: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, record).map_err(|e| Error::Io(e.into()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn train_typed<T: Real>(cfg: &TrainConfig, train_set: &LabeledImageSet, test_set: &LabeledImageSet, out: &Path) -> Result<TrainOutput> {
    let x = preprocess::<T>(train_set)?;
    let tx = preprocess::<T>(test_set)?;
    let metrics_path = out.join(METRICS_FILE);
    let mut metrics = BufWriter::new(File::create(&metrics_path)?);
    let header = MetricsHeader::new(cfg, &Model::<T>::new(&cfg.model, cfg.input_shape())?, train_set.len())?;
    write_record(&mut metrics, &header)?;
    let (model, epochs) = train(cfg, &x, &train_set.labels, Some((&tx, &test_set.labels)), |_, m| {
        write_record(&mut metrics, m)?;
        Ok(ControlFlow::Continue(()))
    })?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    save_checkpoint(&model, &checkpoint)?;
    Ok(TrainOutput {
        checkpoint,
        metrics: metrics_path,
        epochs,
    })
}

/// Loads `checkpoint` into the model of `cfg` and evaluates it on the four
/// rotations of the test split.
pub fn eval_checkpoint(cfg: &TrainConfig, checkpoint: &Path, data_dir: Option<&Path>, model_id: &str) -> Result<EvalReport> {
    cfg.validate()?;
    let test_set = load_split(cfg, Split::Test, data_dir)?;
    let batch = cfg.batch_size;
    match cfg.precision {
        Precision::F32 => {
            let mut m = Model::<f32>::new(&cfg.model, cfg.input_shape())?;
            load_checkpoint(&mut m, checkpoint)?;
            eval_rotations(&m, &test_set, model_id, cfg.seed, batch)
        }
        Precision::F64 => {
            let mut m = Model::<f64>::new(&cfg.model, cfg.input_shape())?;
            load_checkpoint(&mut m, checkpoint)?;
            eval_rotations(&m, &test_set, model_id, cfg.seed, batch)
        }
    }
}
