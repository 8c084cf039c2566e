//! Flat `key = value` run configuration.
//!
//! ```text
//! # CIFAR-10, RING 5x5
//! dataset = cifar10
//! epochs = 30
//! optimizer = adam
//! lr = 0.001
//! lr_schedule = 50:0.1, 100:0.01
//! layer.0.kind = ring
//! layer.0.k = 5
//! layer.0.out = 32
//! layer.1.kind = relu
//! ```
//!
//! Layer input widths are inferred from the previous layer when `in` is
//! omitted; a trailing `fully_connected` without `out` gets one output per
//! class. Unknown keys, repeated keys and gaps in the layer indices are
//! errors naming the key.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::data::SYNTHETIC_CLASSES;
use crate::error::{Error, Result};
use crate::layers::{LayerKind, LayerSpec};

use super::optim::OptimConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    /// Generated glyph images; see [`crate::data::synthetic_glyphs`].
    Synthetic,
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cifar10" => Ok(DatasetKind::Cifar10),
            "cifar100" => Ok(DatasetKind::Cifar100),
            "synthetic" => Ok(DatasetKind::Synthetic),
            _ => Err(format!("unknown dataset `{s}` (cifar10, cifar100, synthetic)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(format!("unknown precision `{s}` (f32, f64)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimConfig,
    /// `(epoch, multiplier)`: from `epoch` on (0-based) the learning rate is
    /// the base rate times `multiplier`. Epochs strictly ascending.
    pub lr_schedule: Vec<(usize, f64)>,
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    /// Class-stratified training subset size.
    pub subset: Option<usize>,
    /// Class-stratified test subset size.
    pub test_subset: Option<usize>,
    /// Image side of the synthetic dataset.
    pub image_size: usize,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub precision: Precision,
    pub model: Vec<LayerSpec>,
}

impl TrainConfig {
    /// Defaults of the CIFAR-10 recipe around `model`.
    pub fn new(model: Vec<LayerSpec>, dataset: DatasetKind) -> Self {
        Self {
            epochs: 1,
            batch_size: 50,
            seed: 0,
            optimizer: OptimConfig::adam_default(),
            lr_schedule: Vec::new(),
            dataset,
            data_dir: None,
            subset: None,
            test_subset: None,
            image_size: 16,
            synthetic_train: 256,
            synthetic_test: 256,
            precision: Precision::F32,
            model,
        }
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        match self.dataset {
            DatasetKind::Cifar10 | DatasetKind::Cifar100 => (3, 32, 32),
            DatasetKind::Synthetic => (3, self.image_size, self.image_size),
        }
    }

    pub fn classes(&self) -> usize {
        match self.dataset {
            DatasetKind::Cifar10 => 10,
            DatasetKind::Cifar100 => 100,
            DatasetKind::Synthetic => SYNTHETIC_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.lr_schedule.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::config("lr_schedule", "epochs must be strictly ascending"));
        }
        if self.lr_schedule.iter().any(|&(_, m)| !(m >= 0.0 && m.is_finite())) {
            return Err(Error::config("lr_schedule", "multipliers must be finite and non-negative"));
        }
        if self.subset == Some(0) {
            return Err(Error::config("subset", "must be at least 1"));
        }
        if self.dataset == DatasetKind::Synthetic && self.image_size < 4 {
            return Err(Error::config("image_size", "must be at least 4"));
        }
        self.optimizer.validate()?;
        if self.model.is_empty() {
            return Err(Error::config("layer.0.kind", "the model has no layers"));
        }
        let mut shape = self.input_shape();
        for (i, spec) in self.model.iter().enumerate() {
            shape = spec
                .output_shape(shape)
                .map_err(|e| Error::config(format!("layer.{i}"), e.to_string()))?;
        }
        if shape != (self.classes(), 1, 1) {
            return Err(Error::config(
                format!("layer.{}", self.model.len() - 1),
                format!("model output is {shape:?}, expected ({}, 1, 1) class scores", self.classes()),
            ));
        }
        Ok(())
    }

    /// Replaces global average pooling by flattening: the fully connected
    /// layer after the pool then sees every spatial position. This is the
    /// head used for `--no-global-pool`.
    pub fn drop_global_pool(&mut self) -> Result<()> {
        let Some(idx) = self.model.iter().position(|s| s.kind == LayerKind::GlobalAvgPool) else {
            return Err(Error::config("layer", "the model has no global_avg_pool layer to remove"));
        };
        self.model.remove(idx);
        let mut shape = self.input_shape();
        for (i, spec) in self.model.iter_mut().enumerate() {
            if i >= idx && spec.kind == LayerKind::FullyConnected {
                spec.in_channels = shape.0 * shape.1 * shape.2;
            }
            shape = spec
                .output_shape(shape)
                .map_err(|e| Error::config(format!("layer.{i}"), e.to_string()))?;
        }
        Ok(())
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::config(key, format!("invalid value `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("invalid boolean `{value}`"))),
    }
}

fn parse_schedule(value: &str) -> Result<Vec<(usize, f64)>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (e, m) = item
                .split_once(':')
                .ok_or_else(|| Error::config("lr_schedule", format!("entry `{item}` is not epoch:multiplier")))?;
            Ok((parse("lr_schedule", e.trim())?, parse("lr_schedule", m.trim())?))
        })
        .collect()
}

#[derive(Default)]
struct RawLayer {
    kind: Option<LayerKind>,
    k: Option<usize>,
    input: Option<usize>,
    out: Option<usize>,
    out1: Option<usize>,
    stride: Option<usize>,
    padding: Option<usize>,
    bias: Option<bool>,
}

pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let mut entries = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", lineno + 1), format!("expected key = value, got `{line}`")))?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if entries.insert(key.clone(), value).is_some() {
            return Err(Error::config(key, "given more than once"));
        }
    }

    let mut cfg = TrainConfig::new(Vec::new(), DatasetKind::Cifar10);
    let mut optimizer = "adam".to_string();
    let mut hyper: BTreeMap<&str, f64> = BTreeMap::new();
    let mut layers: BTreeMap<usize, RawLayer> = BTreeMap::new();

    for (key, value) in &entries {
        let (k, v) = (key.as_str(), value.as_str());
        match k {
            "epochs" => cfg.epochs = parse(k, v)?,
            "batch_size" => cfg.batch_size = parse(k, v)?,
            "seed" => cfg.seed = parse(k, v)?,
            "optimizer" => optimizer = v.to_string(),
            "lr" | "weight_decay" | "momentum" | "beta1" | "beta2" | "eps" => {
                let name: &'static str = match k {
                    "lr" => "lr",
                    "weight_decay" => "weight_decay",
                    "momentum" => "momentum",
                    "beta1" => "beta1",
                    "beta2" => "beta2",
                    _ => "eps",
                };
                hyper.insert(name, parse(k, v)?);
            }
            "lr_schedule" => cfg.lr_schedule = parse_schedule(v)?,
            "dataset" => cfg.dataset = parse(k, v)?,
            "data_dir" => cfg.data_dir = Some(PathBuf::from(v)),
            "subset" => cfg.subset = Some(parse(k, v)?),
            "test_subset" => cfg.test_subset = Some(parse(k, v)?),
            "image_size" => cfg.image_size = parse(k, v)?,
            "synthetic_train" => cfg.synthetic_train = parse(k, v)?,
            "synthetic_test" => cfg.synthetic_test = parse(k, v)?,
            "precision" => cfg.precision = parse(k, v)?,
            _ => {
                let mut parts = k.splitn(3, '.');
                let (Some("layer"), Some(idx), Some(field)) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(Error::config(k, "unknown key"));
                };
                let idx: usize = idx.parse().map_err(|_| Error::config(k, "layer index is not a number"))?;
                let raw = layers.entry(idx).or_default();
                match field {
                    "kind" => raw.kind = Some(parse(k, v)?),
                    "k" => raw.k = Some(parse(k, v)?),
                    "in" => raw.input = Some(parse(k, v)?),
                    "out" => raw.out = Some(parse(k, v)?),
                    "out1" => raw.out1 = Some(parse(k, v)?),
                    "stride" => raw.stride = Some(parse(k, v)?),
                    "padding" => raw.padding = Some(parse(k, v)?),
                    "bias" => raw.bias = Some(parse_bool(k, v)?),
                    _ => return Err(Error::config(k, "unknown key")),
                }
            }
        }
    }

    let get = |name: &str, default: f64| hyper.get(name).copied().unwrap_or(default);
    cfg.optimizer = match optimizer.as_str() {
        "adam" => {
            if hyper.contains_key("momentum") {
                return Err(Error::config("momentum", "only applies to optimizer = sgd"));
            }
            let OptimConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay,
            } = OptimConfig::adam_default()
            else {
                unreachable!()
            };
            OptimConfig::Adam {
                lr: get("lr", lr),
                beta1: get("beta1", beta1),
                beta2: get("beta2", beta2),
                eps: get("eps", eps),
                weight_decay: get("weight_decay", weight_decay),
            }
        }
        "sgd" => {
            if let Some(key) = ["beta1", "beta2", "eps"].into_iter().find(|k| hyper.contains_key(k)) {
                return Err(Error::config(key, "only applies to optimizer = adam"));
            }
            let OptimConfig::SgdMomentum { lr, momentum, weight_decay } = OptimConfig::sgd_default() else {
                unreachable!()
            };
            OptimConfig::SgdMomentum {
                lr: get("lr", lr),
                momentum: get("momentum", momentum),
                weight_decay: get("weight_decay", weight_decay),
            }
        }
        other => return Err(Error::config("optimizer", format!("unknown optimizer `{other}` (adam, sgd)"))),
    };

    if let Some((pos, _)) = layers.keys().enumerate().find(|&(pos, &idx)| pos != idx) {
        return Err(Error::config(format!("layer.{pos}.kind"), "layer indices must be contiguous from 0"));
    }
    let count = layers.len();
    let mut shape = cfg.input_shape();
    for (idx, raw) in layers {
        let key = |field: &str| format!("layer.{idx}.{field}");
        let kind = raw.kind.ok_or_else(|| Error::config(key("kind"), "missing"))?;
        let last = idx + 1 == count;
        let cin = raw.input.unwrap_or(match kind {
            LayerKind::FullyConnected => shape.0 * shape.1 * shape.2,
            _ => shape.0,
        });
        let need_out = || raw.out.ok_or_else(|| Error::config(key("out"), "missing"));
        let need_k = || raw.k.ok_or_else(|| Error::config(key("k"), "missing"));
        let mut spec = match kind {
            LayerKind::Conv => LayerSpec::conv(need_k()?, cin, need_out()?),
            LayerKind::Rad => LayerSpec::rad(need_k()?, cin, need_out()?),
            LayerKind::Ring => LayerSpec::ring(need_k()?, cin, need_out()?),
            LayerKind::Rsdw => {
                let out = need_out()?;
                LayerSpec::rsdw(need_k()?, cin, raw.out1.unwrap_or(out), out)
            }
            LayerKind::Relu => LayerSpec::relu(),
            LayerKind::Batchnorm => LayerSpec::batchnorm(cin),
            LayerKind::Maxpool => LayerSpec::maxpool(),
            LayerKind::GlobalAvgPool => LayerSpec::global_avg_pool(),
            LayerKind::FullyConnected => {
                let out = match raw.out {
                    Some(o) => o,
                    None if last => cfg.classes(),
                    None => return Err(Error::config(key("out"), "missing")),
                };
                LayerSpec::fully_connected(cin, out)
            }
        };
        if !kind.is_spatial_filter() && kind != LayerKind::FullyConnected {
            for (field, set) in [("k", raw.k.is_some()), ("out", raw.out.is_some()), ("out1", raw.out1.is_some())] {
                if set {
                    return Err(Error::config(key(field), format!("does not apply to {kind}")));
                }
            }
        }
        if raw.out1.is_some() && kind != LayerKind::Rsdw {
            return Err(Error::config(key("out1"), format!("does not apply to {kind}")));
        }
        if matches!(kind, LayerKind::Relu | LayerKind::GlobalAvgPool) {
            spec.in_channels = shape.0;
            spec.out_channels = shape.0;
        }
        if let Some(s) = raw.stride {
            spec = spec.with_stride(s);
        }
        if let Some(p) = raw.padding {
            spec = spec.with_padding(p);
        }
        if raw.bias == Some(false) {
            spec = spec.without_bias();
        }
        shape = spec.output_shape(shape).map_err(|e| Error::config(key("kind"), e.to_string()))?;
        cfg.model.push(spec);
    }
    cfg.validate()?;
    Ok(cfg)
}
