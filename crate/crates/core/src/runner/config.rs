use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::synthetic::PrototypeImages;
use crate::data::{ClassArrival, ImageShape};
use crate::nn::{Arch, TrainConfig};
use crate::ssl::{SslConfig, Variant};
use crate::{sub_seed, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Osc,
    Iosc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// IDX image and label files.
    Idx,
    /// Generated prototype-plus-noise images.
    Synthetic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantChoice {
    /// Multiclass for one unknown class, binary super-class otherwise.
    Auto,
    Multiclass,
    BinarySuperclass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Conv,
    Mlp,
}

/// Every knob of an experiment as one flat key/value table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub seed: u64,
    pub output_dir: PathBuf,

    pub dataset: DatasetKind,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Keep only the first `subset` records of the dataset.
    pub subset: Option<usize>,
    pub synthetic_classes: usize,
    pub synthetic_per_class: usize,
    pub synthetic_side: usize,
    pub synthetic_noise: f32,

    pub known_fraction: f64,
    pub n_unknown: usize,
    pub known_holdout: f64,

    pub k: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub lambda_u: f64,
    pub tau: f64,
    pub temperature: f64,
    pub variant: VariantChoice,
    pub init_from_f: bool,
    pub gate_novel: bool,
    pub fold_labeled: Option<bool>,

    pub arch: ArchKind,
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
    pub mlp_hidden: Vec<usize>,

    pub momentum: f64,
    pub f_epochs: usize,
    pub f_batch_size: usize,
    pub f_lr: f64,
    pub f_weight_decay: f64,
    pub g_epochs: usize,
    pub g_batch_size: usize,
    pub g_lr: f64,
    pub g_weight_decay: f64,
    pub update_epochs: usize,
    pub update_lr: f64,

    pub memory: usize,
    /// When false, incremental updates see no memory (no replay, no distillation).
    pub use_memory: bool,
    pub class_arrival: ClassArrival,
    /// Share of each window frozen for measuring per-window accuracy over time.
    pub eval_fraction: f64,

    /// Max-softmax threshold of the baseline.
    pub threshold: f64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub sweep_k: Vec<usize>,
    /// Filter outcomes list per-instance scores only for pools up to this size.
    pub max_scores_in_json: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Osc,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            dataset: DatasetKind::Idx,
            images: None,
            labels: None,
            subset: None,
            synthetic_classes: 6,
            synthetic_per_class: 120,
            synthetic_side: 12,
            synthetic_noise: 0.15,
            known_fraction: 0.5,
            n_unknown: 1,
            known_holdout: 0.33,
            k: 300,
            lambda: 1.0,
            alpha: 0.3,
            lambda_u: 0.2,
            tau: 0.85,
            temperature: 3.0,
            variant: VariantChoice::Auto,
            init_from_f: false,
            gate_novel: false,
            fold_labeled: None,
            arch: ArchKind::Conv,
            conv_channels: vec![8, 16],
            hidden: 64,
            mlp_hidden: vec![64],
            momentum: 0.9,
            f_epochs: 20,
            f_batch_size: 64,
            f_lr: 0.01,
            f_weight_decay: 0.001,
            g_epochs: 30,
            g_batch_size: 64,
            g_lr: 0.005,
            g_weight_decay: 0.0005,
            update_epochs: 20,
            update_lr: 0.01,
            memory: 2000,
            use_memory: true,
            class_arrival: ClassArrival::Single,
            eval_fraction: 0.2,
            threshold: 0.5,
            kmeans_max_iter: 100,
            kmeans_tol: 1e-6,
            sweep_k: vec![50, 300, 1000, 2000],
            max_scores_in_json: 20_000,
        }
    }
}

/// Parses a `key=value` override; the value is read as a TOML literal and
/// falls back to a plain string.
fn parse_override(item: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let key = key.trim().replace('-', "_");
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    Ok((key, value))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Defaults, then the optional file, then `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match file {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    /// Like [`ExperimentConfig::load`] with the file contents given inline.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, value) = parse_override(item)?;
            table.insert(key, value);
        }
        Self::deserialize(table).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn arch(&self) -> Arch {
        match self.arch {
            ArchKind::Conv => Arch::Conv {
                channels: self.conv_channels.clone(),
                hidden: self.hidden,
            },
            ArchKind::Mlp => Arch::Mlp {
                hidden: self.mlp_hidden.clone(),
            },
        }
    }

    pub fn synthetic(&self) -> PrototypeImages {
        PrototypeImages {
            n_classes: self.synthetic_classes,
            per_class: self.synthetic_per_class,
            shape: ImageShape::new(1, self.synthetic_side, self.synthetic_side),
            noise: self.synthetic_noise,
            jitter: 1,
        }
    }

    pub fn f_train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.f_epochs,
            batch_size: self.f_batch_size,
            learning_rate: self.f_lr,
            weight_decay: self.f_weight_decay,
            momentum: self.momentum,
            seed: sub_seed(self.seed, 0xF),
        }
    }

    pub fn update_train(&self, window: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.update_epochs,
            learning_rate: self.update_lr,
            seed: sub_seed(self.seed, 0x100 + window as u64),
            ..self.f_train()
        }
    }

    pub fn variant_for(&self, n_unknown: usize) -> Variant {
        match self.variant {
            VariantChoice::Multiclass => Variant::Multiclass,
            VariantChoice::BinarySuperclass => Variant::BinarySuperclass,
            VariantChoice::Auto if n_unknown > 1 => Variant::BinarySuperclass,
            VariantChoice::Auto => Variant::Multiclass,
        }
    }

    pub fn ssl(&self, n_unknown: usize, stream_seed: u64) -> SslConfig {
        SslConfig {
            alpha: self.alpha,
            lambda_u: self.lambda_u,
            tau: self.tau,
            temperature: self.temperature,
            train: TrainConfig {
                epochs: self.g_epochs,
                batch_size: self.g_batch_size,
                learning_rate: self.g_lr,
                weight_decay: self.g_weight_decay,
                momentum: self.momentum,
                seed: sub_seed(self.seed, 0x6 ^ stream_seed),
            },
            variant: self.variant_for(n_unknown),
            init_from_f: self.init_from_f,
            gate_novel: self.gate_novel,
            fold_labeled: self.fold_labeled,
        }
    }

    /// Checks every value before any work starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self.dataset {
            DatasetKind::Idx => {
                for (name, path) in [("images", &self.images), ("labels", &self.labels)] {
                    match path {
                        None => return bad(format!("dataset path `{name}` is not set")),
                        Some(p) if !p.is_file() => return bad(format!("dataset file {} does not exist", p.display())),
                        _ => {}
                    }
                }
            }
            DatasetKind::Synthetic => {
                if self.synthetic_classes < 2 || self.synthetic_per_class == 0 || self.synthetic_side < 4 {
                    return bad("synthetic dataset needs ≥ 2 classes, ≥ 1 instance and side ≥ 4".into());
                }
            }
        }
        if self.subset == Some(0) {
            return bad("subset must be positive".into());
        }
        if !(self.known_fraction > 0.0 && self.known_fraction < 1.0) {
            return bad(format!("known_fraction must lie in (0, 1), got {}", self.known_fraction));
        }
        if !(self.known_holdout > 0.0 && self.known_holdout < 1.0) {
            return bad(format!("known_holdout must lie in (0, 1), got {}", self.known_holdout));
        }
        if self.n_unknown == 0 {
            return bad("n_unknown must be at least 1".into());
        }
        if self.k == 0 || self.sweep_k.contains(&0) {
            return bad("K must be at least 1".into());
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold must lie in [0, 1], got {}", self.threshold));
        }
        if !(self.eval_fraction >= 0.0 && self.eval_fraction < 1.0) {
            return bad(format!("eval_fraction must lie in [0, 1), got {}", self.eval_fraction));
        }
        if self.protocol == Protocol::Iosc && self.memory == 0 && self.use_memory {
            return bad("memory must be positive when use_memory is set".into());
        }
        if self.kmeans_max_iter == 0 || !(self.kmeans_tol >= 0.0) {
            return bad("kmeans_max_iter must be positive and kmeans_tol nonnegative".into());
        }
        if self.arch == ArchKind::Conv && (self.conv_channels.is_empty() || self.hidden == 0) {
            return bad("conv arch needs at least one block and a hidden width".into());
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.f_train().validate().map_err(wrap)?;
        self.update_train(0).validate().map_err(wrap)?;
        self.ssl(self.n_unknown, 0).validate().map_err(wrap)?;
        Ok(())
    }
}
