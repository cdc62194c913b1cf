//! Run configuration: a flat `key = value` text format with `[model]`,
//! `[train]`, and `[data]` sections, `#` comments, and strict key checking.
//! `parse(serialize(c)) == c` for every valid configuration.

use bcnn_core::models::ModelSpec;
use bcnn_core::train::{AdamConfig, TrainConfig};
use bcnn_core::{Error, Result};
use std::fmt::Write as _;
use std::path::PathBuf;

/// Training settings controlled by the config file. Optimizer moment
/// parameters stay at their published defaults and are not file-visible.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub seed: u64,
    pub augment: bool,
    pub eval_batch: usize,
    pub out_dir: String,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 50,
            lr: 5e-3,
            milestones: vec![80, 150, 200, 240, 270],
            gamma: 0.2,
            seed: 42,
            augment: false,
            eval_batch: 256,
            out_dir: "runs/default".into(),
        }
    }
}

impl TrainSettings {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            milestones: self.milestones.clone(),
            gamma: self.gamma,
            seed: self.seed,
            augment: self.augment,
            adam: AdamConfig::default(),
            eval_batch: self.eval_batch,
            checkpoint_path: Some(PathBuf::from(&self.out_dir).join("model.bcnt")),
            metrics_path: Some(PathBuf::from(&self.out_dir).join("metrics.jsonl")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    /// Deterministic generated digit corpus written as IDX files; used where
    /// the real archives are unavailable.
    Synthetic,
}

impl DatasetKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(Self::Mnist),
            "cifar10" => Ok(Self::Cifar10),
            "synthetic" => Ok(Self::Synthetic),
            other => Err(Error::Config(format!(
                "unknown dataset `{other}` (expected mnist, cifar10, or synthetic)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Mnist => "mnist",
            Self::Cifar10 => "cifar10",
            Self::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub dataset: DatasetKind,
    pub dir: String,
    /// Truncate the training split to the first N samples (desk-scale runs).
    pub limit_train: Option<usize>,
    pub limit_test: Option<usize>,
    /// Sample counts written when `dataset = synthetic` and files are absent.
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub synthetic_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Synthetic,
            dir: "data/synthetic".into(),
            limit_train: None,
            limit_test: None,
            synthetic_train: 2000,
            synthetic_test: 400,
            synthetic_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CliConfig {
    pub model: ModelSpec,
    pub train: TrainSettings,
    pub data: DataConfig,
}

impl CliConfig {
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str("[model]\n");
        for (k, v) in self.model.to_kv() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("\n[train]\n");
        let t = &self.train;
        let _ = writeln!(out, "epochs = {}", t.epochs);
        let _ = writeln!(out, "batch_size = {}", t.batch_size);
        let _ = writeln!(out, "lr = {}", t.lr);
        let milestones: Vec<String> = t.milestones.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(out, "milestones = {}", milestones.join(","));
        let _ = writeln!(out, "gamma = {}", t.gamma);
        let _ = writeln!(out, "seed = {}", t.seed);
        let _ = writeln!(out, "augment = {}", t.augment);
        let _ = writeln!(out, "eval_batch = {}", t.eval_batch);
        let _ = writeln!(out, "out_dir = {}", t.out_dir);
        out.push_str("\n[data]\n");
        let d = &self.data;
        let _ = writeln!(out, "dataset = {}", d.dataset.label());
        let _ = writeln!(out, "dir = {}", d.dir);
        if let Some(n) = d.limit_train {
            let _ = writeln!(out, "limit_train = {n}");
        }
        if let Some(n) = d.limit_test {
            let _ = writeln!(out, "limit_test = {n}");
        }
        let _ = writeln!(out, "synthetic_train = {}", d.synthetic_train);
        let _ = writeln!(out, "synthetic_test = {}", d.synthetic_test);
        let _ = writeln!(out, "synthetic_seed = {}", d.synthetic_seed);
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq, Clone, Copy)]
        enum Section {
            None,
            Model,
            Train,
            Data,
        }
        let mut section = Section::None;
        let mut model_kv: Vec<(String, String)> = Vec::new();
        let mut train = TrainSettings::default();
        let mut data = DataConfig::default();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name.trim() {
                    "model" => Section::Model,
                    "train" => Section::Train,
                    "data" => Section::Data,
                    other => {
                        return Err(Error::Config(format!(
                            "line {}: unknown section `[{other}]`",
                            lineno + 1
                        )))
                    }
                };
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let ctx = |what: &str| {
                Error::Config(format!("line {}: bad value `{value}` for {what}", lineno + 1))
            };
            match section {
                Section::None => {
                    return Err(Error::Config(format!(
                        "line {}: key `{key}` appears before any section header",
                        lineno + 1
                    )))
                }
                Section::Model => model_kv.push((key.to_string(), value.to_string())),
                Section::Train => match key {
                    "epochs" => train.epochs = value.parse().map_err(|_| ctx("epochs"))?,
                    "batch_size" => {
                        train.batch_size = value.parse().map_err(|_| ctx("batch_size"))?
                    }
                    "lr" => train.lr = value.parse().map_err(|_| ctx("lr"))?,
                    "milestones" => {
                        train.milestones = if value.is_empty() {
                            Vec::new()
                        } else {
                            value
                                .split(',')
                                .map(|m| m.trim().parse::<usize>().map_err(|_| ctx("milestones")))
                                .collect::<Result<_>>()?
                        };
                    }
                    "gamma" => train.gamma = value.parse().map_err(|_| ctx("gamma"))?,
                    "seed" => train.seed = value.parse().map_err(|_| ctx("seed"))?,
                    "augment" => train.augment = value.parse().map_err(|_| ctx("augment"))?,
                    "eval_batch" => {
                        train.eval_batch = value.parse().map_err(|_| ctx("eval_batch"))?
                    }
                    "out_dir" => train.out_dir = value.to_string(),
                    other => {
                        return Err(Error::Config(format!(
                            "line {}: unknown [train] key `{other}`",
                            lineno + 1
                        )))
                    }
                },
                Section::Data => match key {
                    "dataset" => data.dataset = DatasetKind::parse(value)?,
                    "dir" => data.dir = value.to_string(),
                    "limit_train" => {
                        data.limit_train = Some(value.parse().map_err(|_| ctx("limit_train"))?)
                    }
                    "limit_test" => {
                        data.limit_test = Some(value.parse().map_err(|_| ctx("limit_test"))?)
                    }
                    "synthetic_train" => {
                        data.synthetic_train =
                            value.parse().map_err(|_| ctx("synthetic_train"))?
                    }
                    "synthetic_test" => {
                        data.synthetic_test = value.parse().map_err(|_| ctx("synthetic_test"))?
                    }
                    "synthetic_seed" => {
                        data.synthetic_seed = value.parse().map_err(|_| ctx("synthetic_seed"))?
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "line {}: unknown [data] key `{other}`",
                            lineno + 1
                        )))
                    }
                },
            }
        }
        let model = ModelSpec::from_kv(&model_kv)?;
        let cfg = CliConfig { model, train, data };
        cfg.train.to_train_config().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
