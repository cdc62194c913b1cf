//! Desk-scale training harness: Adam with a milestone learning-rate
//! schedule, seeded shuffling, JSONL metrics, and checkpointing.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod loss;
pub mod metrics;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use data::{
    augment_crop_flip, channel_stats, load_cifar10, load_mnist_dir, standardize,
    write_synthetic_corpus, ChannelStats, Dataset,
};
pub use metrics::{read_metrics, MetricsRecord, MetricsWriter};

use crate::error::{Error, Result};
use crate::layers::{Activation, Mode, Sequential};
use crate::models::ModelSpec;
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::time::Instant;

/// Classes at or above this count get a top-5 column in the metrics log.
const TOP5_MIN_CLASSES: usize = 100;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs (1-based) at which the learning rate is multiplied by `gamma`.
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub seed: u64,
    pub augment: bool,
    pub adam: AdamConfig,
    /// Evaluation chunk size (memory bound, no gradient state).
    pub eval_batch: usize,
    pub checkpoint_path: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 50,
            lr: 5e-3,
            milestones: vec![80, 150, 200, 240, 270],
            gamma: 0.2,
            seed: 42,
            augment: false,
            adam: AdamConfig::default(),
            eval_batch: 256,
            checkpoint_path: None,
            metrics_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch_size must be at least 2 (batch statistics are undefined for 1)".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "milestones must be strictly increasing, got {:?}",
                self.milestones
            )));
        }
        if self.milestones.first().is_some_and(|&m| m == 0) {
            return Err(Error::Config("milestones are 1-based epochs; 0 is invalid".into()));
        }
        if self.eval_batch == 0 {
            return Err(Error::Config("eval_batch must be positive".into()));
        }
        Ok(())
    }
}

/// Learning rate for a 1-based epoch: the base rate decayed once per
/// milestone already reached.
pub fn lr_at(base: f64, gamma: f64, milestones: &[usize], epoch: usize) -> f64 {
    let drops = milestones.iter().filter(|&&m| epoch >= m).count();
    base * gamma.powi(drops as i32)
}

/// Errors that mean "training blew up" rather than "the setup is wrong".
fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite(_) | Error::Domain(_))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainStatus {
    Completed,
    /// Loss or a gradient went non-finite during the given epoch.
    Diverged { epoch: usize },
}

#[derive(Debug)]
pub struct TrainReport {
    pub status: TrainStatus,
    pub records: Vec<MetricsRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalReport {
    pub loss: f64,
    pub top1: f64,
    pub top5: Option<f64>,
}

/// Runs the model over the dataset in evaluation mode.
pub fn evaluate<S: Scalar>(
    model: &mut Sequential<S>,
    ds: &Dataset<S>,
    chunk: usize,
) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(Error::Empty("evaluation dataset".into()));
    }
    let n = ds.len();
    let mut loss_sum = 0.0f64;
    let mut top1_hits = 0.0f64;
    let mut top5_hits = 0.0f64;
    let want_top5 = ds.num_classes >= TOP5_MIN_CLASSES;
    let mut start = 0usize;
    while start < n {
        let end = (start + chunk).min(n);
        let idxs: Vec<usize> = (start..end).collect();
        let (images, labels) = ds.batch(&idxs)?;
        let out = model.forward(Activation::Real(images), Mode::Eval)?;
        let logits = out.into_real("model output")?;
        let (loss, _) = loss::softmax_cross_entropy(&logits, &labels)?;
        let m = (end - start) as f64;
        loss_sum += loss.to_f64_c() * m;
        top1_hits += loss::top_k_accuracy(&logits, &labels, 1)? * m;
        if want_top5 {
            top5_hits += loss::top_k_accuracy(&logits, &labels, 5)? * m;
        }
        start = end;
    }
    Ok(EvalReport {
        loss: loss_sum / n as f64,
        top1: top1_hits / n as f64,
        top5: want_top5.then_some(top5_hits / n as f64),
    })
}

/// Trains the model in place. A checkpoint is written before the first
/// epoch (so a zero-epoch run captures the initialization) and after every
/// epoch. A non-finite loss or gradient ends training with a final "NA"
/// metrics line rather than an error.
pub fn train<S: Scalar>(
    model: &mut Sequential<S>,
    spec: &ModelSpec,
    train_ds: &Dataset<S>,
    test_ds: &Dataset<S>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_ds.is_empty() {
        return Err(Error::Empty("training dataset".into()));
    }
    let mut opt = Adam::new(model, cfg.adam);
    let mut writer = match &cfg.metrics_path {
        Some(path) => Some(MetricsWriter::create(path)?),
        None => None,
    };
    let save = |model: &mut Sequential<S>, opt: &Adam<S>, epoch: u64| -> Result<()> {
        if let Some(path) = &cfg.checkpoint_path {
            Checkpoint::capture(spec, model, opt, epoch).write(path)?;
        }
        Ok(())
    };
    save(model, &opt, 0)?;

    let mut records = Vec::with_capacity(cfg.epochs);
    let wall_start = Instant::now();
    let mut indices: Vec<usize> = (0..train_ds.len()).collect();

    for epoch in 1..=cfg.epochs {
        let lr = lr_at(cfg.lr, cfg.gamma, &cfg.milestones, epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        indices.sort_unstable();
        indices.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        let mut diverged = false;
        for chunk in indices.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue; // batch statistics need at least two samples
            }
            let (mut images, labels) = train_ds.batch(chunk)?;
            if cfg.augment {
                data::augment_crop_flip(&mut images, &mut rng)?;
            }
            opt.zero_grad(model); // grads accumulate across backward calls
            let step = (|| {
                let out = model.forward(Activation::Real(images), Mode::Train)?;
                let logits = out.into_real("model output")?;
                let (loss, grad) = loss::softmax_cross_entropy(&logits, &labels)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite("training loss".into()));
                }
                model.backward(Activation::Real(grad))?;
                Ok(loss.to_f64_c())
            })();
            let loss = match step {
                Ok(loss) => loss,
                Err(e) if is_divergence(&e) => {
                    log::warn!("epoch {epoch}: {e}; stopping");
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            match opt.step(model, lr) {
                Ok(()) => {}
                Err(e) if is_divergence(&e) => {
                    log::warn!("epoch {epoch}: {e}; stopping");
                    diverged = true;
                    break;
                }
                Err(other) => return Err(other),
            }
        }

        if diverged {
            let record =
                MetricsRecord::diverged(epoch, lr, wall_start.elapsed().as_secs_f64());
            if let Some(w) = &mut writer {
                w.append(&record)?;
            }
            records.push(record);
            return Ok(TrainReport { status: TrainStatus::Diverged { epoch }, records });
        }

        let eval = evaluate(model, test_ds, cfg.eval_batch)?;
        let record = MetricsRecord {
            epoch,
            train_loss: if seen > 0 { loss_sum / seen as f64 } else { f64::NAN },
            test_loss: eval.loss,
            top1: eval.top1,
            top5: eval.top5,
            lr,
            wall_time: wall_start.elapsed().as_secs_f64(),
            status: "ok".into(),
        };
        log::info!(
            "epoch {epoch}: train_loss {:.4} test_loss {:.4} top1 {:.4} lr {lr}",
            record.train_loss,
            record.test_loss,
            record.top1
        );
        if let Some(w) = &mut writer {
            w.append(&record)?;
        }
        records.push(record);
        save(model, &opt, epoch as u64)?;
    }

    Ok(TrainReport { status: TrainStatus::Completed, records })
}
