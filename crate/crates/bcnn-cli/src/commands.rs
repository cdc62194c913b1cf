//! Subcommand implementations, shared by the binary and integration tests.

use crate::config::{CliConfig, DataConfig, DatasetKind};
use crate::format::PackedModelFile;
use bcnn_core::bitpack::PackedMatrix;
use bcnn_core::layers::ExportPayload;
use bcnn_core::models::{build_model, count_params, ModelSpec};
use bcnn_core::train::{
    self,
    data::{channel_stats, load_cifar10, load_mnist_dir, standardize, write_synthetic_corpus},
    Adam, AdamConfig, Checkpoint, Dataset, TrainStatus,
};
use bcnn_core::{Error, Result};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// The training scalar type. f32 keeps desk-scale runs fast; kernels that
/// must be exact operate on packed integers regardless.
pub type TrainScalar = f32;

fn truncate<S: bcnn_core::Scalar>(ds: Dataset<S>, limit: Option<usize>) -> Result<Dataset<S>> {
    let Some(limit) = limit else { return Ok(ds) };
    if limit == 0 || limit > ds.len() {
        return Ok(ds);
    }
    let idxs: Vec<usize> = (0..limit).collect();
    let (images, labels) = ds.batch(&idxs)?;
    Dataset::new(images, labels, ds.num_classes)
}

/// Loads the configured dataset pair, standardized with the training
/// split's per-channel statistics.
pub fn load_dataset(
    data: &DataConfig,
    model: &ModelSpec,
) -> Result<(Dataset<TrainScalar>, Dataset<TrainScalar>)> {
    let dir = Path::new(&data.dir);
    let (train, test) = match data.dataset {
        DatasetKind::Mnist => {
            (load_mnist_dir(dir, true)?, load_mnist_dir(dir, false)?)
        }
        DatasetKind::Synthetic => {
            if !dir.join("train-images-idx3-ubyte").exists() {
                log::info!(
                    "writing synthetic corpus ({} train / {} test) to {}",
                    data.synthetic_train,
                    data.synthetic_test,
                    dir.display()
                );
                write_synthetic_corpus(
                    dir,
                    data.synthetic_train,
                    data.synthetic_test,
                    data.synthetic_seed,
                )?;
            }
            (load_mnist_dir(dir, true)?, load_mnist_dir(dir, false)?)
        }
        DatasetKind::Cifar10 => {
            let train_paths: Vec<PathBuf> = (1..=5)
                .map(|i| dir.join(format!("data_batch_{i}.bin")))
                .filter(|p| p.exists())
                .collect();
            if train_paths.is_empty() {
                return Err(Error::Data(format!(
                    "no data_batch_*.bin files under {}",
                    dir.display()
                )));
            }
            (load_cifar10(&train_paths)?, load_cifar10(&[dir.join("test_batch.bin")])?)
        }
    };
    let mut train = truncate(train, data.limit_train)?;
    let mut test = truncate(test, data.limit_test)?;

    let shape = train.images.shape().to_vec();
    let expect = [model.in_channels, model.input_hw.0, model.input_hw.1];
    if shape[1..] != expect {
        return Err(Error::Config(format!(
            "dataset images are {}x{}x{} but the model expects {}x{}x{} \
             (check [model] in_channels/input against [data] dataset)",
            shape[1], shape[2], shape[3], expect[0], expect[1], expect[2]
        )));
    }
    if train.num_classes != model.num_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, model declares {}",
            train.num_classes, model.num_classes
        )));
    }
    let stats = channel_stats(&train.images)?;
    standardize(&mut train.images, &stats)?;
    standardize(&mut test.images, &stats)?;
    Ok((train, test))
}

pub struct TrainOutcome {
    pub report: train::TrainReport,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

pub fn cmd_train(config_path: &Path) -> Result<TrainOutcome> {
    let cfg = CliConfig::load(config_path)?;
    let (train_ds, test_ds) = load_dataset(&cfg.data, &cfg.model)?;
    let mut model = build_model::<TrainScalar>(&cfg.model)?;
    let train_cfg = cfg.train.to_train_config();
    let report = train::train(&mut model, &cfg.model, &train_ds, &test_ds, &train_cfg)?;
    Ok(TrainOutcome {
        report,
        checkpoint: train_cfg.checkpoint_path.expect("set by to_train_config"),
        metrics: train_cfg.metrics_path.expect("set by to_train_config"),
    })
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub loss: f64,
    pub top1: f64,
    pub top5: Option<f64>,
}

pub fn cmd_eval(config_path: &Path, weights_path: &Path) -> Result<EvalOutcome> {
    let cfg = CliConfig::load(config_path)?;
    let file = PackedModelFile::read(weights_path)?;
    let (_, test_ds) = load_dataset(&cfg.data, &file.spec)?;
    let mut model = file.instantiate::<TrainScalar>()?;
    let eval = train::evaluate(&mut model, &test_ds, cfg.train.eval_batch)?;
    Ok(EvalOutcome { loss: eval.loss, top1: eval.top1, top5: eval.top5 })
}

pub fn cmd_export(checkpoint_path: &Path, out_path: &Path) -> Result<PackedModelFile> {
    let ckpt = Checkpoint::read(checkpoint_path)?;
    let spec = ckpt.spec()?;
    let mut model = build_model::<TrainScalar>(&spec)?;
    let mut opt = Adam::new(&mut model, AdamConfig::default());
    ckpt.restore(&mut model, &mut opt)?;
    let file = PackedModelFile::from_model(&spec, &model);
    file.write(out_path)?;
    Ok(file)
}

/// Renders the header, parameter census, and per-plane +1-bit fractions of
/// a packed model file.
pub fn cmd_inspect(path: &Path) -> Result<String> {
    let file = PackedModelFile::read(path)?;
    let model = file.instantiate::<TrainScalar>()?;
    let counts = count_params(&model);
    let mut out = String::new();
    let _ = writeln!(out, "format: BCNX v1");
    let _ = writeln!(out, "spec:");
    for (k, v) in file.spec.to_kv() {
        let _ = writeln!(out, "  {k} = {v}");
    }
    let _ = writeln!(out, "layers: {}", file.layers.len());
    for (i, entry) in file.layers.iter().enumerate() {
        let _ = writeln!(out, "  [{i:>2}] {} dims={:?}", entry.descriptor.tag, entry.descriptor.dims);
    }
    let _ = writeln!(
        out,
        "census: {} full-precision params, {} packed weight bits, {:.3} MiB deployed",
        counts.full_precision,
        counts.binary_bits,
        counts.total_equivalent_mb()
    );
    let _ = writeln!(out, "packed planes (+1-bit fraction):");
    let mut any = false;
    for (i, entry) in file.layers.iter().enumerate() {
        for record in &entry.records {
            if let ExportPayload::Packed { rows, cols, words } = &record.payload {
                let matrix = PackedMatrix::from_packed_words(
                    words.clone(),
                    *rows as usize,
                    *cols as usize,
                )?;
                let total = (*rows as usize) * (*cols as usize);
                let positive: usize =
                    (0..matrix.rows()).map(|r| matrix.row_plane(r).count_positive()).sum();
                let _ = writeln!(
                    out,
                    "  [{i:>2}] {:<8} {:>5}x{:<5} +1 fraction {:.4}",
                    record.name,
                    rows,
                    cols,
                    positive as f64 / total as f64
                );
                any = true;
            }
        }
    }
    if !any {
        let _ = writeln!(out, "  (none)");
    }
    Ok(out)
}

/// Maps an error to the documented process exit code:
/// 1 config, 2 data/IO, 3 non-finite abort.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Data(_) | Error::Io(_) | Error::Empty(_) => 2,
        Error::NonFinite(_) => 3,
        _ => 1,
    }
}

/// Exit code for a finished training run: divergence maps to the
/// non-finite code.
pub fn exit_code_for_status(status: &TrainStatus) -> i32 {
    match status {
        TrainStatus::Completed => 0,
        TrainStatus::Diverged { .. } => 3,
    }
}
