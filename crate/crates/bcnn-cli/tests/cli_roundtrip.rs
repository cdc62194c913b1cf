//! End-to-end CLI contract tests: golden-file format stability, shipped
//! config validity, subcommand pipelines through the real binary, and the
//! documented exit codes (1 config, 2 data, 3 divergence).

use bcnn_cli::config::CliConfig;
use bcnn_cli::format::PackedModelFile;
use bcnn_core::models::Arch;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bcnn")
}

fn manifest_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn repo_config(name: &str) -> PathBuf {
    manifest_path("../../configs").join(name)
}

fn golden() -> PathBuf {
    manifest_path("tests/golden/small_init.bcnx")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Small synthetic-data config; `lr` and `epochs` vary per test.
fn write_config(dir: &Path, epochs: usize, lr: f64, samples: (usize, usize)) -> PathBuf {
    let text = format!(
        "[model]\narch = small\ncomplex = true\nnorm = cgbn\ninit = bcw\nclasses = 10\n\
         in_channels = 1\ninput = 28x28\npool_position = after-norm\nseed = 42\n\
         [train]\nepochs = {epochs}\nbatch_size = 16\nlr = {lr}\nmilestones = 80\ngamma = 0.2\n\
         seed = 7\naugment = false\neval_batch = 128\nout_dir = {}\n\
         [data]\ndataset = synthetic\ndir = {}\nsynthetic_train = {}\nsynthetic_test = {}\n\
         synthetic_seed = 2\n",
        dir.join("run").display(),
        dir.join("data").display(),
        samples.0,
        samples.1,
    );
    let path = dir.join("test.cfg");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn golden_file_decodes_and_reencodes_byte_identically() {
    let bytes = fs::read(golden()).unwrap();
    let file = PackedModelFile::decode(&bytes).unwrap();
    assert_eq!(file.spec.arch, Arch::Small);
    assert_eq!(file.layers.len(), 13);
    let again = file.encode();
    assert_eq!(bytes, again, "re-encoding the golden file changed its bytes");
    // and the payload instantiates into a runnable model
    let model = file.instantiate::<f32>().unwrap();
    assert_eq!(model.len(), 13);
}

#[test]
fn shipped_configs_parse() {
    for name in ["synthetic_small.cfg", "mnist_small.cfg", "cifar10_nin.cfg"] {
        let cfg = CliConfig::load(&repo_config(name))
            .unwrap_or_else(|e| panic!("{name} must parse: {e}"));
        // round trip through the canonical serialization
        let again = CliConfig::parse(&cfg.serialize()).unwrap();
        assert_eq!(cfg, again, "{name} does not round trip");
    }
    // the long offline run keeps the documented budget
    let cifar = CliConfig::load(&repo_config("cifar10_nin.cfg")).unwrap();
    assert_eq!(cifar.model.arch, Arch::Nin);
    assert_eq!(cifar.train.epochs, 300);
    assert!(cifar.train.augment);
}

#[test]
fn train_export_eval_inspect_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1, 0.005, (200, 80));

    let train = Command::new(bin())
        .args(["train", "--config"])
        .arg(&cfg)
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    assert!(
        train.status.success(),
        "train failed: {}",
        stderr_of(&train)
    );
    assert!(
        stderr_of(&train).contains("epoch 1:"),
        "RUST_LOG=info must surface the per-epoch log line"
    );
    let metrics = fs::read_to_string(dir.path().join("run/metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 1);

    let ckpt = dir.path().join("run/model.bcnt");
    let packed = dir.path().join("run/model.bcnx");
    let export = run(&[
        "export",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        packed.to_str().unwrap(),
    ]);
    assert!(export.status.success(), "{}", stderr_of(&export));
    assert!(stdout_of(&export).contains("wrote"));

    let eval = run(&["eval", "--config", cfg.to_str().unwrap(), "--weights", packed.to_str().unwrap()]);
    assert!(eval.status.success(), "{}", stderr_of(&eval));
    assert!(stdout_of(&eval).contains("test_loss"), "{}", stdout_of(&eval));

    let inspect = run(&["inspect", packed.to_str().unwrap()]);
    assert!(inspect.status.success(), "{}", stderr_of(&inspect));
    let report = stdout_of(&inspect);
    assert!(report.contains("format: BCNX v1"));
    assert!(report.contains("+1 fraction"));
    assert!(report.contains("census:"));
}

#[test]
fn config_errors_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "[model]\nfrobnicate = 3\n").unwrap();
    let out = run(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("frobnicate"));

    // missing config file is also a configuration failure
    let out = run(&["train", "--config", "/nonexistent/nope.cfg"]);
    assert_eq!(out.status.code(), Some(1));

    // argument-parse problems must not collide with the data exit code
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_code_2() {
    // missing model file
    let out = run(&["inspect", "/nonexistent/model.bcnx"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));

    // truncated model file
    let dir = tempfile::tempdir().unwrap();
    let bytes = fs::read(golden()).unwrap();
    let short = dir.path().join("short.bcnx");
    fs::write(&short, &bytes[..bytes.len() - 9]).unwrap();
    let out = run(&["inspect", short.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));

    // corrupted payload byte: checksum must catch it
    let mut corrupt = bytes.clone();
    let at = corrupt.len() - 40;
    corrupt[at] ^= 0x10;
    let bad = dir.path().join("bad.bcnx");
    fs::write(&bad, &corrupt).unwrap();
    let out = run(&["inspect", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("checksum"),
        "corruption should be reported as a checksum failure: {}",
        stderr_of(&out)
    );
}

#[test]
fn divergence_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2, 1e38, (96, 32));
    let out = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("diverged"), "{}", stderr_of(&out));
    let metrics = fs::read_to_string(dir.path().join("run/metrics.jsonl")).unwrap();
    assert!(
        metrics.contains("\"status\":\"NA\""),
        "divergence must leave an NA metrics line: {metrics}"
    );
    assert!(metrics.contains("\"train_loss\":null"));
}

#[test]
fn bench_runs_on_small_sizes() {
    let out = run(&["bench", "--sizes", "64,128"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(
        text.lines().any(|l| l.contains("inner") && l.contains("64:")),
        "{text}"
    );
    assert!(text.contains("speedup"), "{text}");
    assert!(text.contains("32x smaller"), "{text}");
}
