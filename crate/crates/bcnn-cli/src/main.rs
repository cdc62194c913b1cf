//! `bcnn`: train, evaluate, export, inspect, and benchmark binary complex
//! networks. Set RUST_LOG=info (or debug) for progress output.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data/file error,
//! 3 training aborted on a non-finite value.

use bcnn_cli::commands::{
    cmd_eval, cmd_export, cmd_inspect, cmd_train, exit_code_for_status,
};
use bcnn_cli::{bench, commands};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bcnn",
    about = "Binary complex neural networks: packed {±1±i} weights and activations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file; writes metrics.jsonl and a
    /// checkpoint into the configured output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a packed model on the configured test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Packed model file produced by `export`.
        #[arg(long)]
        weights: PathBuf,
    },
    /// Convert a training checkpoint into a deployable packed model
    /// (binarized weights stored as sign planes).
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a packed model's header, parameter census, and per-plane
    /// +1-bit fractions.
    Inspect { file: PathBuf },
    /// Verify the packed GEMM against a float reference, then time both.
    Bench {
        /// Inner (reduction) dimensions to benchmark.
        #[arg(long, value_delimiter = ',', default_values_t = [512usize, 1024, 4096])]
        sizes: Vec<usize>,
    },
}

fn run(cli: Cli) -> Result<i32, bcnn_core::Error> {
    match cli.command {
        Command::Train { config } => {
            let outcome = cmd_train(&config)?;
            match &outcome.report.status {
                bcnn_core::train::TrainStatus::Completed => {
                    if let Some(last) = outcome.report.records.last() {
                        println!(
                            "trained {} epochs: train_loss {:.4}, test_loss {:.4}, top1 {:.4}",
                            last.epoch, last.train_loss, last.test_loss, last.top1
                        );
                    } else {
                        println!("trained 0 epochs (checkpoint captures the initialization)");
                    }
                }
                bcnn_core::train::TrainStatus::Diverged { epoch } => {
                    eprintln!("training diverged (non-finite value) during epoch {epoch}");
                }
            }
            println!("checkpoint: {}", outcome.checkpoint.display());
            println!("metrics:    {}", outcome.metrics.display());
            Ok(exit_code_for_status(&outcome.report.status))
        }
        Command::Eval { config, weights } => {
            let eval = cmd_eval(&config, &weights)?;
            match eval.top5 {
                Some(top5) => println!(
                    "test_loss {:.6} top1 {:.6} top5 {:.6}",
                    eval.loss, eval.top1, top5
                ),
                None => println!("test_loss {:.6} top1 {:.6}", eval.loss, eval.top1),
            }
            Ok(0)
        }
        Command::Export { checkpoint, out } => {
            let file = cmd_export(&checkpoint, &out)?;
            println!(
                "wrote {} ({} layers, {} bytes)",
                out.display(),
                file.layers.len(),
                std::fs::metadata(&out).map(|m| m.len()).unwrap_or(0)
            );
            Ok(0)
        }
        Command::Inspect { file } => {
            print!("{}", cmd_inspect(&file)?);
            Ok(0)
        }
        Command::Bench { sizes } => {
            let report = bench::run(&sizes)?;
            print!("{}", bench::render(&report));
            if let Some(s) = report.sizes.iter().find(|s| s.inner == 4096) {
                if s.speedup < bench::REQUIRED_SPEEDUP_AT_4096 {
                    eprintln!(
                        "FAIL: speedup {:.2}x at inner 4096 is below the required {:.0}x",
                        s.speedup,
                        bench::REQUIRED_SPEEDUP_AT_4096
                    );
                    return Ok(1);
                }
                println!(
                    "gate: speedup {:.2}x at inner 4096 (required >= {:.0}x)",
                    s.speedup,
                    bench::REQUIRED_SPEEDUP_AT_4096
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    // clap's own exit code for usage errors is 2, which this tool reserves
    // for data errors; remap usage problems to the config-error code.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code_for(&e) as u8)
        }
    }
}
