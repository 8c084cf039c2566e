use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ringconv::harness::{self, EvalReport, LayerProbe};
use ringconv::layers::LayerKind;
use ringconv::trainer::{parse_config, Precision, TrainConfig};
use ringconv::Error;

const EXIT_PROPERTY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

/// Rotation-invariant convolutions: training, four-rotation evaluation,
/// gradient and invariance checks, weight and MAC accounting.
///
/// Exit codes: 0 success, 1 failed property check, 2 usage or config
/// error, 3 numerical divergence.
#[derive(Parser)]
#[command(name = "ringconv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write model.rcv and metrics.jsonl.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a checkpoint on the test set rotated by 0°, 90°, 180°, 270°.
    EvalRotations {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Name recorded in the report; defaults to the config file stem.
        #[arg(long)]
        model_id: Option<String>,
    },
    /// Finite-difference check of one random layer (f64).
    Gradcheck {
        #[command(flatten)]
        probe: ProbeArgs,
        /// Use an all-zero input.
        #[arg(long)]
        zero_input: bool,
    },
    /// Equivariance and pooled-invariance check of one random filter layer (f64).
    Invariance {
        #[command(flatten)]
        probe: ProbeArgs,
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
    /// Per-layer weight and MAC counts of a model config.
    Counts {
        #[arg(long)]
        config: PathBuf,
        /// Input height; defaults to the dataset's.
        #[arg(long)]
        h: Option<usize>,
        /// Input width; defaults to the dataset's.
        #[arg(long)]
        w: Option<usize>,
        /// Print one JSON object instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory holding the CIFAR binary files; overrides the config.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
    /// Stratified subset size of the split in use (train for `train`, test
    /// for `eval-rotations`).
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replace global average pooling by flattening into the head.
    #[arg(long)]
    no_global_pool: bool,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    kind: LayerKind,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    in_channels: usize,
    #[arg(long, default_value_t = 3)]
    out_channels: usize,
    /// Side of the square input.
    #[arg(long, default_value_t = 7)]
    size: usize,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ProbeArgs {
    fn probe(&self) -> LayerProbe {
        LayerProbe {
            kind: self.kind,
            k: self.k,
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            size: self.size,
            batch: self.batch,
            seed: self.seed,
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_USAGE,
    }
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string(value).expect("reports serialize"));
}

fn load_config(run: &RunArgs, is_eval: bool) -> ringconv::Result<TrainConfig> {
    let text = fs::read_to_string(&run.config).map_err(|e| Error::config("--config", format!("{}: {e}", run.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(p) = run.precision {
        cfg.precision = p;
    }
    if let Some(n) = run.subset {
        if is_eval {
            cfg.test_subset = Some(n);
        } else {
            cfg.subset = Some(n);
        }
    }
    if run.no_global_pool {
        cfg.drop_global_pool()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    command: &'static str,
    checkpoint: &'a Path,
    metrics: &'a Path,
    epochs: usize,
    final_train_loss: Option<f64>,
    final_eval_acc: Option<f64>,
}

fn run(cli: Cli) -> Result<(), u8> {
    let fail = |e: Error| {
        eprintln!("error: {e}");
        exit_code(&e)
    };
    match cli.command {
        Command::Train { run } => {
            let cfg = load_config(&run, false).map_err(fail)?;
            let out = harness::train_to_dir(&cfg, run.data_dir.as_deref(), &run.out).map_err(fail)?;
            let last = out.epochs.last();
            print_json(&TrainSummary {
                command: "train",
                checkpoint: &out.checkpoint,
                metrics: &out.metrics,
                epochs: out.epochs.len(),
                final_train_loss: last.map(|m| m.train_loss),
                final_eval_acc: last.and_then(|m| m.eval_acc),
            });
            Ok(())
        }
        Command::EvalRotations { run, checkpoint, model_id } => {
            let id = model_id.unwrap_or_else(|| run.config.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned()));
            let seed = run.seed.unwrap_or(0);
            let result = load_config(&run, true).and_then(|cfg| harness::eval_checkpoint(&cfg, &checkpoint, run.data_dir.as_deref(), &id));
            let (report, code) = match result {
                Ok(r) => (r, None),
                Err(e) => {
                    eprintln!("error: {e}");
                    (EvalReport::failed(&id, seed, &e), Some(exit_code(&e)))
                }
            };
            print_json(&report);
            if fs::create_dir_all(&run.out).is_ok() {
                let line = serde_json::to_string(&report).expect("reports serialize") + "\n";
                if let Err(e) = fs::write(run.out.join("eval.jsonl"), line) {
                    eprintln!("warning: could not write the report file: {e}");
                }
            }
            code.map_or(Ok(()), Err)
        }
        Command::Gradcheck { probe, zero_input } => {
            let report = harness::gradcheck(&probe.probe(), zero_input).map_err(fail)?;
            print_json(&report);
            if report.pass {
                Ok(())
            } else {
                Err(EXIT_PROPERTY)
            }
        }
        Command::Invariance { probe, instances } => {
            let report = harness::invariance(&probe.probe(), instances).map_err(fail)?;
            print_json(&report);
            if report.pass {
                Ok(())
            } else {
                Err(EXIT_PROPERTY)
            }
        }
        Command::Counts { config, h, w, json } => {
            let text = fs::read_to_string(&config).map_err(|e| fail(Error::config("--config", format!("{}: {e}", config.display()))))?;
            let cfg = parse_config(&text).map_err(fail)?;
            let (c, dh, dw) = cfg.input_shape();
            let report = harness::counts(&cfg.model, (c, h.unwrap_or(dh), w.unwrap_or(dw))).map_err(fail)?;
            if json {
                print_json(&report);
            } else {
                print!("{}", report.to_table());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
