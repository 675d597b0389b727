use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pbr_core::check::{check_document, CheckThresholds};
use pbr_core::corpus::{
    parse_document, read_jsonl, synth_generate, write_jsonl, ContractDocument, SynthConfig,
};
use pbr_core::train_eval::{
    evaluate, load_model, save_model, train_with, MetricsReport, ModelConfig, PbrModel, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "pbr",
    version,
    about = "Pair-wise blank resolution for contract inconsistency checking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and print its pair census.
    Gen {
        /// Generator settings as JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on a JSONL corpus, writing one JSON log line per epoch.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON object with optional `model` and `train` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path for the best-dev model.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score every labeled pair of a corpus and print metrics as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Flag inconsistent fills in a plain-text contract.
    Check {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Contract text with `[[id|fill]]` markers.
        contract: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        tau_hi: f64,
        #[arg(long, default_value_t = 0.1)]
        tau_lo: f64,
    },
    /// Dump pooling and update attention for one blank.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        contract: PathBuf,
        blank_id: String,
    },
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    model: ModelConfig,
    train: TrainConfig,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("invalid config {}", path.display()))
}

fn read_corpus(path: &Path) -> Result<Vec<ContractDocument>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_jsonl(BufReader::new(file)).with_context(|| format!("invalid corpus {}", path.display()))
}

fn read_checkpoint(path: &Path) -> Result<PbrModel> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    load_model(BufReader::new(file))
        .with_context(|| format!("invalid checkpoint {}", path.display()))
}

fn read_contract(path: &Path) -> Result<ContractDocument> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let doc_id = path
        .file_stem()
        .map_or_else(|| "contract".into(), |s| s.to_string_lossy().into_owned());
    parse_document(&doc_id, &text).with_context(|| format!("cannot parse {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

/// Writes one line to stdout; a reader that hung up early is not an error.
fn emit(line: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    emit(&serde_json::to_string_pretty(value)?)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { config, out, seed } => {
            let mut cfg: SynthConfig = config
                .as_deref()
                .map(read_json)
                .transpose()?
                .unwrap_or_default();
            if let Some(seed) = seed {
                cfg.rng_seed = seed;
            }
            let (docs, report) = synth_generate(&cfg)?;
            let mut w = create(&out)?;
            write_jsonl(&mut w, &docs)?;
            w.flush()?;
            emit(
                &serde_json::json!({
                    "documents": report.documents,
                    "blanks": report.blanks,
                    "pairs": report.pairs,
                    "positives": report.positives,
                    "negatives": report.negatives,
                    "pos_neg_ratio": format!("1:{:.2}", report.ratio()),
                })
                .to_string(),
            )?;
        }
        Command::Train {
            corpus,
            config,
            out,
            seed,
        } => {
            let mut cfg: RunConfig = config
                .as_deref()
                .map(read_json)
                .transpose()?
                .unwrap_or_default();
            if let Some(seed) = seed {
                cfg.train.rng_seed = seed;
            }
            let docs = read_corpus(&corpus)?;
            // Fail on an unwritable destination before spending time on training.
            let mut w = create(&out)?;
            let outcome = train_with(&docs, &cfg.model, &cfg.train, |e| {
                // A closed stdout must not abort training.
                let _ = emit(&serde_json::to_string(e).expect("epoch log serializes"));
            })?;
            save_model(&mut w, &outcome.model)?;
            w.flush()?;
            eprintln!(
                "best epoch {}: dev balanced accuracy {:.4}, F1 {:.4}",
                outcome.best_epoch, outcome.dev_metrics.balanced_accuracy, outcome.dev_metrics.f1
            );
        }
        Command::Eval {
            checkpoint,
            corpus,
            threshold,
        } => {
            let model = read_checkpoint(&checkpoint)?;
            let docs = read_corpus(&corpus)?;
            let metrics = evaluate(&model, &docs, threshold)?;
            let report = MetricsReport::new(
                metrics,
                threshold,
                &docs,
                serde_json::to_value(&model.config)?,
            )?;
            emit(&report.to_json()?)?;
        }
        Command::Check {
            checkpoint,
            contract,
            tau_hi,
            tau_lo,
        } => {
            let thresholds = CheckThresholds { tau_hi, tau_lo };
            thresholds.validate()?;
            let model = read_checkpoint(&checkpoint)?;
            let doc = read_contract(&contract)?;
            print_json(&check_document(&model, &doc, thresholds)?)?;
        }
        Command::Inspect {
            checkpoint,
            contract,
            blank_id,
        } => {
            let model = read_checkpoint(&checkpoint)?;
            let doc = read_contract(&contract)?;
            print_json(&model.trace(&doc, &blank_id)?)?;
        }
    }
    Ok(())
}

/// 1 for bad input, configuration or files; 2 for failures of the numerical
/// machinery itself.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<pbr_core::Error>() {
        return if e.is_user_error() { 1 } else { 2 };
    }
    if err.downcast_ref::<std::io::Error>().is_some()
        || err.downcast_ref::<serde_json::Error>().is_some()
    {
        return 1;
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
