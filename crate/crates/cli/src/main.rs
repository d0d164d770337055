//! `argfill`: train, evaluate and inspect template-filling argument extractors.

mod commands;
mod config;
mod failure;
mod output;
mod source;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use argfill_core::evaluation::EvalMode;
use argfill_core::training::Strategy;
use clap::{Args, Parser, Subcommand};

use source::{DataFormat, SplitName};

fn parse<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

#[derive(Parser)]
#[command(name = "argfill", version, about = "Template-filling multimedia event argument extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus from a spec file.
    Synth(SynthArgs),
    /// Train a model and write its checkpoint and manifest.
    Train(TrainArgs),
    /// Write predicted arguments for every event mention.
    Predict(PredictArgs),
    /// Score predictions against gold annotations.
    Eval(PredictArgs),
    /// Re-threshold scores over a grid of per-modality thresholds.
    Sweep(SweepArgs),
    /// Train and evaluate ablated variants against a baseline.
    Ablate(AblateArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML config file with [training], [model] and [eval] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; relative paths are resolved under $ARGFILL_OUTPUT_ROOT when set.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Synthetic spec (.toml), M2E2 directory, or instance/document JSONL.
    #[arg(long)]
    data: PathBuf,
    /// Override format detection: synthetic, m2e2, documents or instances.
    #[arg(long, value_parser = parse::<DataFormat>)]
    format: Option<DataFormat>,
    /// Split of a synthetic corpus to read.
    #[arg(long, value_enum)]
    split: Option<SplitName>,
    /// Detector boxes for an M2E2 directory.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Ontology TOML; defaults to the data's own, the checkpoint's, or M2E2.
    #[arg(long)]
    ontology: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Spec TOML; defaults are used for missing keys.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Clone)]
struct TrainOverrides {
    #[arg(long, value_parser = parse::<Strategy>)]
    strategy: Option<Strategy>,
    /// Seeds both training and model initialisation.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    text_epochs: Option<usize>,
    #[arg(long)]
    visual_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Number of checkpoint-selection evaluations per stage.
    #[arg(long)]
    evaluations: Option<usize>,
    /// Selection split; synthetic specs bring their own held-out split.
    #[arg(long)]
    heldout: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    overrides: TrainOverrides,
    /// Train on the data ontology only and record this one as the evaluation target.
    #[arg(long)]
    target_ontology: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EvalArgs {
    /// Checkpoint file or training output directory.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_parser = parse::<EvalMode>)]
    mode: Option<EvalMode>,
    /// Predicted trigger records (JSONL) for pred_triggers mode.
    #[arg(long)]
    triggers: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long)]
    tau_text: Option<f64>,
    #[arg(long)]
    tau_vis: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    eval: EvalArgs,
    /// Comma-separated text thresholds; defaults to 0.1..0.9.
    #[arg(long, value_delimiter = ',')]
    grid_text: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    grid_vis: Vec<f64>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    overrides: TrainOverrides,
    /// Comma-separated variants: no_cross_attention, no_joint_prompts, no_prompts.
    #[arg(long, value_delimiter = ',', default_value = "no_cross_attention,no_joint_prompts,no_prompts")]
    suite: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("argfill: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
