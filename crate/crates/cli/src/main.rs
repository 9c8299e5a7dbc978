//! Command-line entry point: corpus synthesis, training, enhancement,
//! evaluation, the twelve-objective comparison sweep, and gradient checks.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod compare;
mod enhance_cmd;
mod eval;
mod gradcheck_cmd;
mod synth;
mod train;

#[derive(Parser)]
#[command(
    name = "masklab",
    version,
    about = "Time-frequency speech enhancement lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of WAV files plus a manifest
    Synth(SynthArgs),
    /// Train an estimator for one objective on a synthesized corpus
    Train(TrainArgs),
    /// Enhance a noisy WAV file with a trained model
    Enhance(EnhanceArgs),
    /// Report proxy quality metrics for an estimate against its reference
    Eval(EvalArgs),
    /// Train and evaluate all twelve objectives, emitting a results grid
    Compare(CompareArgs),
    /// Verify analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Directory to write wav/ files and manifest.tsv into
    #[arg(long)]
    pub corpus_dir: PathBuf,
    /// Total utterances; validation and test each take a seventh
    #[arg(long, default_value_t = 280)]
    pub utterances: usize,
    /// Utterance duration in seconds
    #[arg(long, default_value_t = 0.4)]
    pub seconds: f64,
    /// Comma-separated noise kinds: white, ssn_proxy, babble_proxy
    #[arg(long, default_value = "white", value_delimiter = ',')]
    pub noise: Vec<String>,
    /// Comma-separated SNR grid in dB (default: 9 steps from -20 to 20)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Objective id, e.g. stsa-ma or lsa-dm
    #[arg(long)]
    pub objective: String,
    /// Corpus directory created by `synth`
    #[arg(long)]
    pub corpus_dir: PathBuf,
    /// Checkpoint output path
    #[arg(long)]
    pub model_out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub epochs: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train without the auxiliary clean-envelope features
    #[arg(long)]
    pub audio_only: bool,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Initial learning rate
    #[arg(long, default_value_t = 4e-4)]
    pub lr: f64,
}

#[derive(Args)]
pub struct EnhanceArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    pub model_in: PathBuf,
    /// Noisy input WAV (16 kHz mono 16-bit PCM)
    #[arg(long)]
    pub input: PathBuf,
    /// Enhanced output WAV
    #[arg(long)]
    pub output: PathBuf,
    /// Clean reference WAV, required by models trained with aux features
    #[arg(long)]
    pub clean: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Clean reference WAV
    #[arg(long)]
    pub reference: PathBuf,
    /// Estimate to score
    #[arg(long)]
    pub estimate: PathBuf,
    /// Optional unprocessed noisy WAV; adds improvement rows
    #[arg(long)]
    pub noisy: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Tab-separated report output path
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Total utterances; validation and test each take a seventh
    #[arg(long, default_value_t = 280)]
    pub utterances: usize,
    #[arg(long, default_value_t = 0.4)]
    pub seconds: f64,
    /// Comma-separated noise kinds used for the corpus
    #[arg(long, default_value = "white", value_delimiter = ',')]
    pub noise: Vec<String>,
    /// Training epochs per objective
    #[arg(long, default_value_t = 12)]
    pub epochs: u32,
    /// Train without the auxiliary clean-envelope features
    #[arg(long)]
    pub audio_only: bool,
}

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth(args) => synth::run(args),
        Command::Train(args) => train::run(args),
        Command::Enhance(args) => enhance_cmd::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Compare(args) => compare::run(args),
        Command::Gradcheck(args) => gradcheck_cmd::run(args),
    }
}
