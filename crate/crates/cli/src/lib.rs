//! The `masque` command line: synthesize data, train, decode, evaluate,
//! gradient-check and summarize decode traces.
//!
//! [`run`] is the whole program; the binary only forwards its arguments and
//! exit code. Exit codes: 0 success, 1 usage or validation error, 2 I/O error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod files;

pub use commands::decode::Prediction;
pub use commands::eval::{score, Score};
pub use commands::gradcheck::{check as gradient_report, TOLERANCE as GRADCHECK_TOLERANCE, TOY_PRESET};
pub use error::CliError;

/// Environment variable consulted when a command gets no `--seed`.
pub const SEED_ENV: &str = "MASQUE_SEED";

#[derive(Debug, Parser)]
#[command(name = "masque", version, about = "Style-conditioned answer generation over ranked passages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic key-value lookup corpus as JSONL.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint directory.
    Train(TrainArgs),
    /// Greedily decode answers for every example of a corpus.
    Decode(DecodeArgs),
    /// Score predictions against a corpus and write a CSV report.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients of the total loss.
    Gradcheck(GradcheckArgs),
    /// Summarize a decode trace into answer lengths and mean mixture weights.
    Trace(TraceArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of examples.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    unanswerable_frac: f64,
    /// Passages per example.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Size of the key pool.
    #[arg(long, default_value_t = 50)]
    n_keys: usize,
    /// Prefix of the generated query ids.
    #[arg(long, default_value = "q")]
    id_prefix: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set model.d=16` or `--set data.styles=["qa"]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
    /// Log the losses every this many steps (0 turns progress off).
    #[arg(long, default_value_t = 100)]
    log_every: u64,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    style: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write one JSON record per decoding step.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Weight combined attention by the gold relevance labels.
    #[arg(long)]
    gold_ranker: bool,
    /// Emit an empty answer when P(answerable) is below this.
    #[arg(long, default_value_t = 0.5)]
    answerable_threshold: f64,
    /// Add a digest of the reader activations to every prediction.
    #[arg(long)]
    debug: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated subset of rouge,bleu,map,mrr,f1,em,copy.
    #[arg(long, default_value = "rouge,bleu,map,mrr,f1")]
    metrics: String,
    #[arg(long)]
    out: PathBuf,
    /// A second prediction file scored the same way, reported side by side.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Drop punctuation before scoring text metrics.
    #[arg(long)]
    strip_punctuation: bool,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Without `--config` the bundled toy preset is checked.
    #[command(flatten)]
    config: ConfigArgs,
    /// Coordinates sampled per parameter tensor.
    #[arg(long, default_value_t = 3)]
    coords: usize,
    /// Initial step of the extrapolated central differences.
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    /// Examples in the checked batch.
    #[arg(long, default_value_t = 2)]
    examples: usize,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .is_test(cfg!(test))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Decode(a) => commands::decode::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Gradcheck(a) => commands::gradcheck::run(a),
        Command::Trace(a) => commands::trace::run(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// `flag`, then `MASQUE_SEED`, then `fallback`.
fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(fallback),
    }
}
