mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssvep_align_core::{Error, ErrorCategory};

/// Cross-subject SSVEP alignment: synthesis, preprocessing, alignment
/// training, decoding and leave-one-subject-out evaluation.
#[derive(Debug, Parser)]
#[command(name = "ssvep-align", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic subjects (one EPOC file each) and a mixing sidecar.
    Synth(SynthArgs),
    /// Notch, decimate, select channels and cut the analysis window.
    Preprocess(PreprocessArgs),
    /// Train alignment networks or apply a trained one.
    #[command(subcommand)]
    Align(AlignCommand),
    /// Fit filter-bank TRCA on calibration trials and classify test trials.
    Decode(DecodeArgs),
    /// Leave-one-subject-out evaluation of calibration schemes.
    Evaluate(EvaluateArgs),
    /// Welch power spectrum of one channel.
    Psd(PsdArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML run configuration (uses its [synth] section).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides both generator seeds (mixing = SEED, noise = SEED + 1).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of subjects.
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Overrides the signal-to-noise ratio in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw EPOC file.
    #[arg(long)]
    pub input: PathBuf,
    /// Dataset manifest (TOML) holding the preprocessing constants.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output EPOC file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AlignCommand {
    /// Pre-train on all sources, fine-tune per source; writes K+1 checkpoints.
    Train(AlignTrainArgs),
    /// Transform source recordings with a checkpoint.
    Apply(AlignApplyArgs),
}

#[derive(Debug, Args)]
pub struct AlignTrainArgs {
    /// TOML run configuration (uses its [dan] section).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Target recording.
    #[arg(long)]
    pub target: PathBuf,
    /// Use only the first N trials per stimulus of the target as calibration.
    #[arg(long)]
    pub calib: Option<usize>,
    /// Source recordings.
    #[arg(long, num_args = 1.., required = true)]
    pub sources: Vec<PathBuf>,
    /// Output directory for checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AlignApplyArgs {
    /// DANM checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Source recordings to transform.
    #[arg(long, num_args = 1.., required = true)]
    pub input: Vec<PathBuf>,
    /// Output directory; one EPOC file per input.
    #[arg(long)]
    pub out: PathBuf,
    /// Subject id of the target, used to name the outputs.
    #[arg(long, default_value = "target")]
    pub target_id: String,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// TOML run configuration (uses its [decode] section).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Recording split into calibration (first trials) and test trials.
    #[arg(long)]
    pub input: PathBuf,
    /// Calibration trials per stimulus.
    #[arg(long, default_value_t = 2)]
    pub calib: usize,
    /// Extra calibration recordings (e.g. aligned sources) added to the pool.
    #[arg(long, num_args = 1..)]
    pub extra: Vec<PathBuf>,
    /// Number of filter-bank sub-bands.
    #[arg(long)]
    pub bands: Option<usize>,
    /// Per-trial predictions as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// TOML run configuration: [target]/[source] manifests or [synth],
    /// plus [task], [dan], [decode] and [output].
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides [output].dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Comma-separated schemes; `main`, `ablations` and `all` are groups.
    #[arg(long, default_value = "main")]
    pub schemes: String,
    /// Calibration trials per stimulus, comma-separated (a sweep).
    #[arg(long, value_delimiter = ',')]
    pub calib: Vec<usize>,
    /// Source-subject counts, comma-separated (switches to a source sweep).
    #[arg(long, value_delimiter = ',')]
    pub sources: Vec<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Validate the configuration and exit without touching data.
    #[arg(long)]
    pub dry_run: bool,
    /// Cell file format; both are written when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Record wall-clock seconds per cell (makes reports non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct PsdArgs {
    /// EPOC file.
    #[arg(long)]
    pub input: PathBuf,
    /// Channel name.
    #[arg(long)]
    pub channel: String,
    /// Trial index, or `all` to average the spectra of the selected trials.
    #[arg(long, default_value = "all")]
    pub trial: String,
    /// Restrict to trials of this stimulus.
    #[arg(long)]
    pub stimulus: Option<usize>,
    /// Welch segment length in samples (default: whole trial).
    #[arg(long)]
    pub seg_len: Option<usize>,
    /// Fractional overlap between segments.
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    /// Output CSV (`freq,power`).
    #[arg(long)]
    pub out: PathBuf,
}

/// Errors raised by the front end itself.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("selector out of range: {0}")]
    SelectorOutOfRange(String),
}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str, &'static str) {
    if let Some(e) = err.downcast_ref::<Error>() {
        let (code, cat) = match e.category() {
            ErrorCategory::Config => (2, "config"),
            ErrorCategory::Data => (3, "data"),
            ErrorCategory::Numerical => (4, "numerical"),
        };
        return (code, cat, e.kind());
    }
    if let Some(CliError::SelectorOutOfRange(_)) = err.downcast_ref::<CliError>() {
        return (2, "config", "SelectorOutOfRange");
    }
    (3, "data", "Other")
}

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "SSVEP_ALIGN_LOG";

fn init_logging() {
    let mut b = env_logger::Builder::new();
    match std::env::var(LOG_ENV) {
        Ok(filter) => {
            b.parse_filters(&filter);
        }
        Err(_) => {
            // the config file may raise the level later
            b.filter_level(log::LevelFilter::Trace);
        }
    }
    b.format_timestamp(None).init();
    if std::env::var_os(LOG_ENV).is_none() {
        log::set_max_level(log::LevelFilter::Warn);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, category, kind) = exit_code(&err);
            let record = serde_json::json!({
                "error": kind,
                "category": category,
                "message": format!("{err:#}"),
                "exit_code": code,
            });
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}
