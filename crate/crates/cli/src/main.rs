//! `volbench` command-line driver.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] volbench::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use volbench::ErrorCategory;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Io => 4,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "volbench", version, about = "Evaluate and rank 3D object detectors on volumetric datasets")]
struct Cli {
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, env = "VOLBENCH_THREADS", default_value_t = 0)]
    threads: usize,
    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resample and normalize the images and masks of a manifest
    Preprocess(PreprocessArgs),
    /// Convert mask ground truth into an explicit box manifest
    Extract(ExtractArgs),
    /// Score prediction files against a manifest
    Evaluate(EvalArgs),
    /// Bootstrap rank distributions and deltas against a baseline
    Rank(RankArgs),
    /// Combine evaluation outputs into one method-by-dataset table
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// ct (clip to 0.5/99.5 percentiles) or mri (no clipping)
    #[arg(long, default_value = "ct")]
    pub modality: String,
    /// Target spacing x,y,z in mm
    #[arg(long)]
    pub target_spacing: Option<String>,
    /// trilinear or nearest (images only; masks always use nearest)
    #[arg(long)]
    pub interpolation: Option<String>,
    /// Percentile clip bounds lo,hi
    #[arg(long, conflicts_with = "no_clip")]
    pub clip: Option<String>,
    #[arg(long)]
    pub no_clip: bool,
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output manifest path
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Prediction file as <method>=<path> (repeatable)
    #[arg(long = "pred")]
    pub preds: Vec<String>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Use every image in the manifest regardless of split
    #[arg(long)]
    pub all_splits: bool,
    #[arg(long)]
    pub iou: Option<f64>,
    /// Comma-separated FPPI thresholds
    #[arg(long)]
    pub fppi: Option<String>,
    /// iou[:t], half-diameter, radius or radius:<mm>
    #[arg(long)]
    pub criterion: Option<String>,
    /// fp or ignore
    #[arg(long)]
    pub duplicate_policy: Option<String>,
    /// luna16, pn9 or ctaa
    #[arg(long)]
    pub official: Option<String>,
    /// all-points or 101
    #[arg(long)]
    pub ap_interpolation: Option<String>,
    #[arg(long)]
    pub min_score: Option<f64>,
    #[arg(long)]
    pub nms_iou: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// fail or warn on prediction image ids missing from the manifest
    #[arg(long, default_value = "fail")]
    pub unknown_images: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, default_value_t = volbench::ranking::DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// map, froc or both
    #[arg(long, default_value = "both")]
    pub metric: String,
    /// fractional or min
    #[arg(long, default_value = "fractional")]
    pub tie_mode: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation output directories or evaluation.json files
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match cli.command {
        Command::Preprocess(a) => commands::preprocess(&a),
        Command::Extract(a) => commands::extract(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Rank(a) => commands::rank(&a, cli.threads),
        Command::Report(a) => commands::report(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
