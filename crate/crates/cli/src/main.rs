mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use survshape::ErrorClass;

#[derive(Parser)]
#[command(
    name = "survshape",
    version,
    about = "Explain black-box survival models with neural additive models"
)]
struct Cli {
    /// TOML parameter file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a random survival forest and report train/test C-indices.
    Fit(FitArgs),
    /// Explain a fitted forest locally (around one row) or globally.
    Explain(ExplainArgs),
    /// Generate a synthetic Cox dataset with known log-risk.
    Synth(SynthArgs),
    /// C-index of a forest and a trained surrogate on a dataset.
    Eval(EvalArgs),
}

#[derive(Args)]
pub struct ForestFlags {
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub min_leaf_events: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub features_per_split: Option<usize>,
    #[arg(long)]
    pub gamma_fraction: Option<f64>,
    #[arg(long)]
    pub bootstrap: Option<bool>,
    /// Seed for tree construction.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shuffles per feature for permutation importance (0 disables it).
    #[arg(long)]
    pub importance_repeats: Option<usize>,
}

#[derive(Args)]
pub struct SplitFlags {
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub forest: ForestFlags,
    #[command(flatten)]
    pub split: SplitFlags,
}

#[derive(Args)]
pub struct NamFlags {
    /// Hidden layer sizes, e.g. `64,32`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub forest: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to the schema stored in the forest.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// `local` or `global`.
    #[arg(long)]
    pub mode: Option<String>,
    /// `base`, `lasso` or `shortcut`.
    #[arg(long)]
    pub variant: Option<String>,
    /// Local mode: explain this data row (0-based, after dropped rows).
    #[arg(long)]
    pub row: Option<usize>,
    /// Local mode: raw feature values in schema order, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub center: Option<Vec<String>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Generated points in local mode.
    #[arg(long)]
    pub points: Option<usize>,
    /// Perturbation std as a fraction of the largest pairwise distance.
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub curve_points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub svg: Option<bool>,
    #[command(flatten)]
    pub nam: NamFlags,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    /// `linear:b1,b2,...` or `additive:f1,f2,...` with f in
    /// `zero`, `linear:c`, `sine:w`, `quadratic:c`.
    #[arg(long)]
    pub psi: Option<String>,
    /// Weibull baseline scale.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Weibull baseline shape.
    #[arg(long)]
    pub shape: Option<f64>,
    /// Target censored fraction.
    #[arg(long)]
    pub censoring: Option<f64>,
    /// `uniform` (on [-1, 1]) or `normal`.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub forest: PathBuf,
    /// Surrogate checkpoint written by `explain` (model.json).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluate on the forest's held-out rows only instead of every row.
    #[arg(long)]
    pub test_only: bool,
}

pub enum CliError {
    Usage(String),
    Core(survshape::Error),
}

impl From<survshape::Error> for CliError {
    fn from(e: survshape::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            },
        }
    }

    fn line(&self) -> String {
        let (class, msg) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Core(e) => match e.class() {
                ErrorClass::Data => {
                    let text = e.to_string();
                    (
                        "data",
                        text.strip_prefix("data error: ")
                            .unwrap_or(&text)
                            .to_string(),
                    )
                }
                ErrorClass::Numeric => ("numeric", e.to_string()),
            },
        };
        format!("error: {class}: {}", msg.replace('\n', " "))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let file = match &cli.config {
        Some(path) => match config::FileConfig::load(path) {
            Ok(c) => c,
            Err(msg) => {
                eprintln!("{}", CliError::Usage(msg).line());
                return ExitCode::from(2);
            }
        },
        None => config::FileConfig::default(),
    };
    let result = match cli.command {
        Command::Fit(args) => commands::fit(args, &file),
        Command::Explain(args) => commands::explain(args, &file),
        Command::Synth(args) => commands::synth(args, &file),
        Command::Eval(args) => commands::eval(args, &file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code())
        }
    }
}
