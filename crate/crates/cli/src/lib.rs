//! Stage-oriented front end: `sample`, `evaluate`, `build-corpus`,
//! `analyze`, `report`. Stages talk only through files.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use trimrank_core::persistence::ReportFormat;

pub use config::{PipelineConfig, Profile};

/// Failure of a stage, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, bad flags, or malformed input files.
    #[error("{0}")]
    Invalid(String),
    /// Backend or output failures.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "trimrank", version, about = "Sample, score, filter and analyze reasoning-reranker traces")]
pub struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample K trajectories per query and store them.
    Sample(SampleArgs),
    /// Parse and score samples against qrels; write an evaluation report.
    Evaluate(EvaluateArgs),
    /// Filter scored samples and write the SFT corpus plus filter stats.
    BuildCorpus(BuildCorpusArgs),
    /// Per-trace redundancy metrics and their averages.
    Analyze(AnalyzeArgs),
    /// Compare evaluation reports and emit the length/quality curve.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: Backend,
    #[arg(long, value_enum, default_value = "distill")]
    pub profile: Profile,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the profile's samples per query.
    #[arg(long)]
    pub k: Option<u32>,
    /// Candidates per query taken from the run file.
    #[arg(long, default_value_t = 20)]
    pub depth: usize,
    /// Query id, TAB, query text.
    #[arg(long)]
    pub topics: Option<PathBuf>,
    /// First-stage run in TREC format.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Doc id, TAB, passage text.
    #[arg(long)]
    pub collection: Option<PathBuf>,
    /// Lets the mock produce grade-aware orders.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Where to write the samples with scores attached.
    #[arg(long)]
    pub scored_out: Option<PathBuf>,
    #[arg(long, default_value = "model")]
    pub tag: String,
    #[arg(long)]
    pub buckets: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    /// Scored samples from `evaluate`.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long)]
    pub collection: Option<PathBuf>,
    /// Per-query filter statistics.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Accept an empty sample file.
    #[arg(long)]
    pub allow_empty: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, default_value = "model")]
    pub tag: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation reports (JSON); the first is the length baseline.
    #[arg(long = "reports", num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub buckets: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Comparison rows.
    #[arg(long)]
    pub out: PathBuf,
    /// Length-bucket curve points.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

/// Loads the config and runs one command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| CliError::Invalid(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Sample(a) => commands::cmd_sample(&config, &a),
        Command::Evaluate(a) => commands::cmd_evaluate(&config, &a),
        Command::BuildCorpus(a) => commands::cmd_build_corpus(&config, &a),
        Command::Analyze(a) => commands::cmd_analyze_redundancy(&a),
        Command::Report(a) => commands::cmd_report(&config, &a),
    }
}
