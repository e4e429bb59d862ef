use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{LossKind, ScheduleKind, SimMode};

/// Dense network codes on line networks: lemma validation, delay
/// simulation and bound tables.
#[derive(Debug, Parser)]
#[command(name = "linecode", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the structured-matrix rank laws against Monte Carlo and exact
    /// enumeration.
    ValidateLemmas(RunArgs),
    /// Estimate coding delays and compare them with the matching bounds.
    Simulate(RunArgs),
    /// Evaluate the closed-form bounds on a parameter grid.
    BoundsTable(RunArgs),
    /// Raw and average delays on one shared code/traffic grid, against every
    /// applicable bound.
    Compare(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ValidateLemmas(_) => "validate-lemmas",
            Command::Simulate(_) => "simulate",
            Command::BoundsTable(_) => "bounds-table",
            Command::Compare(_) => "compare",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::ValidateLemmas(a)
            | Command::Simulate(a)
            | Command::BoundsTable(a)
            | Command::Compare(a) => a,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub network: NetworkFlags,
}

#[derive(Debug, Default, Args)]
pub struct Common {
    /// JSON experiment config.
    #[arg(long, env = "LINECODE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "LINECODE_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per CPU). Never changes results.
    #[arg(long, env = "LINECODE_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, env = "LINECODE_EPSILON")]
    pub epsilon: Option<f64>,
    /// Confidence level of the reported upper bound on the quantile.
    #[arg(long, env = "LINECODE_CONFIDENCE")]
    pub confidence: Option<f64>,
    /// Sessions for the raw delay, or samples per cell for validate-lemmas.
    #[arg(long, env = "LINECODE_TRIALS")]
    pub trials: Option<usize>,
    #[arg(long, env = "LINECODE_CODES")]
    pub codes: Option<usize>,
    #[arg(long, env = "LINECODE_TRAFFICS_PER_CODE")]
    pub traffics_per_code: Option<usize>,
    #[arg(long, value_enum, env = "LINECODE_MODE")]
    pub mode: Option<SimMode>,
    /// Value of f(k) for the unique-worst-link average bound (default log2 k).
    #[arg(long)]
    pub f_k: Option<f64>,
    /// Write every sampled traffic to this directory.
    #[arg(
        long,
        env = "LINECODE_RECORD_TRAFFIC",
        conflicts_with = "replay_traffic"
    )]
    pub record_traffic: Option<PathBuf>,
    /// Read traffics from a directory written by --record-traffic.
    #[arg(long, env = "LINECODE_REPLAY_TRAFFIC")]
    pub replay_traffic: Option<PathBuf>,
    /// Assert every bound comparison.
    #[arg(long, conflicts_with = "report_only")]
    pub assert: bool,
    /// Never fail on a comparison; only report it.
    #[arg(long)]
    pub report_only: bool,
    /// Output file (default stdout).
    #[arg(long, env = "LINECODE_OUT")]
    pub out: Option<PathBuf>,
    /// Write the per-event trace of the first session here.
    #[arg(long)]
    pub export_trace: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct NetworkFlags {
    #[arg(long)]
    pub links: Option<usize>,
    /// Number of message vectors k.
    #[arg(long, short = 'k')]
    pub messages: Option<usize>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleKind>,
    #[arg(long, value_enum)]
    pub loss: Option<LossKind>,
    /// Link success probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    /// Poisson rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    #[arg(long)]
    pub horizon: Option<f64>,
}
