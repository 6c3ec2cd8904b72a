use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Model checking and invariant inference for ReLU policy networks.
#[derive(Debug, Parser)]
#[command(name = "drlcheck", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for randomized procedures.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Wall-clock budget in seconds.
    #[arg(long, global = true)]
    pub timeout: Option<f64>,
    /// Write the machine-readable report to this path.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Print the machine-readable report instead of the summary.
    #[arg(long, global = true)]
    pub json: bool,
    /// LP feasibility tolerance.
    #[arg(long, global = true)]
    pub tau_lp: Option<f64>,
    /// Witness replay tolerance.
    #[arg(long, global = true)]
    pub tau_val: Option<f64>,
    /// Margin used to close strict inequalities.
    #[arg(long, global = true)]
    pub delta_strict: Option<f64>,
    /// Branch-and-bound node limit per query.
    #[arg(long, global = true)]
    pub node_limit: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a safety or liveness property of a transition system.
    Check(CheckArgs),
    /// Infer an output or input bound for a single step.
    Invariant(InvariantArgs),
    /// Solve a one-shot verification query.
    Solve(SolveArgs),
    /// Brute-force reference procedures.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Portfolio,
    Bmc,
    Kind,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub property: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Portfolio)]
    pub method: MethodArg,
    /// Depth for `bmc` (all depths up to k) and `kind` (exactly k).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub k_max: usize,
    /// Fields to free, e.g. `older-than:1` or `0:1,1:latency_ratio`.
    #[arg(long)]
    pub abstract_fields: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TemplateArg {
    Output,
    Input,
}

#[derive(Debug, Args)]
pub struct InvariantArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Search configuration file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub template: Option<TemplateArg>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub pkt: Option<f64>,
    #[arg(long)]
    pub precision: Option<f64>,
    #[arg(long)]
    pub output_index: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub property: PathBuf,
    /// Network file; overrides the property's `network` entry.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Unroll this transition spec to the property's copy count first.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, requires = "spec")]
    pub abstract_fields: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Grid search for a satisfying point, compared with the solver.
    Grid(GridArgs),
    /// Breadth-first reachability of a bad state over grid states.
    Reach(ReachArgs),
    /// Random execution of a transition system.
    Trace(TraceArgs),
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub property: PathBuf,
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Grid pitch.
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    /// Maximum number of grid points.
    #[arg(long, default_value_t = drlcheck::oracle::DEFAULT_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct ReachArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Safety property whose bad states are searched for.
    #[arg(long)]
    pub property: PathBuf,
    #[arg(long)]
    pub depth: usize,
    /// Grid pitch per field, comma separated; one value applies to all.
    #[arg(long, value_delimiter = ',', required = true)]
    pub pitch: Vec<f64>,
    #[arg(long, default_value_t = drlcheck::oracle::DEFAULT_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub length: usize,
}
