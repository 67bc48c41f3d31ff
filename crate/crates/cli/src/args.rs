use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use resid_core::model::Variant;

pub const SESSION_ENV: &str = "RESID_SESSION";

#[derive(Debug, Parser)]
#[command(
    name = "resid",
    version,
    about = "Reliability estimation under imperfect debugging"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Identify chunks in C sources and write instrumented copies.
    Chunk(ChunkArgs),
    /// Manage debugging sessions.
    #[command(subcommand)]
    Session(SessionCommand),
    /// Append run records to a session.
    Ingest(IngestArgs),
    /// Estimate chunk bugginess from a session.
    Estimate(EstimateArgs),
    /// Render a chunk heat map from the latest estimate.
    Report(ReportArgs),
    /// Simulate debugging sessions on a program graph.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct SessionDir {
    /// Session directory.
    #[arg(long, env = SESSION_ENV, default_value = "resid-session")]
    pub session: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Bisection bracket is [epsilon, 1 - epsilon].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Stop when the bracket is narrower than this.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ChunkArgs {
    /// Source files.
    pub sources: Vec<PathBuf>,
    /// Directory for the chunk database and instrumented sources.
    #[arg(long)]
    pub out: PathBuf,
    /// Classification rules for per-class sessions.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Reuse an existing chunk database instead of re-identifying chunks.
    #[arg(long)]
    pub chunk_db: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Create an empty session.
    New(SessionNewArgs),
}

#[derive(Debug, Args)]
pub struct SessionNewArgs {
    #[command(flatten)]
    pub dir: SessionDir,
    /// Debugging inefficiency.
    #[arg(long, default_value_t = 0.9)]
    pub alpha: f64,
    #[arg(long, default_value = "homogeneous")]
    pub variant: Variant,
    /// Chunk database from `resid chunk`; required by per-line and per-class.
    #[arg(long)]
    pub chunk_db: Option<PathBuf>,
    /// Inefficiency for one chunk class, as LABEL=ALPHA. Repeatable.
    #[arg(long = "class-alpha", value_parser = parse_class_alpha)]
    pub class_alpha: Vec<(String, f64)>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

fn parse_class_alpha(s: &str) -> Result<(String, f64), String> {
    let (label, alpha) = s
        .split_once('=')
        .ok_or_else(|| format!("expected LABEL=ALPHA, got {s:?}"))?;
    let alpha = alpha
        .parse()
        .map_err(|_| format!("{alpha:?} is not a number"))?;
    Ok((label.to_string(), alpha))
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub dir: SessionDir,
    /// JSON-lines run records ("-" for stdin).
    #[arg(conflicts_with = "trace")]
    pub records: Option<PathBuf>,
    /// Chunk log of a single run, one chunk id per line.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Chunk where the run's bug was located. Repeatable.
    #[arg(long, requires = "trace")]
    pub bug: Vec<String>,
    /// The located bug was not removed.
    #[arg(long, requires = "bug")]
    pub not_removed: bool,
    /// Run identifier for --trace (defaults to run-<seq>).
    #[arg(long, requires = "trace")]
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub dir: SessionDir,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Result file (default: estimate.json in the session).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Dot,
    Html,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub dir: SessionDir,
    #[arg(long, value_enum, default_value_t = ReportFormat::Html)]
    pub format: ReportFormat,
    /// Output file (default: report.dot or report.html in the session).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Builtin graph name (fig1-if, fig2-loop, fig3-flowchart) or a graph file.
    #[arg(long, default_value = "fig3-flowchart")]
    pub graph: String,
    /// True bugginess values, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.6,0.9")]
    pub p: Vec<f64>,
    /// Debugging inefficiencies, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.9")]
    pub alpha: Vec<f64>,
    /// Runs per session.
    #[arg(long, default_value_t = 50)]
    pub runs: u32,
    /// Sessions per (p, alpha) cell.
    #[arg(long, default_value_t = 100)]
    pub reps: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Probability that a visit to a buggy chunk fails the run.
    #[arg(long, default_value_t = 1.0)]
    pub trigger: f64,
    /// Also write a 999-point log-likelihood curve and the run log of one
    /// session per cell.
    #[arg(long)]
    pub curve: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
