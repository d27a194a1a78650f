//! The `lagrl` command line: `train`, `eval`, `diagnose` and `mle`.
//!
//! Settings resolve as flags over `--config` file over defaults. Every
//! command writes into a fresh directory `<out>/<env>_<model>_<seed>_<timestamp>`
//! and finishes with a `manifest.json` of content hashes.

pub mod commands;
pub mod config;
pub mod rundir;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for bad flags or configuration.
pub const EXIT_USAGE: i32 = 1;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lagrl", version, about = "Lagrangian model-based reinforcement learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an actor-critic on a learned (or true) model.
    Train(TrainArgs),
    /// Evaluate a checkpoint's mean-mode actor on the true simulator.
    Eval(EvalArgs),
    /// Compare a checkpoint's dynamics model against the simulator.
    Diagnose(DiagnoseArgs),
    /// Maximal Lyapunov exponent of closed-loop systems.
    Mle(MleArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML file of settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parent directory for the run directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    /// No per-episode progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long, value_parser = ["dnn", "lnn"])]
    pub model: Option<String>,
    /// Total episodes, random ones included.
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Training checkpoint.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Must match the checkpoint's environment when given.
    #[arg(long)]
    pub env: Option<String>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Training checkpoint.
    #[arg(long)]
    pub policy: Option<String>,
    /// Number of rollouts.
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_parser = ["exact", "trapezoidal"])]
    pub work_rule: Option<String>,
    /// Must match the checkpoint's environment when given.
    #[arg(long)]
    pub env: Option<String>,
}

#[derive(Debug, Args)]
pub struct MleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub env: Option<String>,
    /// Checkpoint path or `zero`; repeat to average over several.
    #[arg(long)]
    pub policy: Vec<String>,
    #[arg(long, value_parser = ["finite_time", "standard"])]
    pub mode: Option<String>,
    /// Initial states per policy.
    #[arg(long)]
    pub starts: Option<usize>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(dir) => {
            println!("{}", dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
