use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use promptlab_core::preference::{pair_test, read_votes, results_report, Metric, DEFAULT_BASE};

use super::{emit, read_input, write_err};
use crate::config::pick;
use crate::{CliError, Context};

#[derive(Debug, Subcommand)]
pub enum PrefCmd {
    /// Win-tie-loss tallies and ELO ratings (same JSON as the survey's results endpoint).
    Elo(EloArgs),
    /// Binomial and McNemar tests for one method pair.
    Test(TestArgs),
}

#[derive(Debug, Args)]
pub struct EloArgs {
    #[arg(long)]
    pub votes: PathBuf,
    /// Restrict to one metric; all metrics plus a pooled view otherwise.
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long, env = "PROMPTLAB_BASE")]
    pub base: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub votes: PathBuf,
    #[arg(long)]
    pub method_a: String,
    #[arg(long)]
    pub method_b: String,
    /// Pool all metrics when omitted.
    #[arg(long)]
    pub metric: Option<Metric>,
}

fn load(path: &Path) -> Result<Vec<promptlab_core::VoteRecord>, CliError> {
    read_votes(&read_input(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn run(cmd: PrefCmd, ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        PrefCmd::Elo(args) => {
            let base = pick(args.base, ctx.file.pref.base, DEFAULT_BASE);
            if !base.is_finite() {
                return Err(CliError::Input("base rating must be finite".into()));
            }
            let votes = load(&args.votes)?;
            let report = results_report(&votes, args.metric, base)
                .map_err(|e| CliError::Input(e.to_string()))?;
            emit(args.out.as_deref(), out, &report.to_json())
        }
        PrefCmd::Test(args) => {
            let votes = load(&args.votes)?;
            let t = pair_test(&votes, args.metric, &args.method_a, &args.method_b)
                .map_err(|e| CliError::Input(e.to_string()))?;
            let text =
                serde_json::to_string_pretty(&t).map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(out, "{text}").map_err(write_err)
        }
    }
}
