//! `promptlab` command-line front end.

mod cmd;
pub mod config;
pub mod select;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::FileConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "promptlab",
    version,
    about = "Structured prompt tooling: corpora, pre-sampling, metrics and preference surveys"
)]
pub struct Cli {
    /// TOML config file (flags and environment override it).
    #[arg(long, global = true, env = "PROMPTLAB_CONFIG")]
    pub config: Option<PathBuf>,
    /// Global RNG seed.
    #[arg(long, global = true, env = "PROMPTLAB_SEED")]
    pub seed: Option<u64>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, env = "PROMPTLAB_LOG_LEVEL")]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build language-model training corpora from caption records.
    Forge {
        #[command(subcommand)]
        cmd: cmd::forge::ForgeCmd,
    },
    /// Expand user prompts through a text generator.
    Presample {
        #[command(subcommand)]
        cmd: cmd::presample::PresampleCmd,
    },
    /// Diversity and fidelity metrics over embeddings and scores.
    Eval {
        #[command(subcommand)]
        cmd: cmd::eval::EvalCmd,
    },
    /// Preference analysis over a vote log.
    Pref {
        #[command(subcommand)]
        cmd: cmd::pref::PrefCmd,
    },
    /// Run the preference survey service.
    Serve(cmd::serve::ServeArgs),
}

/// Settings shared by every subcommand after config resolution.
pub struct Context {
    pub file: FileConfig,
    pub seed: Option<u64>,
}

impl Context {
    pub fn seed_or(&self, default: u64) -> u64 {
        self.seed.unwrap_or(default)
    }
}

fn init_logging(level: &str) -> Result<(), CliError> {
    let level: tracing::Level = level
        .parse()
        .map_err(|_| CliError::Input(format!("unknown log level {level:?}")))?;
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .try_init();
    Ok(())
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let level = config::pick(cli.log_level.clone(), file.log_level.clone(), "warn".into());
    init_logging(&level)?;
    let ctx = Context {
        seed: cli.seed.or(file.seed),
        file,
    };
    match cli.command {
        Command::Forge { cmd } => cmd::forge::run(cmd, &ctx, out),
        Command::Presample { cmd } => cmd::presample::run(cmd, &ctx, out),
        Command::Eval { cmd } => cmd::eval::run(cmd, &ctx, out),
        Command::Pref { cmd } => cmd::pref::run(cmd, &ctx, out),
        Command::Serve(args) => cmd::serve::run(args, &ctx, out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Results go to `out`, diagnostics to stderr.
pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli, out).and_then(|_| out.flush().map_err(|e| CliError::Runtime(e.to_string())))
    {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run_with(std::env::args_os(), &mut lock)
}
