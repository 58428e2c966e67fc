use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Subcommand};
use promptlab_core::forge::{forge_corpus, CaptionRecord, ForgeConfig};
use tracing::info;

use super::{create_output, write_err};
use crate::config::pick;
use crate::{CliError, Context};

#[derive(Debug, Subcommand)]
pub enum ForgeCmd {
    /// Turn caption records (JSONL) into training samples (JSONL).
    Build(BuildArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Caption records, one JSON object per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Output samples file.
    #[arg(long)]
    pub out: PathBuf,
    /// Task weights, e.g. `short_to_tag=2,tag_to_long=1`.
    #[arg(long)]
    pub tasks: Option<String>,
    /// Length class weights, e.g. `short=1,long=3`.
    #[arg(long)]
    pub lengths: Option<String>,
    #[arg(long)]
    pub samples_per_record: Option<usize>,
}

/// Parses `name=weight,...`; a bare name has weight 1.
pub fn parse_weights<T>(spec: &str) -> Result<Vec<(T, f64)>, CliError>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, weight) = match item.split_once('=') {
                Some((n, w)) => {
                    let w: f64 = w
                        .trim()
                        .parse()
                        .map_err(|_| CliError::Input(format!("bad weight in {item:?}")))?;
                    (n.trim(), w)
                }
                None => (item, 1.0),
            };
            let v = name.parse().map_err(|e| CliError::Input(format!("{e}")))?;
            Ok((v, weight))
        })
        .collect()
}

pub fn run(cmd: ForgeCmd, ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let ForgeCmd::Build(args) = cmd;
    let file = &ctx.file.forge;
    let mut cfg = ForgeConfig::default();
    if let Some(spec) = args.tasks.as_deref().or(file.tasks.as_deref()) {
        cfg.tasks = parse_weights(spec)?;
    }
    if let Some(spec) = args.lengths.as_deref().or(file.lengths.as_deref()) {
        cfg.lengths = parse_weights(spec)?;
    }
    cfg.samples_per_record = pick(args.samples_per_record, file.samples_per_record, 1);
    cfg.sample.meta.p_drop = file.meta_drop.unwrap_or(cfg.sample.meta.p_drop);
    cfg.sample.meta.p_end = file.meta_end.unwrap_or(cfg.sample.meta.p_end);
    cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let seed = ctx.seed_or(0);

    let input = std::fs::File::open(&args.input)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.input.display())))?;
    let mut read_error = None;
    let records = BufReader::new(input)
        .lines()
        .enumerate()
        .map_while(|(i, line)| match line {
            Ok(l) => Some((i, l)),
            Err(e) => {
                read_error = Some(e);
                None
            }
        })
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| CaptionRecord::parse_line(&l).map_err(|e| format!("line {}: {e}", i + 1)));

    let mut writer = create_output(&args.out)?;
    let mut stream = forge_corpus(records, &cfg, seed);
    for sample in stream.by_ref() {
        serde_json::to_writer(&mut writer, &sample)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        writer.write_all(b"\n").map_err(write_err)?;
    }
    writer.flush().map_err(write_err)?;
    let stats = stream.stats();
    drop(stream);
    if let Some(e) = read_error {
        return Err(CliError::Input(format!("{}: {e}", args.input.display())));
    }
    info!(
        records = stats.records,
        samples = stats.samples,
        skipped = stats.skipped,
        "corpus written"
    );
    let line = serde_json::to_string(&stats).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out, "{line}").map_err(write_err)
}
