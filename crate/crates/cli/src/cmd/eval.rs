use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Subcommand};
use promptlab_core::metrics::io::{read_embeddings, read_scores};
use promptlab_core::metrics::scorer::{score_images, HttpScorer, ScoreOutcome, ScoringOptions};
use promptlab_core::metrics::{
    cosine_similarity_matrix, frechet_distance, summarize, vendi_score, EmbeddingSet, MetricError,
};
use serde_json::json;

use super::{create_output, emit, fmt_number, read_input, write_err};
use crate::select::{decile_filter, Select};
use crate::{CliError, Context};

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Vendi diversity score of an embedding set.
    Vendi(VendiArgs),
    /// Frechet distance between two embedding sets.
    Frechet(FrechetArgs),
    /// Pairwise cosine similarity matrix as CSV.
    Simmatrix(SimArgs),
    /// Descriptive statistics of a score file.
    Summary(SummaryArgs),
    /// Score images with an external scorer service.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct VendiArgs {
    /// CSV or JSONL embeddings.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Per-item scores used to pick a subset before scoring.
    #[arg(long, requires = "select")]
    pub scores: Option<PathBuf>,
    #[arg(long, value_enum, requires = "scores")]
    pub select: Option<Select>,
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
}

#[derive(Debug, Args)]
pub struct FrechetArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Scorer endpoint accepting `{"images": [...]}`.
    #[arg(long, env = "PROMPTLAB_SCORER_ENDPOINT")]
    pub endpoint: String,
    /// Image references, one per line.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 60.0)]
    pub timeout_secs: f64,
}

fn metric_input(e: MetricError) -> CliError {
    CliError::Input(e.to_string())
}

fn load_embeddings(path: &Path) -> Result<EmbeddingSet, CliError> {
    read_embeddings(&read_input(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn vendi(args: VendiArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut set = load_embeddings(&args.embeddings)?;
    if let (Some(path), Some(select)) = (&args.scores, args.select) {
        let scores = read_scores(&read_input(path)?)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let items: Vec<(String, f64)> = scores.into_iter().map(|s| (s.id, s.score)).collect();
        let unknown = items
            .iter()
            .find(|(id, _)| !(0..set.len()).any(|i| &set.label(i) == id));
        if let Some((id, _)) = unknown {
            return Err(CliError::Input(format!("score id {id} has no embedding")));
        }
        let keep = decile_filter(&items, select, args.fraction)?;
        set = set.select(&keep).map_err(metric_input)?;
    }
    let v = vendi_score(&set).map_err(metric_input)?;
    writeln!(out, "{}", fmt_number(v)).map_err(write_err)
}

fn frechet(args: FrechetArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let a = load_embeddings(&args.a)?;
    let b = load_embeddings(&args.b)?;
    let d = frechet_distance(&a, &b).map_err(|e| match e {
        MetricError::Numerical(_) => CliError::Runtime(e.to_string()),
        other => metric_input(other),
    })?;
    writeln!(out, "{}", fmt_number(d)).map_err(write_err)
}

fn simmatrix(args: SimArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let set = load_embeddings(&args.embeddings)?;
    let k = cosine_similarity_matrix(&set).map_err(metric_input)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let labels: Vec<String> = (0..set.len()).map(|i| set.label(i)).collect();
    let header = std::iter::once(String::new()).chain(labels.iter().cloned());
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for (i, row) in k.rows().into_iter().enumerate() {
        let cells =
            std::iter::once(labels[i].clone()).chain(row.into_iter().map(|x| x.to_string()));
        w.write_record(cells).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    emit(args.out.as_deref(), out, &String::from_utf8_lossy(&bytes))
}

fn summary(args: SummaryArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let scores = read_scores(&read_input(&args.scores)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.scores.display())))?;
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let s = summarize(&values, args.bins).map_err(metric_input)?;
    let text = serde_json::to_string_pretty(&s).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out, "{text}").map_err(write_err)
}

fn score(args: ScoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let f = std::fs::File::open(&args.images)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.images.display())))?;
    let refs: Vec<String> = BufReader::new(f)
        .lines()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Input(e.to_string()))?
        .into_iter()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if !(args.timeout_secs.is_finite() && args.timeout_secs > 0.0) {
        return Err(CliError::Input("timeout must be positive".into()));
    }
    let scorer = HttpScorer::new(args.endpoint, Duration::from_secs_f64(args.timeout_secs));
    let opts = ScoringOptions {
        batch_size: args.batch_size.max(1),
        ..ScoringOptions::default()
    };
    let outcomes =
        score_images(&scorer, &refs, &opts).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut file_out = args.out.as_deref().map(create_output).transpose()?;
    let sink: &mut dyn Write = match file_out.as_mut() {
        Some(f) => f,
        None => out,
    };
    for (id, o) in refs.iter().zip(&outcomes) {
        let line = match o {
            ScoreOutcome::Score { score } => json!({"id": id, "score": score}),
            ScoreOutcome::Missing { error } => json!({"id": id, "error": error}),
        };
        writeln!(sink, "{line}").map_err(write_err)?;
    }
    sink.flush().map_err(write_err)
}

pub fn run(cmd: EvalCmd, _ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        EvalCmd::Vendi(a) => vendi(a, out),
        EvalCmd::Frechet(a) => frechet(a, out),
        EvalCmd::Simmatrix(a) => simmatrix(a, out),
        EvalCmd::Summary(a) => summary(a, out),
        EvalCmd::Score(a) => score(a, out),
    }
}
