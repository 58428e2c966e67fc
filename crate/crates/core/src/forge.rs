//! Training-corpus construction: simple/complete prompt pairs, augmentation,
//! and serialized training samples.
//!
//! A sample is laid out as
//!
//! ```text
//! <metadata block, one entry per line, or <|empty|>>
//! <|length|> <|task|> <input>
//! <target>
//! [metadata moved to the end, comma-joined]
//! ```
//!
//! Everything up to and including the line break after the input is the
//! prompt an inference backend sees; the target is what it should produce.

use std::collections::VecDeque;
use std::fmt;

use indexmap::IndexMap;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::prompt::{
    join_sentences, join_tags, LengthClass, MetaCategory, MetadataEntry, Sentence, Tag,
};
use crate::seed;
use crate::tokens::{length_token, TaskKind, EMPTY_TOKEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForgeError {
    #[error("dropout size {m} out of range for {n} items")]
    PairOutOfRange { m: usize, n: usize },
    #[error("task {task} unsupported for record: {reason}")]
    UnsupportedTask {
        task: TaskKind,
        reason: &'static str,
    },
    #[error("record content contains a reserved `<|` marker")]
    ReservedMarker,
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("invalid forge config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Tag,
    Nl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub simple: String,
    pub complete: String,
    pub kind: PairKind,
}

/// Shuffle the tags, then take the first `m` as the simple prompt and all of
/// them as the complete prompt.
pub fn build_tag_pair(tags: &[Tag], m: usize, seed: u64) -> Result<PromptPair, ForgeError> {
    let n = tags.len();
    if m == 0 || m > n {
        return Err(ForgeError::PairOutOfRange { m, n });
    }
    let mut shuffled = tags.to_vec();
    shuffled.shuffle(&mut seed::rng(seed));
    Ok(PromptPair {
        simple: join_tags(&shuffled[..m]),
        complete: join_tags(&shuffled),
        kind: PairKind::Tag,
    })
}

/// Pick sentence 1 plus `m - 1` later sentences in order; the complete
/// prompt is the simple prompt followed by the full caption.
pub fn build_nl_pair(
    sentences: &[Sentence],
    m: usize,
    seed: u64,
) -> Result<PromptPair, ForgeError> {
    let n = sentences.len();
    if m == 0 || m >= n {
        return Err(ForgeError::PairOutOfRange { m, n });
    }
    let mut picked = rand::seq::index::sample(&mut seed::rng(seed), n - 1, m - 1).into_vec();
    picked.sort_unstable();
    let mut simple_set = Vec::with_capacity(m);
    simple_set.push(sentences[0].clone());
    simple_set.extend(picked.into_iter().map(|i| sentences[i + 1].clone()));
    let simple = join_sentences(&simple_set);
    let complete = format!("{simple} {}", join_sentences(sentences));
    Ok(PromptPair {
        simple,
        complete,
        kind: PairKind::Nl,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaAugmentConfig {
    pub p_drop: f64,
    pub p_end: f64,
}

impl Default for MetaAugmentConfig {
    fn default() -> Self {
        MetaAugmentConfig {
            p_drop: 0.3,
            p_end: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Front,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaAugment {
    pub meta: Vec<MetadataEntry>,
    pub placement: Placement,
    pub dropped: usize,
}

/// One uniform draw per entry decides removal, then one more decides whether
/// the surviving block moves to the end.
pub fn augment_metadata(meta: &[MetadataEntry], cfg: &MetaAugmentConfig, seed: u64) -> MetaAugment {
    let mut rng = seed::rng(seed);
    let mut kept = Vec::with_capacity(meta.len());
    for entry in meta {
        if rng.random::<f64>() >= cfg.p_drop {
            kept.push(entry.clone());
        }
    }
    let placement = if rng.random::<f64>() < cfg.p_end {
        Placement::End
    } else {
        Placement::Front
    };
    MetaAugment {
        dropped: meta.len() - kept.len(),
        meta: kept,
        placement,
    }
}

pub fn augment_content_tags(tags: &[Tag], length: LengthClass, seed: u64) -> Vec<Tag> {
    let mut out = tags.to_vec();
    out.shuffle(&mut seed::rng(seed));
    out.truncate(length.max_tags());
    out
}

/// Removes randomly chosen middle sentences until the caption fits the
/// class cap. The first sentence always survives, the last one too when the
/// cap allows two.
pub fn truncate_nl(sentences: &[Sentence], length: LengthClass, seed: u64) -> Vec<Sentence> {
    truncate_nl_to(sentences, length.max_sentences(), seed)
}

pub fn truncate_nl_to(sentences: &[Sentence], cap: usize, seed: u64) -> Vec<Sentence> {
    let n = sentences.len();
    if n <= cap {
        return sentences.to_vec();
    }
    match cap {
        0 => Vec::new(),
        1 => vec![sentences[0].clone()],
        _ => {
            let mut keep_middle =
                rand::seq::index::sample(&mut seed::rng(seed), n - 2, cap - 2).into_vec();
            keep_middle.sort_unstable();
            let mut out = Vec::with_capacity(cap);
            out.push(sentences[0].clone());
            out.extend(keep_middle.into_iter().map(|i| sentences[i + 1].clone()));
            out.push(sentences[n - 1].clone());
            out
        }
    }
}

/// One source caption: tags, ordered sentences and metadata for an image.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionRecord {
    pub id: String,
    pub tags: Vec<Tag>,
    pub sentences: Vec<Sentence>,
    pub meta: Vec<MetadataEntry>,
}

/// Line-delimited wire form of a caption record.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CaptionRecordJson {
    pub id: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub sentences: Vec<String>,
    #[serde(default)]
    pub meta: IndexMap<String, String>,
}

impl CaptionRecord {
    pub fn new(
        id: &str,
        tags: Vec<Tag>,
        sentences: Vec<Sentence>,
        meta: Vec<MetadataEntry>,
    ) -> Result<Self, ForgeError> {
        if id.trim().is_empty() {
            return Err(ForgeError::Malformed("empty id".into()));
        }
        if tags.is_empty() && sentences.is_empty() {
            return Err(ForgeError::Malformed(format!(
                "record {id} has no tags and no sentences"
            )));
        }
        let has_marker = tags.iter().any(|t| t.as_str().contains("<|"))
            || sentences.iter().any(|s| s.text().contains("<|"))
            || meta
                .iter()
                .any(|m| m.content().contains("<|") || m.category.key().contains("<|"));
        if has_marker {
            return Err(ForgeError::ReservedMarker);
        }
        Ok(CaptionRecord {
            id: id.to_string(),
            tags,
            sentences,
            meta,
        })
    }

    pub fn from_json(raw: CaptionRecordJson) -> Result<Self, ForgeError> {
        let mut tags: Vec<Tag> = Vec::new();
        for t in &raw.tags {
            let tag = Tag::new(t).map_err(|e| ForgeError::Malformed(e.to_string()))?;
            if !tags.contains(&tag) {
                tags.push(tag);
            }
        }
        let sentences = raw
            .sentences
            .iter()
            .filter(|s| !s.trim().is_empty())
            .enumerate()
            .map(|(i, s)| Sentence::new(s, i + 1))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ForgeError::Malformed(e.to_string()))?;
        let meta = raw
            .meta
            .iter()
            .map(|(k, v)| MetadataEntry::new(MetaCategory::from_key(k), v))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ForgeError::Malformed(e.to_string()))?;
        CaptionRecord::new(&raw.id, tags, sentences, meta)
    }

    pub fn parse_line(line: &str) -> Result<Self, ForgeError> {
        let raw: CaptionRecordJson =
            serde_json::from_str(line).map_err(|e| ForgeError::Malformed(e.to_string()))?;
        CaptionRecord::from_json(raw)
    }

    fn requirement(&self, task: TaskKind) -> Result<(), &'static str> {
        let t = self.tags.len();
        let s = self.sentences.len();
        match task {
            TaskKind::GenMeta if self.meta.is_empty() => Err("needs metadata"),
            TaskKind::GenMeta => Ok(()),
            TaskKind::ShortToTag if t == 0 => Err("needs tags"),
            TaskKind::ShortToTag => Ok(()),
            TaskKind::ShortToLong if s < 2 => Err("needs at least two sentences"),
            TaskKind::ShortToLong => Ok(()),
            TaskKind::LongToTag | TaskKind::TagToLong | TaskKind::ShortToTagToLong
                if t == 0 || s == 0 =>
            {
                Err("needs tags and sentences")
            }
            TaskKind::ShortToLongToTag | TaskKind::TagToShortToLong if t == 0 || s < 2 => {
                Err("needs tags and at least two sentences")
            }
            _ => Ok(()),
        }
    }

    pub fn supports(&self, task: TaskKind) -> bool {
        self.requirement(task).is_ok()
    }
}

/// Context entry name under which a task receives another prompt form.
pub const CONTEXT_TAGS: &str = "tag";
pub const CONTEXT_LONG: &str = "long";
pub const CONTEXT_SHORT: &str = "short";

/// The part of a sample an inference backend is given: metadata block,
/// control tokens and task input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskPrompt {
    pub meta_lines: Vec<String>,
    pub length: LengthClass,
    pub task: TaskKind,
    pub input: String,
}

impl TaskPrompt {
    pub fn context_line(name: &str, content: &str) -> String {
        format!("{name}: {content}")
    }

    /// Serialized prompt including the trailing separator.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.meta_lines.is_empty() {
            out.push_str(EMPTY_TOKEN);
        } else {
            out.push_str(&self.meta_lines.join("\n"));
        }
        out.push('\n');
        out.push_str(length_token(self.length));
        out.push(' ');
        out.push_str(self.task.token());
        if !self.input.is_empty() {
            out.push(' ');
            out.push_str(&self.input);
        }
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub id: String,
    pub task: TaskKind,
    pub length: LengthClass,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub meta: MetaAugmentConfig,
    /// Fixed dropout size; uniform over `[1, n-1]` when unset.
    pub dropout_m: Option<usize>,
}

fn draw_m(n: usize, fixed: Option<usize>, rng: &mut impl Rng) -> usize {
    if let Some(m) = fixed {
        return m.clamp(1, n.saturating_sub(1).max(1));
    }
    if n <= 1 {
        1
    } else {
        rng.random_range(1..n)
    }
}

pub fn make_training_sample(
    record: &CaptionRecord,
    task: TaskKind,
    length: LengthClass,
    seed: u64,
) -> Result<TrainingSample, ForgeError> {
    make_training_sample_with(record, task, length, seed, &SampleConfig::default())
}

pub fn make_training_sample_with(
    record: &CaptionRecord,
    task: TaskKind,
    length: LengthClass,
    seed: u64,
    cfg: &SampleConfig,
) -> Result<TrainingSample, ForgeError> {
    record
        .requirement(task)
        .map_err(|reason| ForgeError::UnsupportedTask { task, reason })?;

    let mut rng = seed::rng(seed);
    let tag_seed = rng.next_u64();
    let nl_seed = rng.next_u64();
    let tag_pair_seed = rng.next_u64();
    let nl_pair_seed = rng.next_u64();
    let meta_seed = rng.next_u64();

    let tags = augment_content_tags(&record.tags, length, tag_seed);
    let sentences = truncate_nl(&record.sentences, length, nl_seed);
    let full_tags = join_tags(&tags);
    let full_nl = join_sentences(&sentences);

    let tag_pair = if tags.is_empty() {
        None
    } else {
        let m = draw_m(tags.len(), cfg.dropout_m, &mut rng);
        Some(build_tag_pair(&tags, m, tag_pair_seed)?)
    };
    let nl_pair = if sentences.len() >= 2 {
        let m = draw_m(sentences.len(), cfg.dropout_m, &mut rng);
        Some(build_nl_pair(&sentences, m, nl_pair_seed)?)
    } else {
        None
    };
    // requirement() guarantees the pairs each task unwraps below
    let tp = || tag_pair.clone().expect("tag pair");
    let np = || nl_pair.clone().expect("nl pair");

    let mut context: Vec<String> = Vec::new();
    let (input, target) = match task {
        TaskKind::GenMeta => {
            if !full_tags.is_empty() {
                context.push(TaskPrompt::context_line(CONTEXT_TAGS, &full_tags));
            }
            if !full_nl.is_empty() {
                context.push(TaskPrompt::context_line(CONTEXT_LONG, &full_nl));
            }
            let target = record
                .meta
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(", ");
            (String::new(), target)
        }
        TaskKind::ShortToTag => {
            let p = tp();
            (p.simple, p.complete)
        }
        TaskKind::LongToTag => {
            context.push(TaskPrompt::context_line(CONTEXT_LONG, &full_nl));
            let p = tp();
            (p.simple, p.complete)
        }
        TaskKind::TagToLong => {
            context.push(TaskPrompt::context_line(CONTEXT_TAGS, &full_tags));
            (String::new(), full_nl.clone())
        }
        TaskKind::ShortToLong => {
            let p = np();
            (p.simple, p.complete)
        }
        TaskKind::ShortToTagToLong => {
            let p = tp();
            let nl_target = match &nl_pair {
                Some(n) => {
                    context.push(TaskPrompt::context_line(CONTEXT_SHORT, &n.simple));
                    n.complete.clone()
                }
                None => full_nl.clone(),
            };
            (p.simple, format!("{}\n{}", p.complete, nl_target))
        }
        TaskKind::ShortToLongToTag => {
            let p = np();
            (p.simple, format!("{}\n{}", p.complete, full_tags))
        }
        TaskKind::TagToShortToLong => {
            context.push(TaskPrompt::context_line(CONTEXT_TAGS, &full_tags));
            let p = np();
            (p.simple, p.complete)
        }
    };

    let mut meta_lines: Vec<String> = Vec::new();
    let mut trailing_meta = None;
    if task != TaskKind::GenMeta {
        let aug = augment_metadata(&record.meta, &cfg.meta, meta_seed);
        let lines: Vec<String> = aug.meta.iter().map(ToString::to_string).collect();
        match aug.placement {
            Placement::Front => meta_lines.extend(lines),
            Placement::End if !lines.is_empty() => trailing_meta = Some(lines.join(", ")),
            Placement::End => {}
        }
    }
    meta_lines.extend(context);

    let prompt = TaskPrompt {
        meta_lines,
        length,
        task,
        input,
    };
    let mut text = prompt.render();
    text.push_str(&target);
    if let Some(trailing) = trailing_meta {
        text.push('\n');
        text.push_str(&trailing);
    }
    Ok(TrainingSample {
        id: record.id.clone(),
        task,
        length,
        text,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeConfig {
    pub tasks: Vec<(TaskKind, f64)>,
    pub lengths: Vec<(LengthClass, f64)>,
    pub samples_per_record: usize,
    pub sample: SampleConfig,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        ForgeConfig {
            tasks: TaskKind::ALL.iter().map(|t| (*t, 1.0)).collect(),
            lengths: LengthClass::ALL.iter().map(|l| (*l, 1.0)).collect(),
            samples_per_record: 1,
            sample: SampleConfig::default(),
        }
    }
}

impl ForgeConfig {
    pub fn validate(&self) -> Result<(), ForgeError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if self.tasks.is_empty() || !self.tasks.iter().any(|(_, w)| *w > 0.0) {
            return Err(ForgeError::Config("no task with positive weight".into()));
        }
        if self.lengths.is_empty() || !self.lengths.iter().any(|(_, w)| *w > 0.0) {
            return Err(ForgeError::Config("no length with positive weight".into()));
        }
        if !self
            .tasks
            .iter()
            .map(|t| t.1)
            .chain(self.lengths.iter().map(|l| l.1))
            .all(ok)
        {
            return Err(ForgeError::Config(
                "weights must be finite and non-negative".into(),
            ));
        }
        if self.samples_per_record == 0 {
            return Err(ForgeError::Config("samples_per_record must be >= 1".into()));
        }
        let m = &self.sample.meta;
        if !(0.0..=1.0).contains(&m.p_drop) || !(0.0..=1.0).contains(&m.p_end) {
            return Err(ForgeError::Config(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ForgeStats {
    pub records: usize,
    pub samples: usize,
    pub skipped: usize,
}

/// Samples for a single record. Seeds derive from `(seed, record.id)`, so
/// records can be processed in any order or in parallel.
pub fn forge_record(
    record: &CaptionRecord,
    cfg: &ForgeConfig,
    seed: u64,
) -> Result<Vec<TrainingSample>, ForgeError> {
    let supported: Vec<(TaskKind, f64)> = cfg
        .tasks
        .iter()
        .copied()
        .filter(|(t, w)| *w > 0.0 && record.supports(*t))
        .collect();
    if supported.is_empty() {
        return Err(ForgeError::Malformed(format!(
            "record {} supports none of the enabled tasks",
            record.id
        )));
    }
    let task_dist = WeightedIndex::new(supported.iter().map(|t| t.1))
        .map_err(|e| ForgeError::Config(e.to_string()))?;
    let len_dist = WeightedIndex::new(cfg.lengths.iter().map(|l| l.1))
        .map_err(|e| ForgeError::Config(e.to_string()))?;

    let mut rng = seed::rng(seed::derive(seed, &record.id));
    (0..cfg.samples_per_record)
        .map(|_| {
            let task = supported[task_dist.sample(&mut rng)].0;
            let length = cfg.lengths[len_dist.sample(&mut rng)].0;
            let sample_seed = rng.next_u64();
            make_training_sample_with(record, task, length, sample_seed, &cfg.sample)
        })
        .collect()
}

/// Streaming corpus builder over fallible records. Bad records are skipped
/// and counted.
pub struct ForgeStream<'a, I> {
    records: I,
    cfg: &'a ForgeConfig,
    seed: u64,
    pending: VecDeque<TrainingSample>,
    stats: ForgeStats,
}

pub fn forge_corpus<I, E>(records: I, cfg: &ForgeConfig, seed: u64) -> ForgeStream<'_, I::IntoIter>
where
    I: IntoIterator<Item = Result<CaptionRecord, E>>,
    E: fmt::Display,
{
    ForgeStream {
        records: records.into_iter(),
        cfg,
        seed,
        pending: VecDeque::new(),
        stats: ForgeStats::default(),
    }
}

impl<I> ForgeStream<'_, I> {
    pub fn stats(&self) -> ForgeStats {
        self.stats
    }
}

impl<I, E> Iterator for ForgeStream<'_, I>
where
    I: Iterator<Item = Result<CaptionRecord, E>>,
    E: fmt::Display,
{
    type Item = TrainingSample;

    fn next(&mut self) -> Option<TrainingSample> {
        loop {
            if let Some(s) = self.pending.pop_front() {
                self.stats.samples += 1;
                return Some(s);
            }
            let record = self.records.next()?;
            self.stats.records += 1;
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    warn!(error = %e, "skipping malformed record");
                    self.stats.skipped += 1;
                    continue;
                }
            };
            match forge_record(&record, self.cfg, self.seed) {
                Ok(samples) => self.pending.extend(samples),
                Err(e) => {
                    warn!(id = %record.id, error = %e, "skipping record");
                    self.stats.skipped += 1;
                }
            }
        }
    }
}
