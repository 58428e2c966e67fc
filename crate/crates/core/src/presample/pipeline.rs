//! Multi-step prompt expansion: build task prompts, call a backend, parse
//! continuations and fold everything into one detailed prompt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{generate, Backend, BackendError, GenRequest, GenResponse};
use crate::forge::{TaskPrompt, CONTEXT_LONG, CONTEXT_SHORT, CONTEXT_TAGS};
use crate::prompt::{
    join_sentences, join_tags, parse_metadata, parse_tags, serialize_prompt, split_sentences,
    LengthClass, MetadataEntry, Sentence, StructuredPrompt, Tag,
};
use crate::seed;
use crate::tokens::{is_special, scan_markers, OutputShape, TaskKind, SPECIAL_TOKENS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PresampleError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("could not parse {task} continuation ({reason}): {raw:?}")]
    Parse {
        task: TaskKind,
        reason: String,
        raw: String,
    },
    #[error("task {task} unsupported for this input: {reason}")]
    UnsupportedTask {
        task: TaskKind,
        reason: &'static str,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleMode {
    /// `short_to_tag`, then the composite `short_to_tag_to_long`.
    #[default]
    TwoStep,
    /// Adds a `tag_to_long` step between the two when NL input exists.
    ThreeStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: CycleMode,
    pub temperature: f64,
    pub max_new_units: usize,
    pub stop_markers: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: CycleMode::TwoStep,
            temperature: 0.8,
            max_new_units: 256,
            stop_markers: SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub task: TaskKind,
    pub request: GenRequest,
    pub response: GenResponse,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedGeneration {
    pub tags: Vec<Tag>,
    pub sentences: Vec<Sentence>,
    pub meta: Vec<MetadataEntry>,
}

/// Strips control tokens and splits a continuation according to what the
/// task produces. Unknown `<|...|>` markers are an error.
pub fn parse_generation(text: &str, task: TaskKind) -> Result<ParsedGeneration, PresampleError> {
    let mut clean = String::with_capacity(text.len());
    let mut last = 0;
    for m in scan_markers(text) {
        if !is_special(m.text) {
            return Err(PresampleError::Parse {
                task,
                reason: format!("unknown token {}", m.text),
                raw: text.to_string(),
            });
        }
        clean.push_str(&text[last..m.start]);
        clean.push(' ');
        last = m.end;
    }
    clean.push_str(&text[last..]);

    let lines: Vec<&str> = clean
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    let nl_of = |parts: &[&str]| split_sentences(&parts.join(" "));
    let mut out = ParsedGeneration::default();
    match task.output_shape() {
        OutputShape::Tags => out.tags = parse_tags(&lines.join(", ")),
        OutputShape::Nl => out.sentences = nl_of(&lines),
        OutputShape::TagsThenNl => {
            if let Some((first, rest)) = lines.split_first() {
                out.tags = parse_tags(first);
                out.sentences = nl_of(rest);
            }
        }
        OutputShape::NlThenTags => {
            if let Some((first, rest)) = lines.split_first() {
                out.sentences = split_sentences(first);
                out.tags = parse_tags(&rest.join(", "));
            }
        }
        OutputShape::Meta => {
            let parsed = parse_metadata(&lines.join("\n"));
            if parsed.entries.is_empty() && !parsed.residue.is_empty() {
                return Err(PresampleError::Parse {
                    task,
                    reason: "no `key: value` entries".into(),
                    raw: text.to_string(),
                });
            }
            out.meta = parsed.entries;
        }
    }
    Ok(out)
}

/// Keeps the first `cap - 1` sentences and the last one, dropping from the
/// middle. Returns whether anything was removed.
fn cap_sentences(nl: &mut Vec<Sentence>, cap: usize) -> bool {
    if nl.len() <= cap {
        return false;
    }
    if cap == 0 {
        nl.clear();
    } else {
        let last = nl.pop().expect("non-empty");
        nl.truncate(cap - 1);
        if cap >= 2 {
            nl.push(last);
        }
    }
    true
}

fn require(task: TaskKind, input: &StructuredPrompt) -> Result<(), PresampleError> {
    let has_tags = !input.tags().is_empty();
    let has_nl = !input.nl().is_empty();
    let missing = match task {
        TaskKind::ShortToTag | TaskKind::TagToLong | TaskKind::ShortToTagToLong if !has_tags => {
            Some("needs tags")
        }
        TaskKind::ShortToLong | TaskKind::ShortToLongToTag | TaskKind::LongToTag if !has_nl => {
            Some("needs natural language")
        }
        TaskKind::TagToShortToLong if !(has_tags && has_nl) => {
            Some("needs tags and natural language")
        }
        TaskKind::GenMeta if !(has_tags || has_nl) => Some("needs tags or natural language"),
        _ => None,
    };
    match missing {
        Some(reason) => Err(PresampleError::UnsupportedTask { task, reason }),
        None => Ok(()),
    }
}

/// The serialized prompt for `task`, mirroring the training layout up to and
/// including the input/target separator.
pub fn task_prompt(task: TaskKind, input: &StructuredPrompt, length: LengthClass) -> TaskPrompt {
    let tags = join_tags(input.tags());
    let nl = join_sentences(input.nl());
    let mut meta_lines: Vec<String> = input.meta.iter().map(ToString::to_string).collect();
    let mut ctx = |name: &str, text: &str| {
        if !text.is_empty() {
            meta_lines.push(TaskPrompt::context_line(name, text));
        }
    };
    let text_input = match task {
        TaskKind::GenMeta => {
            ctx(CONTEXT_TAGS, &tags);
            ctx(CONTEXT_LONG, &nl);
            String::new()
        }
        TaskKind::ShortToTag => tags,
        TaskKind::LongToTag => {
            ctx(CONTEXT_LONG, &nl);
            tags
        }
        TaskKind::TagToLong => {
            ctx(CONTEXT_TAGS, &tags);
            String::new()
        }
        TaskKind::ShortToLong | TaskKind::ShortToLongToTag => nl,
        TaskKind::ShortToTagToLong => {
            ctx(CONTEXT_SHORT, &nl);
            tags
        }
        TaskKind::TagToShortToLong => {
            ctx(CONTEXT_TAGS, &tags);
            nl
        }
    };
    TaskPrompt {
        meta_lines,
        length,
        task,
        input: text_input,
    }
}

/// Result of one task: the expanded fields only. Tag outputs start with the
/// input tags, NL outputs with the NL they extend.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub delta: StructuredPrompt,
    pub step: Step,
}

#[allow(clippy::result_large_err)]
pub fn run_task<B: Backend + ?Sized>(
    backend: &B,
    task: TaskKind,
    input: &StructuredPrompt,
    length: LengthClass,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<TaskOutcome, (PresampleError, Option<Step>)> {
    require(task, input).map_err(|e| (e, None))?;
    let prompt = task_prompt(task, input, length).render();
    let request = GenRequest {
        prompt_text: prompt,
        max_new_units: cfg.max_new_units,
        stop_markers: cfg.stop_markers.clone(),
        temperature: cfg.temperature,
        seed,
    };
    let response = generate(backend, &request).map_err(|e| (e.into(), None))?;
    let step = Step {
        task,
        request,
        response,
    };
    let parsed = match parse_generation(&step.response.text, task) {
        Ok(p) => p,
        Err(e) => return Err((e, Some(step))),
    };

    let mut delta = StructuredPrompt::default();
    let shape = task.output_shape();
    if matches!(
        shape,
        OutputShape::Tags | OutputShape::TagsThenNl | OutputShape::NlThenTags
    ) {
        delta.extend_tags(input.tags().iter().cloned());
        delta.extend_tags(parsed.tags);
        delta.truncate_tags(length.max_tags().max(input.tags().len()));
    }
    if matches!(
        shape,
        OutputShape::Nl | OutputShape::TagsThenNl | OutputShape::NlThenTags
    ) {
        let mut nl: Vec<Sentence> = if task == TaskKind::TagToLong {
            Vec::new()
        } else {
            input.nl().to_vec()
        };
        nl.extend(parsed.sentences);
        cap_sentences(&mut nl, length.max_sentences().max(1));
        delta.set_sentences(nl);
    }
    if shape == OutputShape::Meta {
        delta.meta = parsed.meta;
    }
    Ok(TaskOutcome { delta, step })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub prompt: StructuredPrompt,
    pub overflow: bool,
}

/// Deterministic union: metadata first, then `preserve` tags in their order,
/// then the remaining detailed tags, then sentences. Tags beyond the class
/// cap are dropped (never the preserved ones); sentences are removed from
/// the middle.
pub fn aggregate(
    preserve: &[Tag],
    t_d: &[Tag],
    s_d: &[Sentence],
    meta: &[MetadataEntry],
    length: LengthClass,
) -> Aggregated {
    let mut meta_out: Vec<MetadataEntry> = Vec::new();
    for m in meta {
        if !meta_out.contains(m) {
            meta_out.push(m.clone());
        }
    }
    let mut prompt = StructuredPrompt::new(meta_out, preserve.to_vec(), Vec::new());
    prompt.extend_tags(t_d.iter().cloned());
    let tag_cap = length.max_tags().max(preserve.len());
    let mut overflow = prompt.tags().len() > tag_cap;
    prompt.truncate_tags(tag_cap);

    let mut nl: Vec<Sentence> = Vec::new();
    for s in s_d {
        if !nl.iter().any(|x| x.text() == s.text()) {
            nl.push(s.clone());
        }
    }
    overflow |= cap_sentences(&mut nl, length.max_sentences());
    prompt.set_sentences(nl);
    Aggregated { prompt, overflow }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleResult {
    pub detailed_tags: Vec<Tag>,
    pub detailed_nl: Vec<Sentence>,
    pub final_prompt: StructuredPrompt,
    pub overflow: bool,
    pub steps: Vec<Step>,
}

impl CycleResult {
    pub fn final_text(&self) -> String {
        serialize_prompt(&self.final_prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cycle aborted after {} step(s): {error}", steps.len())]
pub struct CycleError {
    pub error: PresampleError,
    pub steps: Vec<Step>,
}

struct CycleRun<'a, B: ?Sized> {
    backend: &'a B,
    length: LengthClass,
    seed: u64,
    cfg: &'a PipelineConfig,
    steps: Vec<Step>,
}

impl<B: Backend + ?Sized> CycleRun<'_, B> {
    fn task(
        &mut self,
        task: TaskKind,
        input: &StructuredPrompt,
    ) -> Result<StructuredPrompt, CycleError> {
        let step_seed = seed::derive(self.seed, &format!("step-{}", self.steps.len()));
        match run_task(self.backend, task, input, self.length, step_seed, self.cfg) {
            Ok(outcome) => {
                self.steps.push(outcome.step);
                Ok(outcome.delta)
            }
            Err((error, step)) => {
                self.steps.extend(step);
                Err(CycleError {
                    error,
                    steps: std::mem::take(&mut self.steps),
                })
            }
        }
    }
}

/// One full expansion cycle. The path depends on which input forms exist:
///
/// * tags (with or without NL): `short_to_tag`, optionally `tag_to_long`
///   (three-step mode, NL input only), then `short_to_tag_to_long`;
/// * NL only: `short_to_long_to_tag`.
pub fn run_cycle<B: Backend + ?Sized>(
    backend: &B,
    user_input: &StructuredPrompt,
    length: LengthClass,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<CycleResult, CycleError> {
    let fail = |error| CycleError {
        error,
        steps: Vec::new(),
    };
    if user_input.tags().is_empty() && user_input.nl().is_empty() {
        return Err(fail(PresampleError::InvalidInput(
            "input has neither tags nor sentences".into(),
        )));
    }
    if !scan_markers(&serialize_prompt(user_input)).is_empty() {
        return Err(fail(PresampleError::InvalidInput(
            "input contains a `<|...|>` marker".into(),
        )));
    }

    let meta = user_input.meta.clone();
    let mut run = CycleRun {
        backend,
        length,
        seed,
        cfg,
        steps: Vec::new(),
    };

    let (t_d, s_d) = if user_input.tags().is_empty() {
        let out = run.task(TaskKind::ShortToLongToTag, user_input)?;
        (out.tags().to_vec(), out.nl().to_vec())
    } else {
        let tag_input = StructuredPrompt::new(meta.clone(), user_input.tags().to_vec(), Vec::new());
        let t_d = run.task(TaskKind::ShortToTag, &tag_input)?.tags().to_vec();

        let mut short_nl = user_input.nl().to_vec();
        if cfg.mode == CycleMode::ThreeStep && !short_nl.is_empty() {
            let ctx = StructuredPrompt::new(meta.clone(), t_d.clone(), Vec::new());
            let refined = run.task(TaskKind::TagToLong, &ctx)?;
            for s in refined.nl() {
                if !short_nl.iter().any(|x| x.text() == s.text()) {
                    short_nl.push(s.clone());
                }
            }
        }
        let composite_input = StructuredPrompt::new(meta.clone(), t_d.clone(), short_nl);
        let out = run.task(TaskKind::ShortToTagToLong, &composite_input)?;
        let mut tags = t_d;
        for t in out.tags() {
            if !tags.contains(t) {
                tags.push(t.clone());
            }
        }
        (tags, out.nl().to_vec())
    };

    let agg = aggregate(user_input.tags(), &t_d, &s_d, &meta, length);
    Ok(CycleResult {
        detailed_tags: t_d,
        detailed_nl: s_d,
        final_prompt: agg.prompt,
        overflow: agg.overflow,
        steps: run.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presample::mock::MockBackend;
    use crate::prompt::{parse_prompt, MetaCategory};

    fn tags(list: &[&str]) -> Vec<Tag> {
        list.iter().map(|t| Tag::new(t).unwrap()).collect()
    }

    #[test]
    fn parse_generation_examples() {
        let p = parse_generation("a, b, a", TaskKind::ShortToTag).unwrap();
        assert_eq!(p.tags, tags(&["a", "b"]));
        let p = parse_generation("<|empty|>", TaskKind::ShortToTag).unwrap();
        assert_eq!(p, ParsedGeneration::default());
        let p = parse_generation("<|long|> x, y", TaskKind::LongToTag).unwrap();
        assert_eq!(p.tags, tags(&["x", "y"]));
        let p = parse_generation("A cat. A dog.<|long|>", TaskKind::TagToLong).unwrap();
        assert_eq!(p.sentences.len(), 2);
    }

    #[test]
    fn parse_generation_rejects_unknown_tokens() {
        let err = parse_generation("a, <|bogus|> b", TaskKind::ShortToTag).unwrap_err();
        match err {
            PresampleError::Parse { raw, .. } => assert_eq!(raw, "a, <|bogus|> b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_generation_composites() {
        let p = parse_generation("a, b\nOne. Two.", TaskKind::ShortToTagToLong).unwrap();
        assert_eq!(p.tags, tags(&["a", "b"]));
        assert_eq!(p.sentences.len(), 2);
        let p = parse_generation("One. Two.\na, b", TaskKind::ShortToLongToTag).unwrap();
        assert_eq!(p.tags, tags(&["a", "b"]));
        assert_eq!(p.sentences.len(), 2);
        let p = parse_generation("quality: best, year: 2020", TaskKind::GenMeta).unwrap();
        assert_eq!(p.meta[0].category, MetaCategory::Quality);
        assert!(parse_generation("just words", TaskKind::GenMeta).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate(&[], &[], &[], &[], LengthClass::Long);
        assert!(a.prompt.is_empty());
        assert!(!a.overflow);

        let a = aggregate(
            &tags(&["a"]),
            &tags(&["a", "b", "a"]),
            &[],
            &[],
            LengthClass::Long,
        );
        assert_eq!(a.prompt.tags(), tags(&["a", "b"]).as_slice());

        let many: Vec<Tag> = (0..30)
            .map(|i| Tag::new(&format!("t{i}")).unwrap())
            .collect();
        let nl = split_sentences("A. B. C. D.");
        let a = aggregate(&many[..2], &many, &nl, &[], LengthClass::VeryShort);
        assert!(a.overflow);
        assert_eq!(a.prompt.tags().len(), 18);
        let texts: Vec<_> = a.prompt.nl().iter().map(Sentence::text).collect();
        assert_eq!(texts, vec!["A.", "D."]);
    }

    #[test]
    fn aggregate_never_drops_preserved_tags() {
        let many: Vec<Tag> = (0..30)
            .map(|i| Tag::new(&format!("t{i}")).unwrap())
            .collect();
        let a = aggregate(&many, &many, &[], &[], LengthClass::VeryShort);
        assert_eq!(a.prompt.tags().len(), 30);
    }

    #[test]
    fn run_task_short_to_tag_extends() {
        let input = parse_prompt("outdoors, scenery, water");
        let out = run_task(
            &MockBackend::default(),
            TaskKind::ShortToTag,
            &input,
            LengthClass::Long,
            1,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert!(out.delta.tags().len() > 3);
        assert_eq!(&out.delta.tags()[..3], input.tags());
        assert!(out.delta.nl().is_empty());
    }

    #[test]
    fn run_task_tag_to_long_yields_sentences_only() {
        let input = parse_prompt("outdoors, scenery");
        let out = run_task(
            &MockBackend::default(),
            TaskKind::TagToLong,
            &input,
            LengthClass::Long,
            1,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert!(out.delta.tags().is_empty());
        assert!(!out.delta.nl().is_empty());
    }

    #[test]
    fn run_task_missing_field() {
        let input = parse_prompt("A girl.");
        let err = run_task(
            &MockBackend::default(),
            TaskKind::ShortToTag,
            &input,
            LengthClass::Long,
            1,
            &PipelineConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err.0, PresampleError::UnsupportedTask { .. }));
        assert!(err.1.is_none());
    }

    #[test]
    fn task_prompt_layout() {
        let input = parse_prompt("quality: best\na, b\nA girl.");
        let p = task_prompt(TaskKind::ShortToTagToLong, &input, LengthClass::Short).render();
        assert_eq!(
            p,
            "quality: best\nshort: A girl.\n<|short|> <|short_to_tag_to_long|> a, b\n"
        );
        let p = task_prompt(TaskKind::TagToLong, &parse_prompt("a"), LengthClass::Long).render();
        assert_eq!(p, "tag: a\n<|long|> <|tag_to_long|>\n");
    }

    fn task_names(r: &CycleResult) -> Vec<TaskKind> {
        r.steps.iter().map(|s| s.task).collect()
    }

    #[test]
    fn cycle_paths() {
        let mock = MockBackend::default();
        let both = parse_prompt("outdoors, water\nA young girl with long hair.");
        let two = run_cycle(
            &mock,
            &both,
            LengthClass::Long,
            5,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(
            task_names(&two),
            vec![TaskKind::ShortToTag, TaskKind::ShortToTagToLong]
        );

        let three_cfg = PipelineConfig {
            mode: CycleMode::ThreeStep,
            ..PipelineConfig::default()
        };
        let three = run_cycle(&mock, &both, LengthClass::Long, 5, &three_cfg).unwrap();
        assert_eq!(
            task_names(&three),
            vec![
                TaskKind::ShortToTag,
                TaskKind::TagToLong,
                TaskKind::ShortToTagToLong
            ]
        );

        let tag_only = parse_prompt("outdoors, water");
        let r = run_cycle(&mock, &tag_only, LengthClass::Long, 5, &three_cfg).unwrap();
        assert_eq!(
            task_names(&r),
            vec![TaskKind::ShortToTag, TaskKind::ShortToTagToLong]
        );
        assert!(!task_names(&r).contains(&TaskKind::ShortToLong));

        let nl_only = parse_prompt("A young girl with long hair.");
        let r = run_cycle(
            &mock,
            &nl_only,
            LengthClass::Long,
            5,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(task_names(&r), vec![TaskKind::ShortToLongToTag]);
        assert_eq!(
            r.final_prompt.nl()[0].text(),
            "A young girl with long hair."
        );
        assert!(!r.final_prompt.tags().is_empty());
    }

    #[test]
    fn cycle_preserves_input_and_has_no_tokens() {
        let mock = MockBackend::default();
        let input = parse_prompt("artist: someone\nOutdoors, Water\nA girl walks. She smiles.");
        let r = run_cycle(
            &mock,
            &input,
            LengthClass::Short,
            9,
            &PipelineConfig::default(),
        )
        .unwrap();
        for t in input.tags() {
            assert!(r.final_prompt.tags().contains(t));
        }
        assert_eq!(r.final_prompt.nl()[0].text(), "A girl walks.");
        assert!(scan_markers(&r.final_text()).is_empty());
        assert_eq!(r.final_prompt.meta, input.meta);
        for step in &r.steps {
            assert!(step.request.prompt_text.contains(step.task.token()));
        }
    }

    #[test]
    fn cycle_rejects_empty_and_marked_input() {
        let mock = MockBackend::default();
        let err = run_cycle(
            &mock,
            &StructuredPrompt::default(),
            LengthClass::Long,
            0,
            &PipelineConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err.error, PresampleError::InvalidInput(_)));
        let marked = StructuredPrompt::new(vec![], tags(&["<|long|>"]), vec![]);
        assert!(run_cycle(
            &mock,
            &marked,
            LengthClass::Long,
            0,
            &PipelineConfig::default()
        )
        .is_err());
    }

    struct FailSecond(std::sync::atomic::AtomicUsize);

    impl Backend for FailSecond {
        fn complete(&self, req: &GenRequest) -> Result<GenResponse, BackendError> {
            if self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 1 {
                return Err(BackendError::Transport("connection refused".into()));
            }
            MockBackend::default().complete(req)
        }
    }

    #[test]
    fn cycle_error_keeps_partial_log() {
        let backend = FailSecond(Default::default());
        let err = run_cycle(
            &backend,
            &parse_prompt("a, b"),
            LengthClass::Long,
            0,
            &PipelineConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.steps.len(), 1);
        assert_eq!(err.steps[0].task, TaskKind::ShortToTag);
        assert!(matches!(
            err.error,
            PresampleError::Backend(BackendError::Transport(_))
        ));
    }
}
