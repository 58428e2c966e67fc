//! Deterministic stand-in for a prompt model.
//!
//! The mock reads the task token from the prompt, decides what kind of
//! continuation the task produces, and draws fresh tags from a fixed
//! vocabulary. Any vocabulary entry already present in the prompt text is
//! never emitted.

use std::time::Duration;

use rand::seq::SliceRandom;

use super::backend::{Backend, BackendError, GenRequest, GenResponse};
use crate::seed;
use crate::tokens::{scan_markers, OutputShape, TaskKind};

pub const DEFAULT_VOCABULARY: &[&str] = &[
    "outdoors",
    "scenery",
    "water",
    "wind",
    "landscape",
    "sky",
    "cloud",
    "tree",
    "grass",
    "mountain",
    "river",
    "lake",
    "sunset",
    "sunrise",
    "night",
    "star",
    "moon",
    "forest",
    "flower",
    "field",
    "path",
    "bridge",
    "building",
    "city",
    "street",
    "rain",
    "snow",
    "fog",
    "reflection",
    "shadow",
    "light rays",
    "horizon",
    "ocean",
    "beach",
    "sand",
    "rock",
    "cliff",
    "waterfall",
    "blue sky",
    "day",
    "long hair",
    "smile",
    "looking at viewer",
    "standing",
    "sitting",
    "dress",
    "hat",
    "umbrella",
    "bird",
    "cat",
    "boat",
    "lantern",
    "window",
    "leaves",
    "autumn",
    "spring",
    "summer",
    "winter",
    "depth of field",
    "from above",
    "from below",
    "wide shot",
    "detailed background",
    "no humans",
];

const META_VOCABULARY: &[(&str, &str)] = &[
    ("quality", "masterpiece"),
    ("aspect_ratio", "1.5"),
    ("year", "2023"),
    ("rating", "general"),
];

#[derive(Debug, Clone)]
pub struct MockBackend {
    vocabulary: Vec<String>,
    tags_per_call: usize,
    sentences_per_call: usize,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend::new(
            DEFAULT_VOCABULARY.iter().map(|s| s.to_string()).collect(),
            8,
            2,
        )
    }
}

impl MockBackend {
    pub fn new(vocabulary: Vec<String>, tags_per_call: usize, sentences_per_call: usize) -> Self {
        MockBackend {
            vocabulary,
            tags_per_call,
            sentences_per_call,
        }
    }

    fn fresh_terms(&self, prompt: &str, rng: &mut impl rand::Rng) -> Vec<String> {
        let lowered = prompt.to_lowercase();
        let mut pool: Vec<String> = self
            .vocabulary
            .iter()
            .filter(|v| !lowered.contains(v.as_str()))
            .cloned()
            .collect();
        pool.shuffle(rng);
        pool
    }

    fn render(&self, req: &GenRequest) -> String {
        let task = scan_markers(&req.prompt_text)
            .iter()
            .find_map(|m| TaskKind::from_token(m.text));
        let shape = task.map_or(OutputShape::Tags, TaskKind::output_shape);
        let mix =
            seed::splitmix64(seed::fnv1a(req.prompt_text.as_bytes()) ^ seed::splitmix64(req.seed));
        let mut rng = seed::rng(mix);
        let mut pool = self.fresh_terms(&req.prompt_text, &mut rng).into_iter();

        let n_tags = self.tags_per_call.min(req.max_new_units);
        let n_sent = self.sentences_per_call.min(req.max_new_units);
        let mut take_tags = || pool.by_ref().take(n_tags).collect::<Vec<_>>().join(", ");
        match shape {
            OutputShape::Tags => take_tags(),
            OutputShape::Meta => META_VOCABULARY
                .iter()
                .filter(|(k, _)| !req.prompt_text.contains(&format!("{k}: ")))
                .take(n_tags)
                .map(|(k, v)| format!("{k}: {v}"))
                .collect::<Vec<_>>()
                .join(", "),
            OutputShape::Nl | OutputShape::TagsThenNl | OutputShape::NlThenTags => {
                let tags = if shape == OutputShape::Nl {
                    String::new()
                } else {
                    take_tags()
                };
                let nl = pool
                    .by_ref()
                    .take(n_sent)
                    .enumerate()
                    .map(|(i, term)| sentence_for(&term, i))
                    .collect::<Vec<_>>()
                    .join(" ");
                match shape {
                    OutputShape::Nl => nl,
                    OutputShape::TagsThenNl => format!("{tags}\n{nl}"),
                    _ => format!("{nl}\n{tags}"),
                }
            }
        }
    }
}

fn sentence_for(term: &str, i: usize) -> String {
    match i % 3 {
        0 => format!("The scene features {term}."),
        1 => format!("In the background there is {term}."),
        _ => format!("Soft light falls on the {term}."),
    }
}

impl Backend for MockBackend {
    fn complete(&self, req: &GenRequest) -> Result<GenResponse, BackendError> {
        req.validate()?;
        Ok(GenResponse {
            text: self.render(req),
            finished: true,
            elapsed: Duration::ZERO,
        })
    }
}

/// Convenience wrapper matching the backend contract for the default mock.
pub fn mock_generate(req: &GenRequest) -> GenResponse {
    MockBackend::default()
        .complete(req)
        .unwrap_or_else(|_| GenResponse {
            text: String::new(),
            finished: true,
            elapsed: Duration::ZERO,
        })
}
