//! Core library for structured text-to-image prompt work: parsing and
//! serializing tag/sentence/metadata prompts, forging language-model training
//! corpora, running multi-step prompt expansion against a pluggable text
//! generator, diversity and fidelity metrics over embeddings, and pairwise
//! human-preference analytics.

pub mod forge;
pub mod metrics;
pub mod preference;
pub mod presample;
pub mod prompt;
pub mod seed;
pub mod tokens;

pub use forge::{CaptionRecord, ForgeConfig, PromptPair, TrainingSample};
pub use metrics::EmbeddingSet;
pub use preference::{EloReport, Metric, ResultsReport, VoteRecord};
pub use presample::{Backend, GenRequest, GenResponse};
pub use prompt::{LengthClass, MetadataEntry, Sentence, StructuredPrompt, Tag};
pub use tokens::TaskKind;
