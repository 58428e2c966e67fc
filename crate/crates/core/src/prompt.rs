//! Prompt domain types: tags, sentences, metadata entries, length classes and
//! the canonical text layout that ties them together.
//!
//! The canonical layout of a [`StructuredPrompt`] is line oriented:
//!
//! ```text
//! quality: masterpiece        <- one metadata entry per line
//! artist: picasso
//! outdoors, scenery, water    <- comma-joined tags
//! A girl stands. She smiles.  <- space-joined sentences
//! ```
//!
//! Empty sections are omitted entirely.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("tag is empty after normalization")]
    EmptyTag,
    #[error("tag {0:?} contains a comma or line break")]
    InvalidTag(String),
    #[error("sentence is empty")]
    EmptySentence,
    #[error("sentence index must be >= 1")]
    ZeroSentenceIndex,
    #[error("metadata content is empty for category {0}")]
    EmptyMetadata(String),
    #[error("unknown length class {0:?}")]
    UnknownLength(String),
}

/// Lowercase, collapse internal whitespace runs to one space, trim.
pub fn normalize_tag(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// A single comma-free descriptor, stored in normalized form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Tag(String);

impl Tag {
    pub fn new(raw: &str) -> Result<Self, PromptError> {
        if raw.contains(',') || raw.contains('\n') || raw.contains('\r') {
            return Err(PromptError::InvalidTag(raw.to_string()));
        }
        let norm = normalize_tag(raw);
        if norm.is_empty() {
            return Err(PromptError::EmptyTag);
        }
        Ok(Tag(norm))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Tag {
    type Error = PromptError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Tag::new(&value)
    }
}

impl From<Tag> for String {
    fn from(t: Tag) -> String {
        t.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One sentence of a natural-language caption together with its 1-based
/// position in the caption it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    text: String,
    index: usize,
}

impl Sentence {
    pub fn new(text: &str, index: usize) -> Result<Self, PromptError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(PromptError::EmptySentence);
        }
        if index == 0 {
            return Err(PromptError::ZeroSentenceIndex);
        }
        Ok(Sentence {
            text: text.to_string(),
            index,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Copy of this sentence carrying a different position.
    pub fn reindexed(&self, index: usize) -> Sentence {
        Sentence {
            text: self.text.clone(),
            index: index.max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetaCategory {
    Artist,
    Copyright,
    Character,
    AspectRatio,
    Quality,
    Year,
    Other(String),
}

impl MetaCategory {
    /// Maps a key to a category. Keys are case-insensitive and treat spaces
    /// and underscores alike.
    pub fn from_key(key: &str) -> MetaCategory {
        let key = key.trim().to_lowercase().replace(' ', "_");
        match key.as_str() {
            "artist" => MetaCategory::Artist,
            "copyright" => MetaCategory::Copyright,
            "character" => MetaCategory::Character,
            "aspect_ratio" => MetaCategory::AspectRatio,
            "quality" => MetaCategory::Quality,
            "year" => MetaCategory::Year,
            _ => MetaCategory::Other(key),
        }
    }

    pub fn key(&self) -> &str {
        match self {
            MetaCategory::Artist => "artist",
            MetaCategory::Copyright => "copyright",
            MetaCategory::Character => "character",
            MetaCategory::AspectRatio => "aspect_ratio",
            MetaCategory::Quality => "quality",
            MetaCategory::Year => "year",
            MetaCategory::Other(label) => label,
        }
    }
}

impl fmt::Display for MetaCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MetadataEntry {
    pub category: MetaCategory,
    content: String,
}

impl MetadataEntry {
    pub fn new(category: MetaCategory, content: &str) -> Result<Self, PromptError> {
        let content = content.trim();
        if content.is_empty() {
            return Err(PromptError::EmptyMetadata(category.to_string()));
        }
        Ok(MetadataEntry {
            category,
            content: content.to_string(),
        })
    }

    pub fn content(&self) -> &str {
        &self.content
    }
}

impl fmt::Display for MetadataEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.category, self.content)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthClass {
    VeryShort,
    Short,
    Long,
    VeryLong,
}

impl LengthClass {
    /// Ordered from smallest to largest cap.
    pub const ALL: [LengthClass; 4] = [
        LengthClass::VeryShort,
        LengthClass::Short,
        LengthClass::Long,
        LengthClass::VeryLong,
    ];

    pub fn max_tags(self) -> usize {
        match self {
            LengthClass::VeryShort => 18,
            LengthClass::Short => 36,
            LengthClass::Long => 48,
            LengthClass::VeryLong => 72,
        }
    }

    pub fn max_sentences(self) -> usize {
        match self {
            LengthClass::VeryShort => 2,
            LengthClass::Short => 4,
            LengthClass::Long => 8,
            LengthClass::VeryLong => 18,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LengthClass::VeryShort => "very_short",
            LengthClass::Short => "short",
            LengthClass::Long => "long",
            LengthClass::VeryLong => "very_long",
        }
    }
}

impl fmt::Display for LengthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LengthClass {
    type Err = PromptError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LengthClass::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| PromptError::UnknownLength(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthFit {
    pub class: LengthClass,
    pub overflow: bool,
}

/// Smallest class whose caps hold both counts; `VeryLong` with `overflow` set
/// when nothing fits.
pub fn classify_length(tag_count: usize, sentence_count: usize) -> LengthFit {
    LengthClass::ALL
        .into_iter()
        .find(|c| c.max_tags() >= tag_count && c.max_sentences() >= sentence_count)
        .map(|class| LengthFit {
            class,
            overflow: false,
        })
        .unwrap_or(LengthFit {
            class: LengthClass::VeryLong,
            overflow: true,
        })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructuredPrompt {
    pub meta: Vec<MetadataEntry>,
    tags: Vec<Tag>,
    nl: Vec<Sentence>,
}

impl StructuredPrompt {
    /// Builds a prompt, dropping duplicate tags and renumbering sentences so
    /// indices strictly increase.
    pub fn new(meta: Vec<MetadataEntry>, tags: Vec<Tag>, nl: Vec<Sentence>) -> Self {
        let mut p = StructuredPrompt {
            meta,
            tags: Vec::new(),
            nl: Vec::new(),
        };
        p.extend_tags(tags);
        p.extend_sentences(nl);
        p
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn nl(&self) -> &[Sentence] {
        &self.nl
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty() && self.tags.is_empty() && self.nl.is_empty()
    }

    /// Appends tags not already present. Returns how many were added.
    pub fn extend_tags<I: IntoIterator<Item = Tag>>(&mut self, tags: I) -> usize {
        let before = self.tags.len();
        for t in tags {
            if !self.tags.contains(&t) {
                self.tags.push(t);
            }
        }
        self.tags.len() - before
    }

    /// Appends sentences, keeping source indices when they still increase and
    /// renumbering otherwise.
    pub fn extend_sentences<I: IntoIterator<Item = Sentence>>(&mut self, sentences: I) {
        for s in sentences {
            let last = self.nl.last().map_or(0, Sentence::index);
            let s = if s.index() > last {
                s
            } else {
                s.reindexed(last + 1)
            };
            self.nl.push(s);
        }
    }

    pub fn truncate_tags(&mut self, len: usize) {
        self.tags.truncate(len);
    }

    pub fn set_sentences(&mut self, nl: Vec<Sentence>) {
        self.nl.clear();
        self.extend_sentences(nl);
    }

    pub fn tag_line(&self) -> String {
        join_tags(&self.tags)
    }

    pub fn nl_text(&self) -> String {
        join_sentences(&self.nl)
    }
}

pub fn join_tags(tags: &[Tag]) -> String {
    tags.iter().map(Tag::as_str).collect::<Vec<_>>().join(", ")
}

pub fn join_sentences(sentences: &[Sentence]) -> String {
    sentences
        .iter()
        .map(Sentence::text)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits on commas, trims, drops empty segments and keeps the first
/// occurrence of each normalized tag.
pub fn parse_tags(text: &str) -> Vec<Tag> {
    let mut out: Vec<Tag> = Vec::new();
    for seg in text.split([',', '\n', '\r']) {
        if let Ok(tag) = Tag::new(seg) {
            if !out.contains(&tag) {
                out.push(tag);
            }
        }
    }
    out
}

fn metadata_key(key: &str) -> Option<&str> {
    let key = key.trim();
    let mut chars = key.chars();
    let first = chars.next()?;
    if !(first.is_ascii_alphabetic() || first == '_') {
        return None;
    }
    key.chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == ' ')
        .then_some(key)
}

fn parse_meta_segment(seg: &str) -> Option<MetadataEntry> {
    let (key, value) = seg.split_once(": ")?;
    let key = metadata_key(key)?;
    MetadataEntry::new(MetaCategory::from_key(key), value).ok()
}

/// Metadata entries found in `text` plus the non-metadata residue.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedMetadata {
    pub entries: Vec<MetadataEntry>,
    pub residue: String,
}

/// Reads `key: value` segments separated by commas or line breaks. Segments
/// that are not of that form are collected, comma-joined, into the residue.
pub fn parse_metadata(text: &str) -> ParsedMetadata {
    let mut parsed = ParsedMetadata::default();
    let mut residue = Vec::new();
    for seg in text.split([',', '\n']) {
        let seg = seg.trim();
        if seg.is_empty() {
            continue;
        }
        match parse_meta_segment(seg) {
            Some(entry) => parsed.entries.push(entry),
            None => residue.push(seg),
        }
    }
    parsed.residue = residue.join(", ");
    parsed
}

const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "mt.", "vs.", "etc.", "e.g.",
    "i.e.", "no.", "approx.", "fig.",
];

fn ends_with_abbreviation(text: &str) -> bool {
    let last_word = text
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(['(', '"', '\''])
        .to_lowercase();
    ABBREVIATIONS.contains(&last_word.as_str())
}

/// Rule-based sentence splitter. A sentence ends at `.`, `!` or `?` (plus any
/// trailing closing quotes or brackets) followed by whitespace or end of
/// input, unless the word ending there is a known abbreviation.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?' | '"' | '\'' | ')' | ']')
            {
                j += 1;
            }
            let at_boundary = j == chars.len() || chars[j].1.is_whitespace();
            let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
            if at_boundary && !(c == '.' && ends_with_abbreviation(&text[start..end])) {
                push_sentence(&mut out, &text[start..end]);
                start = end;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    push_sentence(&mut out, &text[start..]);
    out
}

fn push_sentence(out: &mut Vec<Sentence>, raw: &str) {
    let idx = out.len() + 1;
    if let Ok(s) = Sentence::new(raw, idx) {
        out.push(s);
    }
}

fn looks_like_nl(line: &str) -> bool {
    line.trim_end().ends_with(['.', '!', '?', '"', '\'', ')'])
}

/// Canonical layout; see the module docs.
pub fn serialize_prompt(p: &StructuredPrompt) -> String {
    let mut lines: Vec<String> = p.meta.iter().map(ToString::to_string).collect();
    if !p.tags.is_empty() {
        lines.push(p.tag_line());
    }
    if !p.nl.is_empty() {
        lines.push(p.nl_text());
    }
    lines.join("\n")
}

/// Inverse of [`serialize_prompt`]. Leading `key: value` lines are metadata;
/// of the remaining lines the tag line comes first. When only one content
/// line remains it is read as natural language if it ends like a sentence.
pub fn parse_prompt(text: &str) -> StructuredPrompt {
    let mut meta = Vec::new();
    let mut content: Vec<&str> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if content.is_empty() && !line.contains(", ") {
            if let Some(entry) = parse_meta_segment(line) {
                meta.push(entry);
                continue;
            }
        }
        content.push(line);
    }
    let (tags, nl) = match content.as_slice() {
        [] => (Vec::new(), Vec::new()),
        [only] if looks_like_nl(only) => (Vec::new(), split_sentences(only)),
        [only] => (parse_tags(only), Vec::new()),
        [first, rest @ ..] => (parse_tags(first), split_sentences(&rest.join(" "))),
    };
    StructuredPrompt::new(meta, tags, nl)
}
