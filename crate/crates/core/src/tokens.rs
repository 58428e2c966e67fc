//! The fixed set of control tokens understood by the prompt model: one
//! placeholder, eight task selectors and four length selectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::prompt::LengthClass;

pub const EMPTY_TOKEN: &str = "<|empty|>";

/// Every control token, placeholder first, then tasks, then lengths.
pub const SPECIAL_TOKENS: [&str; 13] = [
    EMPTY_TOKEN,
    "<|gen_meta|>",
    "<|tag_to_long|>",
    "<|short_to_tag|>",
    "<|long_to_tag|>",
    "<|short_to_long|>",
    "<|short_to_tag_to_long|>",
    "<|short_to_long_to_tag|>",
    "<|tag_to_short_to_long|>",
    "<|very_short|>",
    "<|short|>",
    "<|long|>",
    "<|very_long|>",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    GenMeta,
    TagToLong,
    ShortToTag,
    LongToTag,
    ShortToLong,
    ShortToTagToLong,
    ShortToLongToTag,
    TagToShortToLong,
}

/// What a task's continuation consists of, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputShape {
    Meta,
    Tags,
    Nl,
    TagsThenNl,
    NlThenTags,
}

impl TaskKind {
    pub const ALL: [TaskKind; 8] = [
        TaskKind::GenMeta,
        TaskKind::TagToLong,
        TaskKind::ShortToTag,
        TaskKind::LongToTag,
        TaskKind::ShortToLong,
        TaskKind::ShortToTagToLong,
        TaskKind::ShortToLongToTag,
        TaskKind::TagToShortToLong,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::GenMeta => "gen_meta",
            TaskKind::TagToLong => "tag_to_long",
            TaskKind::ShortToTag => "short_to_tag",
            TaskKind::LongToTag => "long_to_tag",
            TaskKind::ShortToLong => "short_to_long",
            TaskKind::ShortToTagToLong => "short_to_tag_to_long",
            TaskKind::ShortToLongToTag => "short_to_long_to_tag",
            TaskKind::TagToShortToLong => "tag_to_short_to_long",
        }
    }

    pub fn token(self) -> &'static str {
        SPECIAL_TOKENS[1 + self as usize]
    }

    pub fn from_token(token: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|t| t.token() == token)
    }

    pub fn output_shape(self) -> OutputShape {
        match self {
            TaskKind::GenMeta => OutputShape::Meta,
            TaskKind::ShortToTag | TaskKind::LongToTag => OutputShape::Tags,
            TaskKind::TagToLong | TaskKind::ShortToLong | TaskKind::TagToShortToLong => {
                OutputShape::Nl
            }
            TaskKind::ShortToTagToLong => OutputShape::TagsThenNl,
            TaskKind::ShortToLongToTag => OutputShape::NlThenTags,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| format!("unknown task {s:?}"))
    }
}

pub fn length_token(class: LengthClass) -> &'static str {
    SPECIAL_TOKENS[9 + class as usize]
}

pub fn length_from_token(token: &str) -> Option<LengthClass> {
    LengthClass::ALL
        .into_iter()
        .find(|c| length_token(*c) == token)
}

pub fn is_special(token: &str) -> bool {
    SPECIAL_TOKENS.contains(&token)
}

/// A `<|...|>` occurrence in some text, with its byte span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenMatch<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

/// All `<|...|>` substrings, known or not, left to right and non-overlapping.
pub fn scan_markers(text: &str) -> Vec<TokenMatch<'_>> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(open) = text[from..].find("<|") {
        let start = from + open;
        match text[start + 2..].find("|>") {
            Some(close) => {
                let end = start + 2 + close + 2;
                out.push(TokenMatch {
                    text: &text[start..end],
                    start,
                    end,
                });
                from = end;
            }
            None => break,
        }
    }
    out
}
