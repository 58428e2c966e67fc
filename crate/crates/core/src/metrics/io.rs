//! Embedding and score file readers.
//!
//! Embeddings come either as CSV (one vector per row, optional header,
//! optional non-numeric first column used as the row id) or as line-delimited
//! JSON where each line is a bare array or `{"id": ..., "vector": [...]}`.

use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};

use super::{EmbeddingSet, MetricError};

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonRow {
    Bare(Vec<f64>),
    Labeled {
        #[serde(default)]
        id: Option<String>,
        vector: Vec<f64>,
    },
}

fn input_err(line: usize, msg: impl std::fmt::Display) -> MetricError {
    MetricError::Input(format!("line {line}: {msg}"))
}

fn finish(
    vectors: Vec<Vec<f64>>,
    labels: Vec<Option<String>>,
) -> Result<EmbeddingSet, MetricError> {
    let set = EmbeddingSet::new(vectors)?;
    if labels.iter().any(Option::is_some) {
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.unwrap_or_else(|| i.to_string()))
            .collect();
        set.with_labels(labels)
    } else {
        Ok(set)
    }
}

pub fn read_embeddings_jsonl<R: BufRead>(reader: R) -> Result<EmbeddingSet, MetricError> {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| input_err(i + 1, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JsonRow>(&line).map_err(|e| input_err(i + 1, e))? {
            JsonRow::Bare(v) => {
                vectors.push(v);
                labels.push(None);
            }
            JsonRow::Labeled { id, vector } => {
                vectors.push(vector);
                labels.push(id);
            }
        }
    }
    finish(vectors, labels)
}

pub fn read_embeddings_csv<R: Read>(reader: R) -> Result<EmbeddingSet, MetricError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| input_err(i + 1, e))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = rec.iter().map(|c| c.parse().ok()).collect();
        // header row: nothing numeric
        if i == 0 && parsed.iter().all(Option::is_none) {
            continue;
        }
        let (label, cells) = if parsed[0].is_none() {
            (Some(rec[0].to_string()), &parsed[1..])
        } else {
            (None, &parsed[..])
        };
        let v = cells
            .iter()
            .map(|c| c.ok_or_else(|| input_err(i + 1, "non-numeric cell")))
            .collect::<Result<Vec<f64>, _>>()?;
        vectors.push(v);
        labels.push(label);
    }
    finish(vectors, labels)
}

/// Picks the reader from the first non-blank character.
pub fn read_embeddings(text: &str) -> Result<EmbeddingSet, MetricError> {
    match text.trim_start().chars().next() {
        Some('[') | Some('{') => read_embeddings_jsonl(text.as_bytes()),
        Some(_) => read_embeddings_csv(text.as_bytes()),
        None => Err(MetricError::Empty),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub id: String,
    pub score: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScoreRow {
    Bare(f64),
    Item { id: String, score: f64 },
}

/// Scores as line-delimited JSON: bare numbers (ids become row positions)
/// or `{"id", "score"}` objects.
pub fn read_scores(text: &str) -> Result<Vec<ScoredItem>, MetricError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = match serde_json::from_str::<ScoreRow>(line).map_err(|e| input_err(i + 1, e))? {
            ScoreRow::Bare(score) => ScoredItem {
                id: out.len().to_string(),
                score,
            },
            ScoreRow::Item { id, score } => ScoredItem { id, score },
        };
        out.push(item);
    }
    Ok(out)
}
