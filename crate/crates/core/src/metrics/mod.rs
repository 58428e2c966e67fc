//! Evaluation metrics over caller-supplied embeddings and scores.

mod frechet;
pub mod io;
pub mod scorer;
mod similarity;
mod summary;
mod vendi;

use thiserror::Error;

pub use frechet::{frechet_distance, Gaussian};
pub use similarity::{cosine_similarity_matrix, SimilarityMatrix};
pub use summary::{summarize, Histogram, ScoreSummary};
pub use vendi::{vendi_from_similarity, vendi_score};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("embedding set is empty")]
    Empty,
    #[error("vector {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("vector {index} contains a non-finite value")]
    NonFinite { index: usize },
    #[error("vector {index} has zero norm")]
    ZeroVector { index: usize },
    #[error("need at least {needed} vectors, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Input(String),
}

/// Ordered feature vectors of one common dimension, optionally labelled.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vectors: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let dim = vectors.first().map(Vec::len).ok_or(MetricError::Empty)?;
        if dim == 0 {
            return Err(MetricError::DimensionMismatch {
                index: 0,
                expected: 1,
                got: 0,
            });
        }
        for (index, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(MetricError::DimensionMismatch {
                    index,
                    expected: dim,
                    got: v.len(),
                });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(MetricError::NonFinite { index });
            }
        }
        Ok(EmbeddingSet {
            vectors,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, MetricError> {
        if labels.len() != self.vectors.len() {
            return Err(MetricError::Input(format!(
                "{} labels for {} vectors",
                labels.len(),
                self.vectors.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of row `i`, falling back to its position.
    pub fn label(&self, i: usize) -> String {
        self.labels
            .as_ref()
            .map_or_else(|| i.to_string(), |l| l[i].clone())
    }

    /// Rows whose label is in `keep`, in original order.
    pub fn select(&self, keep: &[String]) -> Result<EmbeddingSet, MetricError> {
        let keep: std::collections::HashSet<&str> = keep.iter().map(String::as_str).collect();
        let rows: Vec<usize> = (0..self.len())
            .filter(|i| keep.contains(self.label(*i).as_str()))
            .collect();
        if rows.is_empty() {
            return Err(MetricError::Empty);
        }
        let vectors = rows.iter().map(|i| self.vectors[*i].clone()).collect();
        let labels = rows.iter().map(|i| self.label(*i)).collect();
        EmbeddingSet::new(vectors)?.with_labels(labels)
    }
}
