use nalgebra::DMatrix;

use super::{EmbeddingSet, MetricError};

/// Symmetric cosine-similarity matrix with an exact unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(DMatrix<f64>);

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }
}

pub fn cosine_similarity_matrix(e: &EmbeddingSet) -> Result<SimilarityMatrix, MetricError> {
    let units: Vec<Vec<f64>> = e
        .vectors()
        .iter()
        .enumerate()
        .map(|(index, v)| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                Err(MetricError::ZeroVector { index })
            } else {
                Ok(v.iter().map(|x| x / norm).collect())
            }
        })
        .collect::<Result<_, _>>()?;
    let n = units.len();
    let mut k = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dot: f64 = units[i].iter().zip(&units[j]).map(|(a, b)| a * b).sum();
            let dot = dot.clamp(-1.0, 1.0);
            k[(i, j)] = dot;
            k[(j, i)] = dot;
        }
    }
    Ok(SimilarityMatrix(k))
}
