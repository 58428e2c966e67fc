use nalgebra::SymmetricEigen;

use super::similarity::{cosine_similarity_matrix, SimilarityMatrix};
use super::{EmbeddingSet, MetricError};

const CLIP: f64 = 1e-10;
const SUM_TOLERANCE: f64 = 1e-6;

/// Exponential of the Shannon entropy of the eigenvalues of `K / n`, where
/// `K` is the cosine-similarity kernel. Lies in `[1, n]`.
pub fn vendi_score(e: &EmbeddingSet) -> Result<f64, MetricError> {
    vendi_from_similarity(&cosine_similarity_matrix(e)?)
}

pub fn vendi_from_similarity(k: &SimilarityMatrix) -> Result<f64, MetricError> {
    let n = k.n();
    if n == 0 {
        return Err(MetricError::Empty);
    }
    let scaled = k.matrix() / n as f64;
    let eig = SymmetricEigen::new(scaled);
    let mut lambdas: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| if l < CLIP { 0.0 } else { l })
        .collect();
    let sum: f64 = lambdas.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(MetricError::Numerical(format!(
            "eigenvalues of K/n sum to {sum}, expected 1"
        )));
    }
    lambdas.iter_mut().for_each(|l| *l /= sum);
    let entropy: f64 = lambdas
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln())
        .sum();
    Ok(entropy.exp().clamp(1.0, n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: Vec<Vec<f64>>) -> EmbeddingSet {
        EmbeddingSet::new(v).unwrap()
    }

    #[test]
    fn identical_vectors_score_one() {
        let v = vendi_score(&set(vec![vec![0.3, -1.2, 2.0]; 7])).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthonormal_vectors_score_n() {
        let n = 5;
        let basis: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        assert!((vendi_score(&set(basis)).unwrap() - n as f64).abs() < 1e-9);
    }

    #[test]
    fn two_pairs_score_two() {
        // K/4 has eigenvalues {0.5, 0.5, 0, 0}
        let e = set(vec![
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ]);
        assert!((vendi_score(&e).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_vector() {
        assert_eq!(vendi_score(&set(vec![vec![2.0]])).unwrap(), 1.0);
    }
}
