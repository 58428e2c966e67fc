use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{EmbeddingSet, MetricError};

const EPSILON: f64 = 1e-6;

/// Sample mean and unbiased covariance of an embedding set.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    pub fn fit(e: &EmbeddingSet) -> Result<Self, MetricError> {
        let n = e.len();
        if n < 2 {
            return Err(MetricError::TooFew { needed: 2, got: n });
        }
        let d = e.dim();
        let data = DMatrix::from_row_iterator(n, d, e.vectors().iter().flatten().copied());
        let mean = data.row_mean().transpose();
        let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);
        let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
        symmetrize(&mut cov);
        Ok(Gaussian { mean, cov })
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Square root of a symmetric PSD matrix via eigendecomposition, negative
/// eigenvalues clipped to zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `Tr((A B)^{1/2})` computed as the trace of the root of the symmetric
/// product `A^{1/2} B A^{1/2}`. `None` when that product is clearly
/// indefinite, which only happens for numerically broken inputs.
fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let ra = psd_sqrt(a);
    let mut m = &ra * b * &ra;
    symmetrize(&mut m);
    let eig = SymmetricEigen::new(m);
    let scale = eig
        .eigenvalues
        .iter()
        .fold(1.0f64, |acc, l| acc.max(l.abs()));
    if eig.eigenvalues.iter().any(|&l| l < -1e-8 * scale) {
        return None;
    }
    Some(eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum())
}

/// Frechet distance between Gaussians fitted to the two sets:
/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2})`.
pub fn frechet_distance(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64, MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimensionMismatch {
            index: 0,
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let ga = Gaussian::fit(a)?;
    let gb = Gaussian::fit(b)?;
    let diff = (&ga.mean - &gb.mean).norm_squared();
    let tr = ga.cov.trace() + gb.cov.trace();
    let cross = match trace_sqrt_product(&ga.cov, &gb.cov) {
        Some(t) => t,
        None => {
            let eye = DMatrix::<f64>::identity(a.dim(), a.dim()) * EPSILON;
            trace_sqrt_product(&(&ga.cov + &eye), &(&gb.cov + &eye)).ok_or_else(|| {
                MetricError::Numerical("covariance product is not positive semi-definite".into())
            })?
        }
    };
    let d = diff + tr - 2.0 * cross;
    if !d.is_finite() {
        return Err(MetricError::Numerical(format!("distance evaluated to {d}")));
    }
    Ok(d.max(0.0))
}
