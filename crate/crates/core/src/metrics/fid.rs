//! Gaussian fit and Fréchet distance between layout feature distributions.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::linalg::{matmul, sqrt_psd, symmetric_eigen};
use super::MetricsError;

/// Ridge added to every fitted covariance diagonal.
pub const COVARIANCE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidStats {
    pub mean: Vec<f64>,
    /// Row-major `dim×dim`.
    pub covariance: Vec<f64>,
    pub count: usize,
}

impl FidStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.dim() + j]
    }
}

/// Sample mean and unbiased covariance plus `COVARIANCE_EPSILON·I`.
pub fn fit_gaussian(vectors: &[Vec<f64>]) -> Result<FidStats, MetricsError> {
    if vectors.len() < 2 {
        return Err(MetricsError::InsufficientSamples(vectors.len()));
    }
    let d = vectors[0].len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != d) {
        return Err(MetricsError::DimensionMismatch(d, bad.len()));
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; d * d];
    for v in vectors {
        for i in 0..d {
            let di = v[i] - mean[i];
            if di == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i * d + j] += di * (v[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let c = cov[i * d + j] / (n - 1.0);
            cov[i * d + j] = c;
            cov[j * d + i] = c;
        }
        cov[i * d + i] += COVARIANCE_EPSILON;
    }
    Ok(FidStats {
        mean,
        covariance: cov,
        count: vectors.len(),
    })
}

/// `‖μ₁−μ₂‖² + Tr Σ₁ + Tr Σ₂ − 2 Tr (S₁ Σ₂ S₁)^{1/2}` with `S₁ = Σ₁^{1/2}`.
/// The symmetric form keeps every eigenproblem real; the result is clamped
/// at zero.
pub fn frechet_distance(a: &FidStats, b: &FidStats) -> Result<f64, MetricsError> {
    let d = a.dim();
    if b.dim() != d || a.covariance.len() != d * d || b.covariance.len() != d * d {
        return Err(MetricsError::DimensionMismatch(d, b.dim()));
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let tr_a: f64 = (0..d).map(|i| a.cov(i, i)).sum();
    let tr_b: f64 = (0..d).map(|i| b.cov(i, i)).sum();
    let s1 = sqrt_psd(&a.covariance, d);
    let m = matmul(&matmul(&s1, &b.covariance, d), &s1, d);
    let tr_sqrt: f64 = symmetric_eigen(&m, d).values.iter().map(|l| libm::sqrt(l.max(0.0))).sum();
    Ok((mean_term + tr_a + tr_b - 2.0 * tr_sqrt).max(0.0))
}
