use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::DetectorError;

/// Largest accepted covariance condition number.
pub const MAX_CONDITION: f64 = 1e12;

/// Mahalanobis distance to a fixed center, backed by the Cholesky factor
/// of the covariance (`cov = L Lᵀ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MahalanobisMetric {
    mean: Vec<f64>,
    /// Row-major lower-triangular factor.
    chol: Vec<f64>,
    log_det: f64,
}

impl MahalanobisMetric {
    /// `cov` is row-major `d x d`.
    pub fn new(mean: &[f64], cov: &[f64]) -> Result<Self, DetectorError> {
        let d = mean.len();
        if cov.len() != d * d || d == 0 {
            return Err(DetectorError::DimensionMismatch { expected: d * d, got: cov.len() });
        }
        let m = DMatrix::from_row_slice(d, d, cov);
        // symmetry up to rounding
        let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if (0..d).any(|i| (0..i).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale.max(1.0))) {
            return Err(DetectorError::InvalidParams("covariance is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(m.clone()).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(DetectorError::SingularCovariance { condition });
        }
        let l = m.cholesky().ok_or(DetectorError::SingularCovariance { condition })?.l();
        let mut chol = vec![0.0; d * d];
        let mut log_det = 0.0;
        for i in 0..d {
            for j in 0..=i {
                chol[i * d + j] = l[(i, j)];
            }
            log_det += 2.0 * l[(i, i)].ln();
        }
        Ok(MahalanobisMetric { mean: mean.to_vec(), chol, log_det })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `ln det(cov)`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Squared distance: `‖L⁻¹(x − mean)‖²` by forward substitution.
    pub fn distance_sq(&self, x: &[f64]) -> Result<f64, DetectorError> {
        let d = self.dim();
        if x.len() != d {
            return Err(DetectorError::DimensionMismatch { expected: d, got: x.len() });
        }
        let mut z = vec![0.0; d];
        let mut acc = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.chol[i * d + j] * z[j];
            }
            z[i] = s / self.chol[i * d + i];
            acc += z[i] * z[i];
        }
        Ok(acc)
    }

    pub fn distance(&self, x: &[f64]) -> Result<f64, DetectorError> {
        self.distance_sq(x).map(f64::sqrt)
    }
}

/// `sqrt((x − mean)ᵀ cov⁻¹ (x − mean))` for a row-major SPD `cov`.
pub fn mahalanobis(x: &[f64], mean: &[f64], cov: &[f64]) -> Result<f64, DetectorError> {
    MahalanobisMetric::new(mean, cov)?.distance(x)
}
