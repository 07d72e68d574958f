//! Unsupervised anomaly detectors: RBF one-class SVM and minimum covariance
//! determinant (FastMCD) with robust Mahalanobis distances.
//!
//! Both score so that larger raw values are more anomalous.

mod chi2;
mod mahalanobis;
mod mcd;
mod ocsvm;

pub use chi2::{chi2_cdf, chi2_quantile};
pub use mahalanobis::{mahalanobis, MahalanobisMetric};
pub use mcd::{mcd_fit, mcd_fit_traced, mcd_score, McdConfig, McdModel};
pub use ocsvm::{
    median_heuristic, ocsvm_fit, ocsvm_score, rbf_kernel, OcsvmConfig, OcsvmModel, RbfParams,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A detector's verdict on one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    /// Detector-native score, larger = more anomalous.
    pub raw: f64,
    /// Raw score rescaled into [0, 1] against a reference window.
    pub normalized: Option<f64>,
}

impl AnomalyScore {
    pub fn raw(raw: f64) -> Self {
        AnomalyScore { raw, normalized: None }
    }
}

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("all points are identical")]
    DegenerateData,
    #[error("solver stopped after {iterations} iterations with KKT violation {violation:e}")]
    NotConverged { violation: f64, iterations: usize, model: Box<OcsvmModel> },
    #[error("covariance is singular or ill-conditioned (condition number {condition:e})")]
    SingularCovariance { condition: f64 },
    #[error("need more than d + 1 = {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("every random start produced a singular scatter matrix")]
    DegenerateSubset,
}

/// Checks that `data` is non-empty and rectangular; returns the dimension.
fn dimension(data: &[Vec<f64>]) -> Result<usize, DetectorError> {
    let d = data.first().map_or(0, Vec::len);
    for row in data {
        if row.len() != d {
            return Err(DetectorError::DimensionMismatch { expected: d, got: row.len() });
        }
    }
    if d == 0 {
        return Err(DetectorError::InvalidParams("data must have at least one row and one column".into()));
    }
    Ok(d)
}
