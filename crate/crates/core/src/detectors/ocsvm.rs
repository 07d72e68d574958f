//! One-class SVM with an RBF kernel, trained in the dual.
//!
//! The dual is normalized so the coefficients sum to one:
//!
//! ```text
//! minimize ½ αᵀQα   s.t.  0 ≤ αᵢ ≤ 1/(νn),  Σαᵢ = 1,   Qᵢⱼ = k(xᵢ, xⱼ)
//! ```
//!
//! and solved by pairwise (SMO) updates on the maximal violating pair. The
//! offset ρ is the mean of `(Qα)ᵢ` over margin support vectors
//! (`0 < αᵢ < 1/(νn)`), or the median over all support vectors when no
//! coefficient is strictly inside its box.

use serde::{Deserialize, Serialize};

use super::{dimension, AnomalyScore, DetectorError};

/// `exp(−‖x − z‖² / 2σ²)`.
pub fn rbf_kernel(x: &[f64], z: &[f64], sigma: f64) -> Result<f64, DetectorError> {
    if x.len() != z.len() {
        return Err(DetectorError::DimensionMismatch { expected: x.len(), got: z.len() });
    }
    if !(sigma > 0.0) {
        return Err(DetectorError::NonPositiveSigma(sigma));
    }
    Ok(kernel(x, z, gamma(sigma)))
}

fn gamma(sigma: f64) -> f64 {
    1.0 / (2.0 * sigma * sigma)
}

#[inline]
fn kernel(x: &[f64], z: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Resolved kernel bandwidth and ν.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfParams {
    pub sigma: f64,
    pub nu: f64,
}

impl RbfParams {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(DetectorError::NonPositiveSigma(self.sigma));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(DetectorError::InvalidParams(format!("nu {} not in (0, 1]", self.nu)));
        }
        Ok(())
    }
}

/// User-facing settings; `sigma = None` selects the median heuristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcsvmConfig {
    pub sigma: Option<f64>,
    pub nu: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OcsvmConfig {
    fn default() -> Self {
        OcsvmConfig { sigma: None, nu: 0.5, tol: 1e-6, max_iter: 100_000 }
    }
}

impl OcsvmConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        RbfParams { sigma: self.sigma.unwrap_or(1.0), nu: self.nu }.validate()?;
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(DetectorError::InvalidParams("tol must be > 0 and max_iter >= 1".into()));
        }
        Ok(())
    }

    pub fn fit(&self, data: &[Vec<f64>]) -> Result<OcsvmModel, DetectorError> {
        self.validate()?;
        let sigma = match self.sigma {
            Some(s) => s,
            None => median_heuristic(data)?,
        };
        ocsvm_fit(data, &RbfParams { sigma, nu: self.nu }, self.tol, self.max_iter)
    }
}

/// Median of the pairwise Euclidean distances; the mean of the non-zero
/// distances when more than half the pairs coincide.
pub fn median_heuristic(data: &[Vec<f64>]) -> Result<f64, DetectorError> {
    dimension(data)?;
    let mut dists = Vec::with_capacity(data.len() * data.len().saturating_sub(1) / 2);
    for i in 0..data.len() {
        for j in i + 1..data.len() {
            dists.push(data[i].iter().zip(&data[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    if dists.is_empty() {
        return Err(DetectorError::DegenerateData);
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 { dists[m / 2] } else { 0.5 * (dists[m / 2 - 1] + dists[m / 2]) };
    if median > 0.0 {
        return Ok(median);
    }
    let nonzero: Vec<f64> = dists.into_iter().filter(|&v| v > 0.0).collect();
    if nonzero.is_empty() {
        return Err(DetectorError::DegenerateData);
    }
    Ok(nonzero.iter().sum::<f64>() / nonzero.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub params: RbfParams,
    /// Maximal KKT violation at return.
    pub kkt_violation: f64,
    pub iterations: usize,
    /// `½ αᵀQα` at the solution.
    pub objective: f64,
    /// Training-set size the box bound `1/(νn)` refers to.
    pub n_train: usize,
}

impl OcsvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// `Σ αᵢ k(xᵢ, x)`.
    pub fn kernel_sum(&self, x: &[f64]) -> f64 {
        let g = gamma(self.params.sigma);
        self.support_vectors.iter().zip(&self.alphas).map(|(sv, a)| a * kernel(sv, x, g)).sum()
    }

    /// Decision value `f(x) = Σ αᵢ k(xᵢ, x) − ρ`; negative outside the support.
    pub fn decision(&self, x: &[f64]) -> Result<f64, DetectorError> {
        if x.len() != self.dim() {
            return Err(DetectorError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.kernel_sum(x) - self.rho)
    }

    /// Outside the learned support by more than the solver tolerance.
    pub fn is_outlier(&self, x: &[f64]) -> Result<bool, DetectorError> {
        Ok(-self.decision(x)? > self.kkt_violation.max(1e-12))
    }

    pub fn upper_bound(&self) -> f64 {
        1.0 / (self.params.nu * self.n_train as f64)
    }
}

/// Raw anomaly score `ρ − Σ αᵢ k(xᵢ, x)`.
pub fn ocsvm_score(model: &OcsvmModel, x: &[f64]) -> Result<AnomalyScore, DetectorError> {
    model.decision(x).map(|f| AnomalyScore::raw(-f))
}

pub fn ocsvm_fit(data: &[Vec<f64>], params: &RbfParams, tol: f64, max_iter: usize) -> Result<OcsvmModel, DetectorError> {
    params.validate()?;
    dimension(data)?;
    let n = data.len();
    if n < 2 {
        return Err(DetectorError::InvalidParams(format!("need at least 2 points, got {n}")));
    }
    if data.iter().all(|r| r == &data[0]) {
        return Err(DetectorError::DegenerateData);
    }
    let g = gamma(params.sigma);
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
        for j in 0..i {
            let v = kernel(&data[i], &data[j], g);
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }
    let c = 1.0 / (params.nu * n as f64);

    // Feasible start: fill coefficients up to the bound in index order.
    let mut alpha = vec![0.0; n];
    let mut remaining = 1.0;
    for a in alpha.iter_mut() {
        if remaining <= 0.0 {
            break;
        }
        *a = c.min(remaining);
        remaining -= *a;
    }
    let mut grad = vec![0.0; n];
    for (j, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for i in 0..n {
                grad[i] += a * q[i * n + j];
            }
        }
    }

    let at_upper = |a: f64| a >= c * (1.0 - 1e-12);
    let mut iterations = 0;
    let violation = loop {
        // i: may grow (α < C), smallest gradient; j: may shrink (α > 0), largest
        let (mut i, mut gmin) = (usize::MAX, f64::INFINITY);
        let (mut j, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        for k in 0..n {
            if !at_upper(alpha[k]) && grad[k] < gmin {
                (i, gmin) = (k, grad[k]);
            }
            if alpha[k] > 0.0 && grad[k] > gmax {
                (j, gmax) = (k, grad[k]);
            }
        }
        let violation = if i == usize::MAX || j == usize::MAX { 0.0 } else { (gmax - gmin).max(0.0) };
        if violation < tol || iterations >= max_iter {
            break violation;
        }
        iterations += 1;
        let eta = (q[i * n + i] + q[j * n + j] - 2.0 * q[i * n + j]).max(1e-12);
        let t = ((gmax - gmin) / eta).min(c - alpha[i]).min(alpha[j]);
        alpha[i] += t;
        alpha[j] -= t;
        if at_upper(alpha[i]) {
            alpha[i] = c;
        }
        if alpha[j] < c * 1e-14 {
            alpha[j] = 0.0;
        }
        for k in 0..n {
            grad[k] += t * (q[k * n + i] - q[k * n + j]);
        }
    };

    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();
    let free: Vec<f64> = (0..n).filter(|&k| alpha[k] > 0.0 && !at_upper(alpha[k])).map(|k| grad[k]).collect();
    let rho = if !free.is_empty() {
        free.iter().sum::<f64>() / free.len() as f64
    } else {
        let mut sv: Vec<f64> = (0..n).filter(|&k| alpha[k] > 0.0).map(|k| grad[k]).collect();
        sv.sort_by(f64::total_cmp);
        let m = sv.len();
        if m % 2 == 1 { sv[m / 2] } else { 0.5 * (sv[m / 2 - 1] + sv[m / 2]) }
    };

    let (support_vectors, alphas) =
        (0..n).filter(|&k| alpha[k] > 0.0).map(|k| (data[k].clone(), alpha[k])).unzip();
    let model = OcsvmModel {
        support_vectors,
        alphas,
        rho,
        params: *params,
        kkt_violation: violation,
        iterations,
        objective,
        n_train: n,
    };
    if violation >= tol {
        return Err(DetectorError::NotConverged { violation, iterations, model: Box::new(model) });
    }
    Ok(model)
}
