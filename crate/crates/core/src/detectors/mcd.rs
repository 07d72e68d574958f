//! Minimum covariance determinant via FastMCD.
//!
//! Every random start draws a (d+1)-subset (grown one point at a time while
//! its scatter is singular), takes the h points closest to it and then runs
//! C-steps: refit mean and covariance on the current h-subset and re-select
//! the h points with the smallest Mahalanobis distance. A C-step never
//! increases the covariance determinant. The start with the lowest
//! determinant wins, ties going to the earlier start. Windows here are tiny,
//! so the data is never partitioned into subgroups.
//!
//! Covariances are maximum-likelihood (divide by h); the winning scatter is
//! multiplied by the χ² consistency factor `(h/n) / P(χ²_{d+2} ≤ χ²_{d,h/n})`,
//! which is 1 when `h = n`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chi2::{chi2_cdf, chi2_quantile};
use super::mahalanobis::MahalanobisMetric;
use super::{dimension, AnomalyScore, DetectorError};

pub const CUTOFF_QUANTILE: f64 = 0.975;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McdConfig {
    /// Support size; `None` selects `⌊(n + d + 1)/2⌋`.
    pub h: Option<usize>,
    pub n_starts: usize,
    pub max_csteps: usize,
    pub seed: u64,
}

impl Default for McdConfig {
    fn default() -> Self {
        McdConfig { h: None, n_starts: 50, max_csteps: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McdModel {
    pub location: Vec<f64>,
    /// Row-major `d x d`, consistency factor applied.
    pub scatter: Vec<f64>,
    pub h: usize,
    pub correction: f64,
    /// `sqrt(χ²_{d,0.975})`.
    pub cutoff: f64,
    /// Determinant of the uncorrected h-subset covariance.
    pub raw_determinant: f64,
    /// Indices of the winning h-subset, ascending.
    pub support: Vec<usize>,
    metric: MahalanobisMetric,
}

impl McdModel {
    pub fn dim(&self) -> usize {
        self.location.len()
    }

    /// Robust distance to the MCD location under the MCD scatter.
    pub fn robust_distance(&self, x: &[f64]) -> Result<f64, DetectorError> {
        self.metric.distance(x)
    }

    pub fn is_outlier(&self, x: &[f64]) -> Result<bool, DetectorError> {
        Ok(self.robust_distance(x)? > self.cutoff)
    }
}

pub fn mcd_score(model: &McdModel, x: &[f64]) -> Result<AnomalyScore, DetectorError> {
    model.robust_distance(x).map(AnomalyScore::raw)
}

pub fn mcd_fit(data: &[Vec<f64>], h: Option<usize>, n_starts: usize, seed: u64) -> Result<McdModel, DetectorError> {
    mcd_fit_traced(data, &McdConfig { h, n_starts, seed, ..Default::default() }).map(|(m, _)| m)
}

/// Mean and maximum-likelihood covariance (row-major) of `data[idx]`.
fn moments(data: &[Vec<f64>], idx: &[usize], d: usize) -> (Vec<f64>, Vec<f64>) {
    let m = idx.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in idx {
        for (mu, v) in mean.iter_mut().zip(&data[i]) {
            *mu += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut cov = vec![0.0; d * d];
    for &i in idx {
        let x = &data[i];
        for a in 0..d {
            let da = x[a] - mean[a];
            for b in 0..=a {
                cov[a * d + b] += da * (x[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            cov[a * d + b] /= m;
            cov[b * d + a] = cov[a * d + b];
        }
    }
    (mean, cov)
}

/// The `h` indices with the smallest distance, ties by index, ascending.
fn closest(metric: &MahalanobisMetric, data: &[Vec<f64>], h: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = data
        .iter()
        .enumerate()
        .map(|(i, x)| (metric.distance_sq(x).expect("dimension checked"), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut sel: Vec<usize> = order[..h].iter().map(|&(_, i)| i).collect();
    sel.sort_unstable();
    sel
}

struct Candidate {
    log_det: f64,
    subset: Vec<usize>,
    metric: MahalanobisMetric,
    mean: Vec<f64>,
    cov: Vec<f64>,
}

/// Runs one random start. Returns `None` when no nonsingular subset could
/// be formed. `trace` receives ln det of every C-step's covariance.
fn run_start(
    data: &[Vec<f64>],
    d: usize,
    h: usize,
    max_csteps: usize,
    rng: &mut ChaCha8Rng,
    trace: &mut Vec<f64>,
) -> Option<Candidate> {
    let n = data.len();
    let perm = index::sample(rng, n, n).into_vec();
    let mut size = d + 1;
    let metric = loop {
        let (mean, cov) = moments(data, &perm[..size], d);
        match MahalanobisMetric::new(&mean, &cov) {
            Ok(m) => break m,
            Err(_) if size < h => size += 1,
            Err(_) => return None,
        }
    };
    let mut subset = closest(&metric, data, h);
    let mut best: Option<Candidate> = None;
    for _ in 0..max_csteps {
        let (mean, cov) = moments(data, &subset, d);
        let Ok(metric) = MahalanobisMetric::new(&mean, &cov) else {
            break;
        };
        let log_det = metric.log_det();
        trace.push(log_det);
        if let Some(b) = &best {
            if log_det >= b.log_det {
                break;
            }
        }
        let next = closest(&metric, data, h);
        let converged = next == subset;
        best = Some(Candidate { log_det, subset: std::mem::replace(&mut subset, next), metric, mean, cov });
        if converged {
            break;
        }
    }
    best
}

/// FastMCD returning, next to the model, the ln-determinant trace of every
/// start's C-steps.
pub fn mcd_fit_traced(data: &[Vec<f64>], cfg: &McdConfig) -> Result<(McdModel, Vec<Vec<f64>>), DetectorError> {
    let d = dimension(data)?;
    let n = data.len();
    if n <= d + 1 {
        return Err(DetectorError::TooFewSamples { needed: d + 2, got: n });
    }
    let h_min = (n + d).div_ceil(2);
    let h = cfg.h.unwrap_or(h_min);
    if h < h_min || h > n {
        return Err(DetectorError::InvalidParams(format!("h = {h} outside [{h_min}, {n}]")));
    }
    if cfg.n_starts == 0 || cfg.max_csteps == 0 {
        return Err(DetectorError::InvalidParams("n_starts and max_csteps must be >= 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut traces = Vec::with_capacity(cfg.n_starts);
    let mut best: Option<Candidate> = None;
    if h == n {
        // every start converges to the full sample
        let all: Vec<usize> = (0..n).collect();
        let (mean, cov) = moments(data, &all, d);
        let metric = MahalanobisMetric::new(&mean, &cov).map_err(|_| DetectorError::DegenerateSubset)?;
        traces.push(vec![metric.log_det()]);
        best = Some(Candidate { log_det: metric.log_det(), subset: all, metric, mean, cov });
    } else {
        for _ in 0..cfg.n_starts {
            let mut trace = Vec::new();
            let cand = run_start(data, d, h, cfg.max_csteps, &mut rng, &mut trace);
            traces.push(trace);
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.log_det < b.log_det) {
                    best = Some(c);
                }
            }
        }
    }
    let best = best.ok_or(DetectorError::DegenerateSubset)?;

    let correction = if h == n {
        1.0
    } else {
        let frac = h as f64 / n as f64;
        frac / chi2_cdf(d + 2, chi2_quantile(d, frac))
    };
    let scatter: Vec<f64> = best.cov.iter().map(|v| v * correction).collect();
    let metric = MahalanobisMetric::new(&best.mean, &scatter)?;
    let model = McdModel {
        location: best.mean,
        scatter,
        h,
        correction,
        cutoff: chi2_quantile(d, CUTOFF_QUANTILE).sqrt(),
        raw_determinant: best.metric.log_det().exp(),
        support: best.subset,
        metric,
    };
    Ok((model, traces))
}
