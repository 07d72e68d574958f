//! Feature construction: first-order IIR memory over daily alarm counts,
//! and SMOTE rebalancing of the training rows.

use std::io::Write;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{AlarmCode, MachineSeries, N_ALARMS};

pub const DEFAULT_ALPHA: f64 = 0.63;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("alpha {0} must lie strictly inside (0, 1)")]
    AlphaOutOfRange(f64),
    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("empty series")]
    EmptySeries,
    #[error("SMOTE needs more minority rows than neighbours: {minority} minority rows, k = {k}")]
    TooFewMinority { minority: usize, k: usize },
    #[error("invalid SMOTE config: {0}")]
    InvalidConfig(String),
}

/// Runs `y(n) = alpha * y(n-1) + x(n)` componentwise with `y(-1) = 0`.
///
/// With `reset_on_order`, the state is cleared after every day whose label
/// is true, so each output only accumulates alarms since the last work order.
pub fn iir_filter(
    x: &[Vec<f64>],
    alpha: f64,
    reset_on_order: bool,
    labels: &[bool],
) -> Result<Vec<Vec<f64>>, PreprocessError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PreprocessError::AlphaOutOfRange(alpha));
    }
    if labels.len() != x.len() {
        return Err(PreprocessError::LengthMismatch { what: "labels", expected: x.len(), got: labels.len() });
    }
    let width = x.first().map_or(0, Vec::len);
    let mut state = vec![0.0; width];
    let mut out = Vec::with_capacity(x.len());
    for (n, xn) in x.iter().enumerate() {
        if xn.len() != width {
            return Err(PreprocessError::LengthMismatch { what: "input row", expected: width, got: xn.len() });
        }
        if reset_on_order && n > 0 && labels[n - 1] {
            state.iter_mut().for_each(|s| *s = 0.0);
        }
        for (s, &v) in state.iter_mut().zip(xn) {
            *s = alpha * *s + v;
        }
        out.push(state.clone());
    }
    Ok(out)
}

/// Row-major feature rows with per-row provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub width: usize,
    pub data: Vec<f64>,
    pub labels: Vec<bool>,
    pub machine_ids: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub synthetic: Vec<bool>,
}

impl FeatureMatrix {
    pub fn empty(width: usize) -> Self {
        FeatureMatrix {
            width,
            data: Vec::new(),
            labels: Vec::new(),
            machine_ids: Vec::new(),
            dates: Vec::new(),
            synthetic: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width.max(1)).take(self.len())
    }

    pub fn push_row(&mut self, row: &[f64], label: bool, machine_id: &str, date: NaiveDate, synthetic: bool) {
        assert_eq!(row.len(), self.width, "row width");
        self.data.extend_from_slice(row);
        self.labels.push(label);
        self.machine_ids.push(machine_id.to_string());
        self.dates.push(date);
        self.synthetic.push(synthetic);
    }

    /// Rows `range` as a new matrix.
    pub fn slice(&self, range: std::ops::Range<usize>) -> FeatureMatrix {
        FeatureMatrix {
            width: self.width,
            data: self.data[range.start * self.width..range.end * self.width].to_vec(),
            labels: self.labels[range.clone()].to_vec(),
            machine_ids: self.machine_ids[range.clone()].to_vec(),
            dates: self.dates[range.clone()].to_vec(),
            synthetic: self.synthetic[range].to_vec(),
        }
    }

    pub fn append(&mut self, other: &FeatureMatrix) {
        assert_eq!(self.width, other.width, "row width");
        self.data.extend_from_slice(&other.data);
        self.labels.extend_from_slice(&other.labels);
        self.machine_ids.extend_from_slice(&other.machine_ids);
        self.dates.extend_from_slice(&other.dates);
        self.synthetic.extend_from_slice(&other.synthetic);
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// CSV dump: `machine_id,date,f_A1..f_A201,label,synthetic`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["machine_id".to_string(), "date".to_string()];
        if self.width == N_ALARMS {
            header.extend(AlarmCode::ALL.iter().map(|c| format!("f_{c}")));
        } else {
            header.extend((0..self.width).map(|j| format!("f_{j}")));
        }
        header.push("label".into());
        header.push("synthetic".into());
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.machine_ids[i].clone(), self.dates[i].format("%Y-%m-%d").to_string()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            rec.push((self.labels[i] as u8).to_string());
            rec.push((self.synthetic[i] as u8).to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Filters a machine's alarm counts into feature rows, resetting the
/// memory after each work order.
pub fn build_feature_matrix(series: &MachineSeries, alpha: f64) -> Result<FeatureMatrix, PreprocessError> {
    build_feature_matrix_with(series, alpha, true)
}

pub fn build_feature_matrix_with(
    series: &MachineSeries,
    alpha: f64,
    reset_on_order: bool,
) -> Result<FeatureMatrix, PreprocessError> {
    if series.is_empty() {
        return Err(PreprocessError::EmptySeries);
    }
    let x: Vec<Vec<f64>> =
        series.days.iter().map(|d| d.alarm_counts.iter().map(|&c| c as f64).collect()).collect();
    let labels = series.labels();
    let y = iir_filter(&x, alpha, reset_on_order, &labels)?;
    let n = y.len();
    Ok(FeatureMatrix {
        width: N_ALARMS,
        data: y.into_iter().flatten().collect(),
        labels,
        machine_ids: vec![series.machine_id.clone(); n],
        dates: series.dates(),
        synthetic: vec![false; n],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Desired minority:majority ratio after augmentation.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig { k_neighbors: 5, target_ratio: 1.0, seed: 0 }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.k_neighbors == 0 {
            return Err(PreprocessError::InvalidConfig("k_neighbors must be >= 1".into()));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(PreprocessError::InvalidConfig(format!("target_ratio {} not in (0, 1]", self.target_ratio)));
        }
        Ok(())
    }
}

/// Number of synthetic rows SMOTE adds for the given class sizes.
pub fn smote_deficit(minority: usize, majority: usize, target_ratio: f64) -> usize {
    let target = (target_ratio * majority as f64).round() as usize;
    target.saturating_sub(minority)
}

/// `p + lambda * (q - p)`.
pub fn interpolate(p: &[f64], q: &[f64], lambda: f64) -> Vec<f64> {
    p.iter().zip(q).map(|(a, b)| a + lambda * (b - a)).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices (into `members`) of the `k` nearest other members of each member,
/// ties broken by position.
fn nearest_neighbours(fm: &FeatureMatrix, members: &[usize], k: usize) -> Vec<Vec<usize>> {
    members
        .iter()
        .enumerate()
        .map(|(a, &i)| {
            let mut cand: Vec<(f64, usize)> = members
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(b, &j)| (sq_dist(fm.row(i), fm.row(j)), b))
                .collect();
            cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            cand.into_iter().take(k).map(|(_, b)| b).collect()
        })
        .collect()
}

/// Appends synthetic minority rows until the minority class reaches
/// `round(target_ratio * majority)`. Original rows are kept unchanged and in
/// order; synthetic rows follow, flagged in `synthetic` and carrying the
/// machine id and date of the row they were grown from.
pub fn smote_oversample(features: &FeatureMatrix, cfg: &SmoteConfig) -> Result<FeatureMatrix, PreprocessError> {
    cfg.validate()?;
    let pos: Vec<usize> = (0..features.len()).filter(|&i| features.labels[i]).collect();
    let neg: Vec<usize> = (0..features.len()).filter(|&i| !features.labels[i]).collect();
    let (minority, majority, minority_label) = if pos.len() <= neg.len() { (pos, neg, true) } else { (neg, pos, false) };

    let deficit = smote_deficit(minority.len(), majority.len(), cfg.target_ratio);
    if deficit == 0 {
        return Ok(features.clone());
    }
    if minority.len() < 2 || cfg.k_neighbors >= minority.len() {
        return Err(PreprocessError::TooFewMinority { minority: minority.len(), k: cfg.k_neighbors });
    }

    let knn = nearest_neighbours(features, &minority, cfg.k_neighbors);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = features.clone();
    out.data.reserve(deficit * features.width);
    for _ in 0..deficit {
        let base = rng.random_range(0..minority.len());
        let nb = knn[base][rng.random_range(0..cfg.k_neighbors)];
        let lambda: f64 = rng.random();
        let (p, q) = (minority[base], minority[nb]);
        let row = interpolate(features.row(p), features.row(q), lambda);
        let (id, date) = (features.machine_ids[p].clone(), features.dates[p]);
        out.push_row(&row, minority_label, &id, date, true);
    }
    Ok(out)
}
