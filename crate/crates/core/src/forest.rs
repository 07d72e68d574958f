//! Bagged CART forest for the work-order classifier.
//!
//! Trees are grown on bootstrap samples with Gini impurity, drawing `mtry`
//! candidate features at every split. Leaves keep the positive-class
//! fraction of their bootstrap samples, and the forest probability is the
//! mean of the leaf fractions. The decision threshold is calibrated on the
//! forest's own probabilities for the training rows, or optionally on the
//! out-of-bag probabilities of the original (non-synthetic) rows.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::preprocess::FeatureMatrix;
use crate::roc::{self, RocError};
use crate::synth::derive_seed;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training data must contain both classes")]
    SingleClassData,
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("row width {got} does not match model width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Roc(#[from] RocError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    #[default]
    Youden,
    F1,
}

/// Which probabilities the threshold is calibrated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Full-forest probabilities of every training row, synthetic included.
    #[default]
    InSample,
    /// Out-of-bag probabilities of the non-synthetic training rows.
    OutOfBag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub mtry: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub threshold_rule: ThresholdRule,
    pub calibration: Calibration,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            mtry: 17,
            max_depth: None,
            min_leaf: 1,
            threshold_rule: ThresholdRule::Youden,
            calibration: Calibration::InSample,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: &str| Err(ForestError::InvalidConfig(m.into()));
        if self.n_trees == 0 {
            return bad("n_trees must be >= 1");
        }
        if self.mtry == 0 {
            return bad("mtry must be >= 1");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be >= 1");
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be >= 1 when set");
        }
        Ok(())
    }
}

/// Tree node. A leaf has `feature < 0` and stores its positive fraction in
/// `value`; a split sends `x[feature] <= value` to `left`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: i32,
    pub value: f64,
    pub left: u32,
    pub right: u32,
}

impl Node {
    fn leaf(p: f64) -> Self {
        Node { feature: -1, value: p, left: 0, right: 0 }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature < 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut n = &self.nodes[0];
        while !n.is_leaf() {
            n = &self.nodes[if x[n.feature as usize] <= n.value { n.left } else { n.right } as usize];
        }
        n.value
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() { 0 } else { 1 + go(t, n.left as usize).max(go(t, n.right as usize)) }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub config: ForestConfig,
    /// `mtry` actually used after capping at the feature count.
    pub effective_mtry: usize,
    pub width: usize,
    pub n_rows: usize,
    pub n_synthetic: usize,
    /// SHA-256 over the training rows and labels.
    pub fingerprint: String,
    /// Out-of-bag AUROC on the original training rows, when defined.
    pub oob_auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub threshold: f64,
    pub train_meta: TrainMeta,
}

/// Daily classifier probabilities of one machine, chronological.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbSeries {
    pub machine_id: String,
    pub dates: Vec<chrono::NaiveDate>,
    pub p: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ProbSeries {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

struct Grower<'a> {
    data: &'a FeatureMatrix,
    mtry: usize,
    max_depth: usize,
    min_leaf: usize,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Grower<'_> {
    fn grow(&self, mut samples: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = vec![Node::leaf(0.0)];
        let mut features: Vec<usize> = (0..self.data.width).collect();
        let mut buf: Vec<(f64, bool)> = Vec::with_capacity(samples.len());
        // (node slot, sample range, depth)
        let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
        while let Some((slot, lo, hi, depth)) = stack.pop() {
            let idx = &mut samples[lo..hi];
            let n = idx.len();
            let pos = idx.iter().filter(|&&i| self.data.labels[i]).count();
            let frac = pos as f64 / n as f64;
            if pos == 0 || pos == n || depth >= self.max_depth || n < 2 * self.min_leaf {
                nodes[slot] = Node::leaf(frac);
                continue;
            }
            let Some(split) = self.best_split(idx, pos, &mut features, &mut buf, rng) else {
                nodes[slot] = Node::leaf(frac);
                continue;
            };
            // partition in place: left block holds x <= threshold
            let mut mid = 0;
            for k in 0..n {
                if self.data.row(idx[k])[split.feature] <= split.threshold {
                    idx.swap(k, mid);
                    mid += 1;
                }
            }
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::leaf(0.0));
            nodes.push(Node::leaf(0.0));
            nodes[slot] =
                Node { feature: split.feature as i32, value: split.threshold, left: left as u32, right: right as u32 };
            stack.push((right, lo + mid, hi, depth + 1));
            stack.push((left, lo, lo + mid, depth + 1));
        }
        Tree { nodes }
    }

    /// Scans features in a fresh random order. Stops after `mtry` features
    /// once a valid split exists; keeps drawing while none of the drawn
    /// features can split the node.
    fn best_split(
        &self,
        idx: &[usize],
        pos: usize,
        features: &mut [usize],
        buf: &mut Vec<(f64, bool)>,
        rng: &mut ChaCha8Rng,
    ) -> Option<Split> {
        features.shuffle(rng);
        let n = idx.len();
        let mut best: Option<Split> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            buf.clear();
            buf.extend(idx.iter().map(|&i| (self.data.row(i)[f], self.data.labels[i])));
            buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if buf[0].0 == buf[n - 1].0 {
                continue;
            }
            let mut left_pos = 0usize;
            for k in 0..n - 1 {
                left_pos += buf[k].1 as usize;
                let n_left = k + 1;
                if buf[k].0 == buf[k + 1].0 || n_left < self.min_leaf || n - n_left < self.min_leaf {
                    continue;
                }
                let n_right = n - n_left;
                let right_pos = pos - left_pos;
                // n * weighted Gini, halved
                let score = (left_pos * (n_left - left_pos)) as f64 / n_left as f64
                    + (right_pos * (n_right - right_pos)) as f64 / n_right as f64;
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let (a, b) = (buf[k].0, buf[k + 1].0);
                    let mut t = a + (b - a) / 2.0;
                    if t >= b {
                        t = a;
                    }
                    best = Some(Split { feature: f, threshold: t, score });
                }
            }
        }
        best
    }
}

fn fingerprint(data: &FeatureMatrix) -> String {
    let mut h = Sha256::new();
    h.update((data.width as u64).to_le_bytes());
    for v in &data.data {
        h.update(v.to_le_bytes());
    }
    for &l in &data.labels {
        h.update([l as u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Fitted trees plus the out-of-bag probability of every training row
/// (`None` when a row was in every bootstrap sample).
pub struct FitOutput {
    pub trees: Vec<Tree>,
    pub oob: Vec<Option<f64>>,
    pub effective_mtry: usize,
}

pub fn fit_trees(train: &FeatureMatrix, cfg: &ForestConfig) -> Result<FitOutput, ForestError> {
    cfg.validate()?;
    let pos = train.positives();
    if pos == 0 || pos == train.len() {
        return Err(ForestError::SingleClassData);
    }
    let effective_mtry = if cfg.mtry > train.width {
        log::warn!("mtry={} exceeds feature count {}; capping", cfg.mtry, train.width);
        train.width
    } else {
        cfg.mtry
    };
    let grower = Grower {
        data: train,
        mtry: effective_mtry,
        max_depth: cfg.max_depth.unwrap_or(usize::MAX),
        min_leaf: cfg.min_leaf,
    };
    let n = train.len();
    let fitted: Vec<(Tree, Vec<bool>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t as u64));
            let mut in_bag = vec![false; n];
            let samples: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    in_bag[i] = true;
                    i
                })
                .collect();
            (grower.grow(samples, &mut rng), in_bag)
        })
        .collect();

    let oob: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut sum, mut count) = (0.0, 0usize);
            for (tree, in_bag) in &fitted {
                if !in_bag[i] {
                    sum += tree.predict(train.row(i));
                    count += 1;
                }
            }
            (count > 0).then(|| sum / count as f64)
        })
        .collect();
    let trees = fitted.into_iter().map(|(t, _)| t).collect();
    Ok(FitOutput { trees, oob, effective_mtry })
}

/// Trains the forest and calibrates its threshold. Out-of-bag calibration
/// falls back to in-sample probabilities of the original rows when the
/// out-of-bag rows do not cover both classes.
pub fn train_forest(train: &FeatureMatrix, cfg: &ForestConfig) -> Result<ForestModel, ForestError> {
    let fit = fit_trees(train, cfg)?;
    let (mut oob_p, mut oob_labels) = (Vec::new(), Vec::new());
    for i in 0..train.len() {
        if let (false, Some(v)) = (train.synthetic[i], fit.oob[i]) {
            oob_p.push(v);
            oob_labels.push(train.labels[i]);
        }
    }
    let oob_auroc = roc::auroc(&oob_p, &oob_labels).ok();
    let meta = TrainMeta {
        config: cfg.clone(),
        effective_mtry: fit.effective_mtry,
        width: train.width,
        n_rows: train.len(),
        n_synthetic: train.synthetic.iter().filter(|&&s| s).count(),
        fingerprint: fingerprint(train),
        oob_auroc,
    };
    let mut model = ForestModel { trees: fit.trees, threshold: 0.5, train_meta: meta };
    let (p, labels) = match cfg.calibration {
        Calibration::OutOfBag if oob_auroc.is_some() => (oob_p, oob_labels),
        Calibration::OutOfBag => {
            log::warn!("out-of-bag rows lack a class; calibrating threshold in-sample");
            let original: Vec<usize> = (0..train.len()).filter(|&i| !train.synthetic[i]).collect();
            (
                original.iter().map(|&i| model.predict_row(train.row(i))).collect(),
                original.iter().map(|&i| train.labels[i]).collect(),
            )
        }
        Calibration::InSample => {
            let p: Vec<f64> = (0..train.len()).into_par_iter().map(|i| model.predict_row(train.row(i))).collect();
            (p, train.labels.clone())
        }
    };
    model.threshold = match cfg.threshold_rule {
        ThresholdRule::Youden => roc::choose_threshold(&p, &labels)?,
        ThresholdRule::F1 => roc::choose_threshold_f1(&p, &labels)?,
    }
    .clamp(0.0, 1.0);
    Ok(model)
}

const MAGIC: &[u8; 8] = b"PMFOREST";
const FORMAT_VERSION: u32 = 1;
const MAX_HEADER: u64 = 1 << 26;
// lengths read from the file are untrusted until the data actually arrives
const PREALLOC_CAP: usize = 1 << 16;

impl ForestModel {
    pub fn width(&self) -> usize {
        self.train_meta.width
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean leaf positive-fraction over trees, one value per row.
    pub fn predict_proba(&self, rows: &FeatureMatrix) -> Result<Vec<f64>, ForestError> {
        if rows.width != self.width() {
            return Err(ForestError::WidthMismatch { expected: self.width(), got: rows.width });
        }
        Ok(rows.rows().map(|r| self.predict_row(r)).collect())
    }

    /// Predicts every non-synthetic row and groups the results per machine,
    /// keeping each machine's rows in matrix order.
    pub fn predict_series(&self, rows: &FeatureMatrix) -> Result<Vec<ProbSeries>, ForestError> {
        let p = self.predict_proba(rows)?;
        let mut out: Vec<ProbSeries> = Vec::new();
        let mut index = std::collections::HashMap::new();
        for i in 0..rows.len() {
            if rows.synthetic[i] {
                continue;
            }
            let k = *index.entry(rows.machine_ids[i].clone()).or_insert_with(|| {
                out.push(ProbSeries { machine_id: rows.machine_ids[i].clone(), dates: vec![], p: vec![], labels: vec![] });
                out.len() - 1
            });
            out[k].dates.push(rows.dates[i]);
            out[k].p.push(p[i]);
            out[k].labels.push(rows.labels[i]);
        }
        Ok(out)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64, ForestError> {
        if x.len() != self.width() {
            return Err(ForestError::WidthMismatch { expected: self.width(), got: x.len() });
        }
        Ok(self.predict_row(x))
    }

    /// Binary layout: magic, format version (u32 LE), JSON header length
    /// (u64 LE), JSON header (threshold and training metadata), then per
    /// tree a node count (u32 LE) followed by 24-byte nodes
    /// `feature i32, left u32, right u32, pad u32, value f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ForestError> {
        #[derive(Serialize)]
        struct Header<'a> {
            threshold: f64,
            n_trees: usize,
            train_meta: &'a TrainMeta,
        }
        let header = serde_json::to_vec(&Header { threshold: self.threshold, n_trees: self.trees.len(), train_meta: &self.train_meta })
            .map_err(|e| ForestError::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::new();
        for t in &self.trees {
            buf.clear();
            buf.extend_from_slice(&(t.nodes.len() as u32).to_le_bytes());
            for n in &t.nodes {
                buf.extend_from_slice(&n.feature.to_le_bytes());
                buf.extend_from_slice(&n.left.to_le_bytes());
                buf.extend_from_slice(&n.right.to_le_bytes());
                buf.extend_from_slice(&0u32.to_le_bytes());
                buf.extend_from_slice(&n.value.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, ForestError> {
        Self::read_inner(r).map_err(|e| match e {
            ForestError::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                ForestError::Format("truncated model file".into())
            }
            other => other,
        })
    }

    fn read_inner<R: Read>(mut r: R) -> Result<Self, ForestError> {
        #[derive(Deserialize)]
        struct Header {
            threshold: f64,
            n_trees: usize,
            train_meta: TrainMeta,
        }
        let bad = |m: String| ForestError::Format(m);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a forest model file".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        r.read_exact(&mut b8)?;
        let header_len = u64::from_le_bytes(b8);
        if header_len > MAX_HEADER {
            return Err(bad(format!("header length {header_len} is implausible")));
        }
        let mut header = vec![0u8; header_len as usize];
        r.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header).map_err(|e| bad(e.to_string()))?;
        let mut trees = Vec::with_capacity(header.n_trees.min(PREALLOC_CAP));
        let mut node = [0u8; 24];
        for _ in 0..header.n_trees {
            r.read_exact(&mut b4)?;
            let count = u32::from_le_bytes(b4) as usize;
            let mut nodes = Vec::with_capacity(count.min(PREALLOC_CAP));
            for _ in 0..count {
                r.read_exact(&mut node)?;
                let word = |k: usize| <[u8; 4]>::try_from(&node[k..k + 4]).expect("4 bytes");
                nodes.push(Node {
                    feature: i32::from_le_bytes(word(0)),
                    left: u32::from_le_bytes(word(4)),
                    right: u32::from_le_bytes(word(8)),
                    value: f64::from_le_bytes(node[16..24].try_into().expect("8 bytes")),
                });
            }
            let width = header.train_meta.width;
            let valid = !nodes.is_empty()
                && nodes.iter().all(|n| {
                    n.is_leaf() || ((n.feature as usize) < width && (n.left as usize) < count && (n.right as usize) < count)
                });
            if !valid {
                return Err(bad("corrupt tree".into()));
            }
            trees.push(Tree { nodes });
        }
        if !(0.0..=1.0).contains(&header.threshold) {
            return Err(bad(format!("threshold {} outside [0, 1]", header.threshold)));
        }
        Ok(ForestModel { trees, threshold: header.threshold, train_meta: header.train_meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ForestError> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ForestError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
