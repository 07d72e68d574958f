//! Streaming audit of the classifier's probability output.
//!
//! The first `warmup` probabilities of a machine only fill the buffer. From
//! then on every new probability is lag-embedded, both detectors are fitted
//! on the `window` embedded points preceding it, and the newest point is
//! scored. Its raw score is min-max normalized against the window's own raw
//! scores and compared with the classifier's threshold; the ensemble flags
//! a day only when both detectors do.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{
    mcd_fit_traced, mcd_score, ocsvm_score, AnomalyScore, DetectorError, McdConfig, McdModel, OcsvmConfig,
    OcsvmModel,
};
use crate::forest::ProbSeries;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("empty window")]
    EmptyWindow,
    #[error("empty vote")]
    EmptyInput,
    #[error("invalid stream config: {0}")]
    InvalidConfig(String),
    #[error("trace file: {0}")]
    Format(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DetectorKind {
    Ocsvm,
    Mcd,
    Ensemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefitMode {
    /// Refit on the trailing window at every step.
    #[default]
    Sliding,
    /// Fit once on the warm-up window and keep that model.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub warmup: usize,
    pub window: usize,
    pub embed_dim: usize,
    /// Decision threshold on normalized scores; the classifier's own cut.
    pub threshold: f64,
    pub detectors: Vec<DetectorKind>,
    pub refit: RefitMode,
    pub ocsvm: OcsvmConfig,
    pub mcd: McdConfig,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            warmup: 30,
            window: 30,
            embed_dim: 1,
            threshold: 0.5,
            detectors: vec![DetectorKind::Ocsvm, DetectorKind::Mcd, DetectorKind::Ensemble],
            refit: RefitMode::Sliding,
            ocsvm: OcsvmConfig::default(),
            mcd: McdConfig::default(),
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<(), AuditError> {
        let bad = |m: String| Err(AuditError::InvalidConfig(m));
        if !(self.warmup >= self.window && self.window >= self.embed_dim && self.embed_dim >= 1) {
            return bad(format!(
                "need warmup >= window >= embed_dim >= 1, got {} / {} / {}",
                self.warmup, self.window, self.embed_dim
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if self.detectors.is_empty() {
            return bad("no detectors selected".into());
        }
        if self.wants(DetectorKind::Ensemble) && !(self.wants(DetectorKind::Ocsvm) && self.wants(DetectorKind::Mcd)) {
            return bad("ENSEMBLE requires both OCSVM and MCD".into());
        }
        self.ocsvm.validate()?;
        if self.mcd.n_starts == 0 || self.mcd.max_csteps == 0 {
            return bad("mcd.n_starts and mcd.max_csteps must be >= 1".into());
        }
        Ok(())
    }

    pub fn wants(&self, kind: DetectorKind) -> bool {
        self.detectors.contains(&kind)
    }
}

/// `(raw − min) / (max − min)` over `window_raws ∪ {raw}`, clamped to
/// [0, 1]; 0.5 when the range is empty.
pub fn normalize_score(raw: f64, window_raws: &[f64]) -> Result<f64, AuditError> {
    if window_raws.is_empty() {
        return Err(AuditError::EmptyWindow);
    }
    let (lo, hi) = window_raws.iter().fold((raw, raw), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi == lo {
        return Ok(0.5);
    }
    Ok(((raw - lo) / (hi - lo)).clamp(0.0, 1.0))
}

/// Strict majority of the votes. With two voters this is logical AND.
pub fn vote(decisions: &[bool]) -> Result<bool, AuditError> {
    if decisions.is_empty() {
        return Err(AuditError::EmptyInput);
    }
    let yes = decisions.iter().filter(|&&d| d).count();
    Ok(2 * yes > decisions.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Warmup,
    Active,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Warmup => "WARMUP",
            Status::Active => "ACTIVE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorOutput {
    pub score: AnomalyScore,
    pub flag: bool,
    /// The window had no spread and the median-distance fallback was used.
    pub fallback: bool,
}

impl DetectorOutput {
    pub fn normalized(&self) -> f64 {
        self.score.normalized.unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditDecision {
    pub date: Option<NaiveDate>,
    pub p_classifier: f64,
    pub status: Status,
    pub ocsvm: Option<DetectorOutput>,
    pub mcd: Option<DetectorOutput>,
    pub ensemble: Option<bool>,
}

impl AuditDecision {
    pub fn is_active(&self) -> bool {
        self.status == Status::Active
    }
}

enum Fitted {
    Ocsvm(OcsvmModel),
    Mcd(McdModel),
    /// No spread in the window: distance to the componentwise median.
    Median(Vec<f64>),
}

impl Fitted {
    fn raw(&self, x: &[f64]) -> Result<f64, DetectorError> {
        match self {
            Fitted::Ocsvm(m) => ocsvm_score(m, x).map(|s| s.raw),
            Fitted::Mcd(m) => mcd_score(m, x).map(|s| s.raw),
            Fitted::Median(c) => Ok(c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()),
        }
    }

    fn is_fallback(&self) -> bool {
        matches!(self, Fitted::Median(_))
    }
}

fn median_point(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    (0..d)
        .map(|j| {
            let mut col: Vec<f64> = points.iter().map(|p| p[j]).collect();
            col.sort_by(f64::total_cmp);
            let m = col.len();
            if m % 2 == 1 { col[m / 2] } else { 0.5 * (col[m / 2 - 1] + col[m / 2]) }
        })
        .collect()
}

fn degenerate(e: &DetectorError) -> bool {
    matches!(
        e,
        DetectorError::DegenerateData
            | DetectorError::DegenerateSubset
            | DetectorError::SingularCovariance { .. }
            | DetectorError::TooFewSamples { .. }
    )
}

struct WindowModel {
    fitted: Fitted,
    window_raws: Vec<f64>,
}

impl WindowModel {
    fn fit(kind: DetectorKind, points: &[Vec<f64>], cfg: &StreamConfig) -> Result<Self, AuditError> {
        let fitted = match kind {
            DetectorKind::Ocsvm => match cfg.ocsvm.fit(points) {
                Ok(m) => Fitted::Ocsvm(m),
                Err(DetectorError::NotConverged { violation, model, .. }) => {
                    log::debug!("ocsvm not converged violation={violation:e}; using last iterate");
                    Fitted::Ocsvm(*model)
                }
                Err(e) if degenerate(&e) => Fitted::Median(median_point(points)),
                Err(e) => return Err(e.into()),
            },
            DetectorKind::Mcd => match mcd_fit_traced(points, &cfg.mcd) {
                Ok((m, _)) => Fitted::Mcd(m),
                Err(e) if degenerate(&e) => Fitted::Median(median_point(points)),
                Err(e) => return Err(e.into()),
            },
            DetectorKind::Ensemble => unreachable!("ensemble is not fitted"),
        };
        let window_raws = points.iter().map(|p| fitted.raw(p)).collect::<Result<_, _>>()?;
        Ok(WindowModel { fitted, window_raws })
    }

    fn judge(&self, x: &[f64], threshold: f64) -> Result<DetectorOutput, AuditError> {
        let raw = self.fitted.raw(x)?;
        let normalized = normalize_score(raw, &self.window_raws)?;
        Ok(DetectorOutput {
            score: AnomalyScore { raw, normalized: Some(normalized) },
            flag: normalized > threshold,
            fallback: self.fitted.is_fallback(),
        })
    }
}

/// Per-machine stream state.
pub struct AuditStream {
    cfg: StreamConfig,
    buffer: Vec<f64>,
    frozen: Option<(Option<WindowModel>, Option<WindowModel>)>,
}

impl AuditStream {
    pub fn new(cfg: StreamConfig) -> Result<Self, AuditError> {
        cfg.validate()?;
        Ok(AuditStream { cfg, buffer: Vec::new(), frozen: None })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    pub fn seen(&self) -> usize {
        self.buffer.len()
    }

    fn embed(&self, i: usize) -> Vec<f64> {
        self.buffer[i + 1 - self.cfg.embed_dim..=i].to_vec()
    }

    /// Consumes one classifier probability.
    pub fn step(&mut self, p_new: f64) -> Result<AuditDecision, AuditError> {
        if !(0.0..=1.0).contains(&p_new) {
            return Err(AuditError::ProbabilityOutOfRange(p_new));
        }
        self.buffer.push(p_new);
        let mut decision =
            AuditDecision { date: None, p_classifier: p_new, status: Status::Warmup, ocsvm: None, mcd: None, ensemble: None };
        if self.buffer.len() <= self.cfg.warmup {
            return Ok(decision);
        }
        decision.status = Status::Active;

        let t = self.buffer.len() - 1;
        let first = t.saturating_sub(self.cfg.window).max(self.cfg.embed_dim - 1);
        let newest = self.embed(t);

        let models = match (&self.frozen, self.cfg.refit) {
            (Some(_), RefitMode::Frozen) => None,
            _ => {
                let points: Vec<Vec<f64>> = (first..t).map(|i| self.embed(i)).collect();
                let fit = |kind| -> Result<Option<WindowModel>, AuditError> {
                    if self.cfg.wants(kind) { WindowModel::fit(kind, &points, &self.cfg).map(Some) } else { Ok(None) }
                };
                Some((fit(DetectorKind::Ocsvm)?, fit(DetectorKind::Mcd)?))
            }
        };
        if let Some(m) = models {
            self.frozen = Some(m);
        }
        let (ocsvm, mcd) = self.frozen.as_ref().expect("models fitted above");
        let threshold = self.cfg.threshold;
        decision.ocsvm = ocsvm.as_ref().map(|m| m.judge(&newest, threshold)).transpose()?;
        decision.mcd = mcd.as_ref().map(|m| m.judge(&newest, threshold)).transpose()?;
        if self.cfg.wants(DetectorKind::Ensemble) {
            let votes = [decision.ocsvm.expect("validated").flag, decision.mcd.expect("validated").flag];
            decision.ensemble = Some(vote(&votes)?);
        }
        Ok(decision)
    }
}

/// Free-function form of [`AuditStream::step`].
pub fn stream_step(state: &mut AuditStream, p_new: f64) -> Result<AuditDecision, AuditError> {
    state.step(p_new)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditTrace {
    pub machine_id: String,
    pub decisions: Vec<AuditDecision>,
    /// Ground truth aligned with `decisions`.
    pub labels: Vec<bool>,
    pub config: StreamConfig,
}

impl AuditTrace {
    pub fn active(&self) -> impl Iterator<Item = (&AuditDecision, bool)> {
        self.decisions.iter().zip(self.labels.iter().copied()).filter(|(d, _)| d.is_active())
    }

    pub fn n_active(&self) -> usize {
        self.decisions.iter().filter(|d| d.is_active()).count()
    }

    fn positives(&self, pick: impl Fn(&AuditDecision) -> Option<bool>) -> usize {
        self.decisions.iter().filter(|d| pick(d) == Some(true)).count()
    }

    pub fn ocsvm_positives(&self) -> usize {
        self.positives(|d| d.ocsvm.map(|o| o.flag))
    }

    pub fn mcd_positives(&self) -> usize {
        self.positives(|d| d.mcd.map(|o| o.flag))
    }

    pub fn ensemble_positives(&self) -> usize {
        self.positives(|d| d.ensemble)
    }
}

/// Runs a fresh stream over a whole probability series.
pub fn audit_series(p: &ProbSeries, cfg: &StreamConfig) -> Result<AuditTrace, AuditError> {
    let mut stream = AuditStream::new(cfg.clone())?;
    let mut decisions = Vec::with_capacity(p.p.len());
    for (i, &v) in p.p.iter().enumerate() {
        let mut d = stream.step(v)?;
        d.date = p.dates.get(i).copied();
        decisions.push(d);
    }
    Ok(AuditTrace { machine_id: p.machine_id.clone(), decisions, labels: p.labels.clone(), config: cfg.clone() })
}

pub const TRACE_HEADER: [&str; 10] =
    ["machine_id", "date", "status", "p", "ocsvm_norm", "mcd_norm", "ocsvm_flag", "mcd_flag", "ensemble_flag", "label"];

fn fmt_f(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

fn fmt_b(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

/// Writes the trace as CSV. Floats are printed in round-trip precision so
/// a re-read trace evaluates identically.
pub fn write_trace_csv<W: Write>(trace: &AuditTrace, out: W) -> Result<(), AuditError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(TRACE_HEADER)?;
    for (d, &label) in trace.decisions.iter().zip(&trace.labels) {
        let date = d.date.map(|x| x.format("%Y-%m-%d").to_string()).unwrap_or_default();
        wtr.write_record([
            trace.machine_id.as_str(),
            &date,
            d.status.as_str(),
            &format!("{:.17e}", d.p_classifier),
            &fmt_f(d.ocsvm.and_then(|o| o.score.normalized)),
            &fmt_f(d.mcd.and_then(|o| o.score.normalized)),
            fmt_b(d.ocsvm.map(|o| o.flag)),
            fmt_b(d.mcd.map(|o| o.flag)),
            fmt_b(d.ensemble),
            if label { "1" } else { "0" },
        ])?;
    }
    wtr.flush().map_err(|e| AuditError::Format(e.to_string()))?;
    Ok(())
}

/// One parsed trace CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub machine_id: String,
    pub date: Option<NaiveDate>,
    pub status: Status,
    pub p: f64,
    pub ocsvm_norm: Option<f64>,
    pub mcd_norm: Option<f64>,
    pub ocsvm_flag: Option<bool>,
    pub mcd_flag: Option<bool>,
    pub ensemble_flag: Option<bool>,
    pub label: bool,
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>, AuditError> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(AuditError::Format("trace header mismatch".into()));
    }
    let bad = |row: usize, what: &str| AuditError::Format(format!("row {row}: bad {what}"));
    let opt_f = |s: &str| -> Option<Result<f64, ()>> { (!s.is_empty()).then(|| s.parse().map_err(|_| ())) };
    let opt_b = |s: &str| -> Result<Option<bool>, ()> {
        match s {
            "" => Ok(None),
            "0" => Ok(Some(false)),
            "1" => Ok(Some(true)),
            _ => Err(()),
        }
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let status = match &rec[2] {
            "WARMUP" => Status::Warmup,
            "ACTIVE" => Status::Active,
            _ => return Err(bad(row, "status")),
        };
        let date = if rec[1].is_empty() {
            None
        } else {
            Some(NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| bad(row, "date"))?)
        };
        out.push(TraceRow {
            machine_id: rec[0].to_string(),
            date,
            status,
            p: rec[3].parse().map_err(|_| bad(row, "p"))?,
            ocsvm_norm: opt_f(&rec[4]).transpose().map_err(|_| bad(row, "ocsvm_norm"))?,
            mcd_norm: opt_f(&rec[5]).transpose().map_err(|_| bad(row, "mcd_norm"))?,
            ocsvm_flag: opt_b(&rec[6]).map_err(|_| bad(row, "ocsvm_flag"))?,
            mcd_flag: opt_b(&rec[7]).map_err(|_| bad(row, "mcd_flag"))?,
            ensemble_flag: opt_b(&rec[8]).map_err(|_| bad(row, "ensemble_flag"))?,
            label: opt_b(&rec[9]).ok().flatten().ok_or_else(|| bad(row, "label"))?,
        });
    }
    Ok(out)
}
