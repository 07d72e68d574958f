//! Per-machine F1 comparison of the classifier and the three audit rules,
//! fleet statistics and the one-way ANOVA across methods.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use thiserror::Error;

use crate::audit::AuditTrace;
use crate::forest::ProbSeries;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{decisions} decisions vs {labels} labels")]
    LengthMismatch { decisions: usize, labels: usize },
    #[error("baseline F1 is zero")]
    ZeroBaseline,
    #[error("need at least two groups")]
    TooFewGroups,
    #[error("group {group} has {len} values, need at least two")]
    TooFewValues { group: usize, len: usize },
    #[error("machine mismatch: {0}")]
    MachineMismatch(String),
    #[error("machine {machine}: no {method} decisions in trace")]
    MissingDetector { machine: String, method: &'static str },
    #[error("no machines to evaluate")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `None` when there are no positives.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ConfusionCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, tn: self.tn + o.tn, fn_: self.fn_ + o.fn_ }
    }
}

pub fn confusion(decisions: &[bool], labels: &[bool]) -> Result<ConfusionCounts, EvalError> {
    if decisions.len() != labels.len() {
        return Err(EvalError::LengthMismatch { decisions: decisions.len(), labels: labels.len() });
    }
    let mut c = ConfusionCounts::default();
    for (&d, &l) in decisions.iter().zip(labels) {
        match (d, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `2tp / (2tp + fp + fn)`, and 0 when that denominator is 0.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let d = 2 * c.tp + c.fp + c.fn_;
    if d == 0 { 0.0 } else { (2 * c.tp) as f64 / d as f64 }
}

pub fn pct_change(baseline: f64, new: f64) -> Result<f64, EvalError> {
    if baseline == 0.0 {
        return Err(EvalError::ZeroBaseline);
    }
    Ok(100.0 * (new - baseline) / baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// One-way ANOVA. Zero within-group variance gives `F = +inf, p = 0` when the
/// means differ and `F = 0, p = 1` when every value is equal.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<Anova, EvalError> {
    if groups.len() < 2 {
        return Err(EvalError::TooFewGroups);
    }
    if let Some((group, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(EvalError::TooFewValues { group, len: g.len() });
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let k = groups.len();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let (mut ssb, mut ssw) = (0.0, 0.0);
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    let (df_between, df_within) = (k - 1, n - k);
    let (f, p) = if ssw == 0.0 {
        if ssb > 0.0 { (f64::INFINITY, 0.0) } else { (0.0, 1.0) }
    } else {
        let f = (ssb / df_between as f64) / (ssw / df_within as f64);
        let dist = FisherSnedecor::new(df_between as f64, df_within as f64).expect("positive degrees of freedom");
        (f, dist.sf(f))
    };
    Ok(Anova { f, p, df_between, df_within })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Baseline,
    Ocsvm,
    Mcd,
    Ensemble,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline, Method::Ocsvm, Method::Mcd, Method::Ensemble];
    pub const DETECTORS: [Method; 3] = [Method::Ocsvm, Method::Mcd, Method::Ensemble];

    pub fn label(self) -> &'static str {
        match self {
            Method::Baseline => "Baseline",
            Method::Ocsvm => "OCSVM",
            Method::Mcd => "MCD",
            Method::Ensemble => "Ensemble",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// ACTIVE-day decisions of every method for one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineOutcome {
    pub machine_id: String,
    pub labels: Vec<bool>,
    /// Indexed by [`Method`].
    pub decisions: [Vec<bool>; 4],
}

impl MachineOutcome {
    /// Baseline decisions are `p > threshold` on the same ACTIVE days the
    /// detectors decided on.
    pub fn from_trace(trace: &AuditTrace, prob: &ProbSeries) -> Result<Self, EvalError> {
        if trace.machine_id != prob.machine_id {
            return Err(EvalError::MachineMismatch(format!("trace {} vs series {}", trace.machine_id, prob.machine_id)));
        }
        if trace.decisions.len() != prob.len() || prob.labels.len() != prob.len() {
            return Err(EvalError::MachineMismatch(format!(
                "{}: trace has {} days, series {}",
                trace.machine_id,
                trace.decisions.len(),
                prob.len()
            )));
        }
        let threshold = trace.config.threshold;
        let missing = |method| EvalError::MissingDetector { machine: trace.machine_id.clone(), method };
        let mut out = MachineOutcome { machine_id: trace.machine_id.clone(), labels: vec![], decisions: Default::default() };
        for (i, d) in trace.decisions.iter().enumerate().filter(|(_, d)| d.is_active()) {
            out.labels.push(prob.labels[i]);
            out.decisions[0].push(prob.p[i] > threshold);
            out.decisions[1].push(d.ocsvm.ok_or_else(|| missing("OCSVM"))?.flag);
            out.decisions[2].push(d.mcd.ok_or_else(|| missing("MCD"))?.flag);
            out.decisions[3].push(d.ensemble.ok_or_else(|| missing("ENSEMBLE"))?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineRow {
    pub machine_id: String,
    pub n_active: usize,
    pub confusion: [ConfusionCounts; 4],
    /// Indexed by [`Method`].
    pub f1: [f64; 4],
    /// Largest pct change of a detector over the baseline; `None` when the
    /// baseline F1 is 0.
    pub max_pct_change: Option<f64>,
    /// Methods attaining the row's highest F1.
    pub best: Vec<Method>,
}

impl MachineRow {
    pub fn f1_of(&self, m: Method) -> f64 {
        self.f1[m.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodStats {
    pub mean_f1: f64,
    /// Sample standard deviation.
    pub sd_f1: f64,
    pub pooled: ConfusionCounts,
    pub pooled_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Improvement {
    /// Mean of per-machine pct changes (machines with a zero baseline skipped).
    pub mean_of_pct_changes: Option<f64>,
    /// Pct change of the fleet-mean F1.
    pub pct_change_of_means: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub rows: Vec<MachineRow>,
    pub fleet: BTreeMap<Method, MethodStats>,
    /// Mean of the defined per-machine `max_pct_change` values.
    pub mean_max_pct_change: Option<f64>,
    pub improvement: BTreeMap<Method, Improvement>,
    pub anova: Option<Anova>,
    pub normality_tested: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn machine_row(o: &MachineOutcome) -> Result<MachineRow, EvalError> {
    let mut confusion = [ConfusionCounts::default(); 4];
    let mut scores = [0.0; 4];
    for m in Method::ALL {
        confusion[m.index()] = self::confusion(&o.decisions[m.index()], &o.labels)?;
        scores[m.index()] = f1(&confusion[m.index()]);
    }
    let base = scores[0];
    let max_pct_change = Method::DETECTORS
        .iter()
        .map(|m| pct_change(base, scores[m.index()]).ok())
        .try_fold(f64::NEG_INFINITY, |acc, v| v.map(|v| acc.max(v)));
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MachineRow {
        machine_id: o.machine_id.clone(),
        n_active: o.labels.len(),
        confusion,
        f1: scores,
        max_pct_change,
        best: Method::ALL.into_iter().filter(|m| scores[m.index()] == top).collect(),
    })
}

pub fn summarize(outcomes: &[MachineOutcome]) -> Result<MethodReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    let rows: Vec<MachineRow> = outcomes.par_iter().map(machine_row).collect::<Result<_, _>>()?;
    let column = |m: Method| rows.iter().map(|r| r.f1_of(m)).collect::<Vec<_>>();
    let fleet: BTreeMap<Method, MethodStats> = Method::ALL
        .into_iter()
        .map(|m| {
            let col = column(m);
            let pooled = rows.iter().fold(ConfusionCounts::default(), |a, r| a + r.confusion[m.index()]);
            (m, MethodStats { mean_f1: mean(&col), sd_f1: sample_sd(&col), pooled, pooled_f1: f1(&pooled) })
        })
        .collect();
    let base_mean = fleet[&Method::Baseline].mean_f1;
    let improvement = Method::DETECTORS
        .into_iter()
        .map(|m| {
            let per: Vec<f64> = rows.iter().filter_map(|r| pct_change(r.f1_of(Method::Baseline), r.f1_of(m)).ok()).collect();
            let imp = Improvement {
                mean_of_pct_changes: (!per.is_empty()).then(|| mean(&per)),
                pct_change_of_means: pct_change(base_mean, fleet[&m].mean_f1).ok(),
            };
            (m, imp)
        })
        .collect();
    let maxes: Vec<f64> = rows.iter().filter_map(|r| r.max_pct_change).collect();
    let groups: Vec<Vec<f64>> = Method::ALL.into_iter().map(column).collect();
    Ok(MethodReport {
        mean_max_pct_change: (!maxes.is_empty()).then(|| mean(&maxes)),
        anova: anova_oneway(&groups).ok(),
        rows,
        fleet,
        improvement,
        normality_tested: false,
    })
}

/// Aligns traces with their probability series (same order, same machine)
/// and summarizes them.
pub fn fleet_summary(traces: &[AuditTrace], prob: &[ProbSeries]) -> Result<MethodReport, EvalError> {
    if traces.len() != prob.len() {
        return Err(EvalError::MachineMismatch(format!("{} traces vs {} series", traces.len(), prob.len())));
    }
    let outcomes: Vec<MachineOutcome> =
        traces.iter().zip(prob).map(|(t, p)| MachineOutcome::from_trace(t, p)).collect::<Result<_, _>>()?;
    summarize(&outcomes)
}

fn fmt_pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:+.1}%"),
        None => "NA".into(),
    }
}

/// Table layout: one row per machine plus an `Average` row.
pub fn write_report_csv<W: Write>(report: &MethodReport, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["Machine", "Baseline", "OCSVM", "MCD", "Ensemble", "max % change"])?;
    for r in &report.rows {
        let mut rec = vec![r.machine_id.clone()];
        rec.extend(r.f1.iter().map(|v| format!("{v:.3}")));
        rec.push(fmt_pct(r.max_pct_change));
        w.write_record(&rec)?;
    }
    let mut avg = vec!["Average".to_string()];
    avg.extend(Method::ALL.iter().map(|m| format!("{:.3}", report.fleet[m].mean_f1)));
    avg.push(fmt_pct(report.mean_max_pct_change));
    w.write_record(&avg)?;
    w.flush()?;
    Ok(())
}

/// Long format `method,machine_id,f1` for external plotting.
pub fn write_boxplot_csv<W: Write>(report: &MethodReport, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "machine_id", "f1"])?;
    for m in Method::ALL {
        for r in &report.rows {
            w.write_record([m.label(), &r.machine_id, &format!("{:.6}", r.f1_of(m))])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() { sorted[i] + frac * (sorted[i + 1] - sorted[i]) } else { sorted[i] }
}

/// Self-contained SVG box plot of per-machine F1 by method (Tukey whiskers).
pub fn render_boxplot_svg(report: &MethodReport) -> String {
    let (w, h, left, top, plot_h, slot) = (560.0, 360.0, 60.0, 20.0, 280.0, 120.0);
    let y = |v: f64| top + plot_h * (1.0 - v.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            w - 10.0,
            left - 6.0,
            y(v) + 4.0,
            y = y(v)
        );
    }
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">F1</text>"#, top + plot_h / 2.0, top + plot_h / 2.0);
    for (k, m) in Method::ALL.into_iter().enumerate() {
        let mut v: Vec<f64> = report.rows.iter().map(|r| r.f1_of(m)).collect();
        v.sort_by(f64::total_cmp);
        let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let lo = v.iter().copied().find(|&x| x >= q1 - 1.5 * iqr).unwrap_or(q1);
        let hi = v.iter().rev().copied().find(|&x| x <= q3 + 1.5 * iqr).unwrap_or(q3);
        let cx = left + slot * (k as f64 + 0.5);
        let (x0, x1) = (cx - 30.0, cx + 30.0);
        let _ = writeln!(s, r#"<line x1="{cx}" x2="{cx}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#, y(lo), y(hi));
        let _ = writeln!(
            s,
            r##"<rect x="{x0}" y="{:.1}" width="60" height="{:.1}" fill="#9ecae1" stroke="black"/>"##,
            y(q3),
            (y(q1) - y(q3)).max(0.5)
        );
        let _ = writeln!(s, r#"<line x1="{x0}" x2="{x1}" y1="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#, y(med), y(med));
        for x in v.iter().filter(|&&x| x < lo || x > hi) {
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{:.1}" r="3" fill="none" stroke="black"/>"#, y(*x));
        }
        let _ = writeln!(s, r#"<text x="{cx}" y="{:.1}" text-anchor="middle">{}</text>"#, top + plot_h + 20.0, m.label());
    }
    s.push_str("</svg>\n");
    s
}

/// Plain-text rendering of the comparison table and fleet statistics.
pub fn render_table(report: &MethodReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:>9} {:>9} {:>9} {:>9} {:>13}", "Machine", "Baseline", "OCSVM", "MCD", "Ensemble", "max % change");
    let line = |s: &mut String, id: &str, f: [f64; 4], pct: Option<f64>| {
        let _ = writeln!(s, "{:<12} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>13}", id, f[0], f[1], f[2], f[3], fmt_pct(pct));
    };
    for r in &report.rows {
        line(&mut s, &r.machine_id, r.f1, r.max_pct_change);
    }
    let means = Method::ALL.map(|m| report.fleet[&m].mean_f1);
    line(&mut s, "Average", means, report.mean_max_pct_change);
    let _ = writeln!(s);
    for m in Method::ALL {
        let st = &report.fleet[&m];
        let _ = writeln!(s, "{:<9} mean F1 {:.3} (sd {:.3}), pooled F1 {:.3}", m.label(), st.mean_f1, st.sd_f1, st.pooled_f1);
    }
    for (m, imp) in &report.improvement {
        let _ = writeln!(
            s,
            "{:<9} improvement: mean of per-machine changes {}, change of mean F1 {}",
            m.label(),
            fmt_pct(imp.mean_of_pct_changes),
            fmt_pct(imp.pct_change_of_means)
        );
    }
    match report.anova {
        Some(a) => {
            let _ = writeln!(s, "one-way ANOVA: F({}, {}) = {:.4}, p = {:.3e}", a.df_between, a.df_within, a.f, a.p);
        }
        None => {
            let _ = writeln!(s, "one-way ANOVA: not computed (fewer than two machines)");
        }
    }
    let _ = writeln!(s, "normality of the F1 groups was not tested");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: bool = true;
    const F: bool = false;

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[T, F, T], &[T, F, T]).unwrap(), ConfusionCounts { tp: 2, tn: 1, fp: 0, fn_: 0 });
        assert_eq!(confusion(&[F; 4], &[F; 4]).unwrap().tn, 4);
        assert_eq!(confusion(&[T, F], &[F, T]).unwrap(), ConfusionCounts { tp: 0, tn: 0, fp: 1, fn_: 1 });
        assert!(matches!(confusion(&[T], &[]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn f1_examples() {
        // precision = recall = 0.5
        assert_eq!(f1(&ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 0 }), 0.5);
        // precision 0.6, recall 0.3
        let c = ConfusionCounts { tp: 3, fp: 2, fn_: 7, tn: 0 };
        assert!((f1(&c) - 0.4).abs() < 1e-15);
        assert_eq!(f1(&ConfusionCounts { tp: 0, fp: 3, fn_: 2, tn: 5 }), 0.0);
        assert_eq!(f1(&ConfusionCounts::default()), 0.0);
    }

    #[test]
    fn pct_change_examples() {
        assert!((pct_change(0.277, 0.784).unwrap() - 182.7).abs() < 0.5);
        assert_eq!(pct_change(0.5, 0.5).unwrap(), 0.0);
        assert!((pct_change(0.392, 0.372).unwrap() - -5.1).abs() < 0.05);
        assert!(matches!(pct_change(0.0, 0.3), Err(EvalError::ZeroBaseline)));
    }

    #[test]
    fn anova_examples() {
        let a = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]).unwrap();
        assert!((a.f - 1.5).abs() < 1e-12);
        assert_eq!((a.df_between, a.df_within), (1, 4));
        // F(1,4) = 1.5 equals t² with t = sqrt(1.5) on 4 dof; two-sided p ≈ 0.2879
        assert!((a.p - 0.28786).abs() < 1e-4, "{}", a.p);
        let a = anova_oneway(&[vec![1.0, 5.0, 2.0], vec![1.0, 5.0, 2.0]]).unwrap();
        assert_eq!(a.f, 0.0);
        let a = anova_oneway(&[vec![0.0; 3], vec![10.0; 3]]).unwrap();
        assert_eq!((a.f, a.p), (f64::INFINITY, 0.0));
        assert!(matches!(anova_oneway(&[vec![1.0, 2.0]]), Err(EvalError::TooFewGroups)));
        assert!(matches!(anova_oneway(&[vec![1.0, 2.0], vec![1.0]]), Err(EvalError::TooFewValues { group: 1, len: 1 })));
    }

    fn outcome(id: &str, labels: &[bool], d: [&[bool]; 4]) -> MachineOutcome {
        MachineOutcome { machine_id: id.into(), labels: labels.to_vec(), decisions: d.map(|v| v.to_vec()) }
    }

    #[test]
    fn identical_methods_give_zero_change() {
        let d: &[bool] = &[T, F, T, F];
        let r = summarize(&[outcome("M1", &[T, F, F, T], [d, d, d, d])]).unwrap();
        assert_eq!(r.rows[0].max_pct_change, Some(0.0));
        assert_eq!(r.rows[0].best.len(), 4);
        assert!(r.anova.is_none());
    }

    #[test]
    fn report_layout_and_averages() {
        let l: &[bool] = &[T, F, T, F, F, T];
        let outcomes = vec![
            outcome("M1", l, [&[T, T, F, T, F, F], &[T, F, T, F, F, F], &[T, F, F, F, F, T], &[T, F, F, F, F, F]]),
            outcome("M2", l, [&[F; 6], &[T, F, F, F, F, F], &[F; 6], &[F; 6]]),
            outcome("M3", l, [&[T, F, T, F, F, T], &[T, T, T, T, T, T], &[T, F, F, F, F, F], &[T, F, F, F, F, F]]),
        ];
        let r = summarize(&outcomes).unwrap();
        assert_eq!(r.rows[1].max_pct_change, None);
        let defined: Vec<f64> = r.rows.iter().filter_map(|x| x.max_pct_change).collect();
        assert_eq!(defined.len(), 2);
        assert!((r.mean_max_pct_change.unwrap() - (defined[0] + defined[1]) / 2.0).abs() < 1e-12);
        // the third machine's detectors are all worse than its perfect baseline
        assert!(r.rows[2].max_pct_change.unwrap() < 0.0);
        let mut buf = Vec::new();
        write_report_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "Machine,Baseline,OCSVM,MCD,Ensemble,max % change");
        assert!(lines[2].ends_with(",NA"));
        assert!(lines[4].starts_with("Average,"));
        let svg = render_boxplot_svg(&r);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(render_table(&r).contains("Average"));
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.25), 7.0);
    }
}
