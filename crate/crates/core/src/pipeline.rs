//! End-to-end run configuration and the artifact-producing commands behind
//! the `pmaudit` binary.
//!
//! Every command resolves and validates its configuration and checks its
//! input artifacts before it creates or writes anything.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{self, AuditError, AuditTrace, StreamConfig, TraceRow};
use crate::evaluate::{self, EvalError, MachineOutcome, MethodReport};
use crate::forest::{train_forest, ForestConfig, ForestError, ForestModel, ProbSeries};
use crate::preprocess::{self, FeatureMatrix, PreprocessError, SmoteConfig, DEFAULT_ALPHA};
use crate::roc;
use crate::synth::{self, derive_seed, FleetConfig, SynthError};
use crate::telemetry::{self, IngestError, MachineSeries};

pub const ALARMS_FILE: &str = "alarms.csv";
pub const ORDERS_FILE: &str = "work_orders.csv";
pub const FLEET_MANIFEST_FILE: &str = "fleet_manifest.json";
pub const MODEL_FILE: &str = "forest.model";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const AUDIT_MANIFEST_FILE: &str = "audit_manifest.json";
pub const TRACES_DIR: &str = "traces";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_TXT_FILE: &str = "report.txt";
pub const BOXPLOT_CSV_FILE: &str = "boxplot.csv";
pub const BOXPLOT_SVG_FILE: &str = "boxplot.svg";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
}

impl PipelineError {
    /// Short machine-readable error class.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::MissingArtifact(_) => "missing_artifact",
            PipelineError::ConfigInvalid(_) => "config_invalid",
            PipelineError::Ingest(_) => "ingest",
            PipelineError::Synth(_) => "synth",
            PipelineError::Preprocess(_) => "preprocess",
            PipelineError::Forest(_) => "forest",
            PipelineError::Audit(_) => "audit",
            PipelineError::Eval(_) => "eval",
            PipelineError::Io { .. } => "io",
            PipelineError::Json { .. } => "json",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingArtifact(_) => 2,
            PipelineError::ConfigInvalid(_) => 3,
            _ => 1,
        }
    }
}

type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn invalid(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::ConfigInvalid(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub alpha: f64,
    /// Restart the filter the day after a work order.
    pub reset_on_order: bool,
    /// Leading fraction of every machine's days used for training.
    pub train_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { alpha: DEFAULT_ALPHA, reset_on_order: true, train_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    /// Defaults to `<out>/alarms.csv`.
    pub alarms: Option<PathBuf>,
    /// Defaults to `<out>/work_orders.csv`.
    pub work_orders: Option<PathBuf>,
    /// Defaults to `<out>/forest.model`.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    pub out: PathBuf,
    pub inputs: InputPaths,
    pub fleet: FleetConfig,
    pub preprocess: PreprocessConfig,
    pub smote: SmoteConfig,
    pub forest: ForestConfig,
    /// `stream.threshold` is replaced by the trained model's threshold.
    pub stream: StreamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out: PathBuf::from("out"),
            inputs: InputPaths::default(),
            fleet: FleetConfig::default(),
            preprocess: PreprocessConfig::default(),
            smote: SmoteConfig::default(),
            forest: ForestConfig::default(),
            stream: StreamConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(invalid)
    }

    /// Reads a config file, or returns the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
                Self::from_toml_str(&text)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    /// Derives every stage seed from the master seed.
    pub fn resolve(mut self) -> Self {
        self.fleet.seed = derive_seed(self.seed, 0);
        self.smote.seed = derive_seed(self.seed, 1);
        self.forest.seed = derive_seed(self.seed, 2);
        self.stream.mcd.seed = derive_seed(self.seed, 3);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.fleet.validate().map_err(invalid)?;
        if !(self.preprocess.alpha > 0.0 && self.preprocess.alpha < 1.0) {
            return Err(invalid(format!("preprocess.alpha {} not in (0, 1)", self.preprocess.alpha)));
        }
        if !(self.preprocess.train_fraction > 0.0 && self.preprocess.train_fraction < 1.0) {
            return Err(invalid(format!("preprocess.train_fraction {} not in (0, 1)", self.preprocess.train_fraction)));
        }
        self.smote.validate().map_err(invalid)?;
        self.forest.validate().map_err(invalid)?;
        self.stream.validate().map_err(invalid)?;
        if self.out.as_os_str().is_empty() {
            return Err(invalid("out must not be empty"));
        }
        Ok(())
    }

    pub fn alarms_path(&self) -> PathBuf {
        self.inputs.alarms.clone().unwrap_or_else(|| self.out.join(ALARMS_FILE))
    }

    pub fn work_orders_path(&self) -> PathBuf {
        self.inputs.work_orders.clone().unwrap_or_else(|| self.out.join(ORDERS_FILE))
    }

    pub fn model_path(&self) -> PathBuf {
        self.inputs.model.clone().unwrap_or_else(|| self.out.join(MODEL_FILE))
    }
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() { Ok(()) } else { Err(PipelineError::MissingArtifact(path.to_path_buf())) }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| PipelineError::Json { path: path.into(), source })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    require(path)?;
    let r = BufReader::new(File::open(path).map_err(io_err(path))?);
    serde_json::from_reader(r).map_err(|source| PipelineError::Json { path: path.into(), source })
}

/// Creates the output directory and echoes the resolved config into it.
/// Only stages that compute from the config call this; `eval` and `report`
/// read what earlier stages left and keep their config record intact.
fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let path = cfg.out.join(RESOLVED_CONFIG_FILE);
    fs::write(&path, cfg.to_toml()).map_err(io_err(&path))
}

/// Reads and aligns the telemetry CSVs named by the config.
pub fn load_series(cfg: &RunConfig) -> Result<Vec<MachineSeries>> {
    let (a, o) = (cfg.alarms_path(), cfg.work_orders_path());
    require(&a)?;
    require(&o)?;
    let alarms = telemetry::parse_alarm_csv(&a)?;
    let orders = telemetry::parse_work_order_csv(&o)?;
    Ok(telemetry::align_all(&alarms, &orders)?)
}

/// Filtered features, split chronologically per machine.
#[derive(Debug, Clone)]
pub struct SplitFeatures {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
}

pub fn build_split(series: &[MachineSeries], pre: &PreprocessConfig) -> Result<SplitFeatures> {
    let parts: Vec<(FeatureMatrix, FeatureMatrix)> = series
        .par_iter()
        .map(|s| {
            let fm = preprocess::build_feature_matrix_with(s, pre.alpha, pre.reset_on_order)?;
            let cut = (fm.len() as f64 * pre.train_fraction).floor() as usize;
            Ok((fm.slice(0..cut), fm.slice(cut..fm.len())))
        })
        .collect::<Result<_, PreprocessError>>()?;
    let mut train = FeatureMatrix::empty(telemetry::N_ALARMS);
    let mut test = FeatureMatrix::empty(telemetry::N_ALARMS);
    for (tr, te) in &parts {
        train.append(tr);
        test.append(te);
    }
    Ok(SplitFeatures { train, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub n_train_rows: usize,
    pub n_train_positives: usize,
    pub n_synthetic: usize,
    pub n_test_rows: usize,
    pub n_test_positives: usize,
    pub threshold: f64,
    pub effective_mtry: usize,
    pub oob_auroc: Option<f64>,
    pub test_auroc: Option<f64>,
}

pub fn train_model(split: &SplitFeatures, cfg: &RunConfig) -> Result<(ForestModel, TrainSummary)> {
    let t0 = Instant::now();
    let balanced = preprocess::smote_oversample(&split.train, &cfg.smote)?;
    let model = train_forest(&balanced, &cfg.forest)?;
    let test_p = model.predict_proba(&split.test)?;
    let summary = TrainSummary {
        n_train_rows: split.train.len(),
        n_train_positives: split.train.positives(),
        n_synthetic: balanced.len() - split.train.len(),
        n_test_rows: split.test.len(),
        n_test_positives: split.test.positives(),
        threshold: model.threshold,
        effective_mtry: model.train_meta.effective_mtry,
        oob_auroc: model.train_meta.oob_auroc,
        test_auroc: roc::auroc(&test_p, &split.test.labels).ok(),
    };
    log::info!(
        "stage=train rows={} synthetic={} trees={} threshold={:.4} test_auroc={} seconds={:.1}",
        balanced.len(),
        summary.n_synthetic,
        model.trees.len(),
        model.threshold,
        summary.test_auroc.map_or("NA".into(), |v| format!("{v:.4}")),
        t0.elapsed().as_secs_f64()
    );
    Ok((model, summary))
}

/// Audits every machine's test-period probabilities with the model's threshold.
pub fn audit_fleet(model: &ForestModel, test: &FeatureMatrix, stream: &StreamConfig) -> Result<Vec<(ProbSeries, AuditTrace)>> {
    let t0 = Instant::now();
    let probs = model.predict_series(test)?;
    let stream = StreamConfig { threshold: model.threshold, ..stream.clone() };
    let out = probs
        .into_par_iter()
        .map(|p| audit::audit_series(&p, &stream).map(|t| (p, t)))
        .collect::<Result<Vec<_>, _>>()?;
    log::info!("stage=audit machines={} seconds={:.1}", out.len(), t0.elapsed().as_secs_f64());
    Ok(out)
}

/// Rebuilds per-method decisions from a trace CSV.
pub fn outcome_from_rows(rows: &[TraceRow], threshold: f64) -> Result<MachineOutcome> {
    let id = rows.first().map(|r| r.machine_id.clone()).unwrap_or_default();
    let missing = |method| PipelineError::Eval(EvalError::MissingDetector { machine: id.clone(), method });
    let mut o = MachineOutcome { machine_id: id.clone(), labels: vec![], decisions: Default::default() };
    for r in rows.iter().filter(|r| r.status == audit::Status::Active) {
        o.labels.push(r.label);
        o.decisions[0].push(r.p > threshold);
        o.decisions[1].push(r.ocsvm_flag.ok_or_else(|| missing("OCSVM"))?);
        o.decisions[2].push(r.mcd_flag.ok_or_else(|| missing("MCD"))?);
        o.decisions[3].push(r.ensemble_flag.ok_or_else(|| missing("ENSEMBLE"))?);
    }
    Ok(o)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditManifest {
    pub threshold: f64,
    pub machines: Vec<String>,
    pub stream: StreamConfig,
}

fn trace_path(out: &Path, machine_id: &str) -> PathBuf {
    out.join(TRACES_DIR).join(format!("{machine_id}.csv"))
}

/// Writes the synthetic fleet CSVs and manifest.
pub fn cmd_fleetgen(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let t0 = Instant::now();
    let (fleet, manifest) = synth::generate_fleet_with_manifest(&cfg.fleet)?;
    let a = cfg.out.join(ALARMS_FILE);
    let o = cfg.out.join(ORDERS_FILE);
    telemetry::write_alarms(create(&a)?, &fleet)?;
    telemetry::write_work_orders(create(&o)?, &fleet)?;
    write_json(&cfg.out.join(FLEET_MANIFEST_FILE), &manifest)?;
    let positives: usize = fleet.iter().map(MachineSeries::positive_days).sum();
    log::info!(
        "stage=fleetgen machines={} days={} work_orders={} seconds={:.1}",
        fleet.len(),
        cfg.fleet.n_days,
        positives,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    require(&cfg.alarms_path())?;
    require(&cfg.work_orders_path())?;
    let series = load_series(cfg)?;
    let split = build_split(&series, &cfg.preprocess)?;
    let (model, summary) = train_model(&split, cfg)?;
    prepare_out(cfg)?;
    let path = cfg.out.join(MODEL_FILE);
    model.save(&path)?;
    write_json(&cfg.out.join(TRAIN_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn write_traces(cfg: &RunConfig, threshold: f64, audited: &[(ProbSeries, AuditTrace)]) -> Result<()> {
    let dir = cfg.out.join(TRACES_DIR);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (_, trace) in audited {
        let path = trace_path(&cfg.out, &trace.machine_id);
        audit::write_trace_csv(trace, create(&path)?)?;
    }
    let manifest = AuditManifest {
        threshold,
        machines: audited.iter().map(|(_, t)| t.machine_id.clone()).collect(),
        stream: StreamConfig { threshold, ..cfg.stream.clone() },
    };
    write_json(&cfg.out.join(AUDIT_MANIFEST_FILE), &manifest)
}

pub fn cmd_audit(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let model_path = cfg.model_path();
    require(&model_path)?;
    require(&cfg.alarms_path())?;
    require(&cfg.work_orders_path())?;
    let model = ForestModel::load(&model_path)?;
    let series = load_series(cfg)?;
    let split = build_split(&series, &cfg.preprocess)?;
    let audited = audit_fleet(&model, &split.test, &cfg.stream)?;
    prepare_out(cfg)?;
    write_traces(cfg, model.threshold, &audited)
}

fn load_outcomes(cfg: &RunConfig) -> Result<Vec<MachineOutcome>> {
    let manifest: AuditManifest = read_json(&cfg.out.join(AUDIT_MANIFEST_FILE))?;
    for id in &manifest.machines {
        require(&trace_path(&cfg.out, id))?;
    }
    manifest
        .machines
        .iter()
        .map(|id| {
            let path = trace_path(&cfg.out, id);
            let rows = audit::read_trace_csv(BufReader::new(File::open(&path).map_err(io_err(&path))?))?;
            outcome_from_rows(&rows, manifest.threshold)
        })
        .collect()
}

fn write_report(cfg: &RunConfig, report: &MethodReport) -> Result<()> {
    let p = cfg.out.join(REPORT_CSV_FILE);
    evaluate::write_report_csv(report, create(&p)?)?;
    let p = cfg.out.join(BOXPLOT_CSV_FILE);
    evaluate::write_boxplot_csv(report, create(&p)?)?;
    let p = cfg.out.join(BOXPLOT_SVG_FILE);
    fs::write(&p, evaluate::render_boxplot_svg(report)).map_err(io_err(&p))?;
    write_json(&cfg.out.join(SUMMARY_FILE), report)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<MethodReport> {
    cfg.validate()?;
    let outcomes = load_outcomes(cfg)?;
    let report = evaluate::summarize(&outcomes)?;
    write_report(cfg, &report)?;
    log_report(&report);
    Ok(report)
}

/// Renders the comparison table from the audit traces and writes it to
/// `report.txt`; returns the text.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let outcomes = load_outcomes(cfg)?;
    let report = evaluate::summarize(&outcomes)?;
    let text = evaluate::render_table(&report);
    let p = cfg.out.join(REPORT_TXT_FILE);
    fs::write(&p, &text).map_err(io_err(&p))?;
    Ok(text)
}

fn log_report(r: &MethodReport) {
    let mean = |m| r.fleet[&m].mean_f1;
    use evaluate::Method::*;
    log::info!(
        "stage=eval machines={} baseline_f1={:.3} ocsvm_f1={:.3} mcd_f1={:.3} ensemble_f1={:.3}",
        r.rows.len(),
        mean(Baseline),
        mean(Ocsvm),
        mean(Mcd),
        mean(Ensemble)
    );
}

/// Fleet generation, training, audit and evaluation in one pass. Writes the
/// same artifacts as the individual commands.
pub fn cmd_run(cfg: &RunConfig) -> Result<MethodReport> {
    cfg.validate()?;
    let t0 = Instant::now();
    cmd_fleetgen(cfg)?;
    let series = load_series(cfg)?;
    let split = build_split(&series, &cfg.preprocess)?;
    let (model, summary) = train_model(&split, cfg)?;
    model.save(cfg.model_path())?;
    write_json(&cfg.out.join(TRAIN_SUMMARY_FILE), &summary)?;
    let audited = audit_fleet(&model, &split.test, &cfg.stream)?;
    write_traces(cfg, model.threshold, &audited)?;
    let (traces, probs): (Vec<AuditTrace>, Vec<ProbSeries>) = audited.into_iter().map(|(p, t)| (t, p)).unzip();
    let report = evaluate::fleet_summary(&traces, &probs)?;
    write_report(cfg, &report)?;
    log_report(&report);
    log::info!("stage=run seconds={:.1}", t0.elapsed().as_secs_f64());
    Ok(report)
}
