//! C ABI over the pmaudit forest, detectors, audit stream and metrics.
//!
//! Conventions:
//! - every fallible call returns a [`PmStatus`]; results go through out
//!   pointers, which are left untouched on failure;
//! - objects are opaque handles created by `pm_*_new`/`_fit`/`_load` and
//!   released by the matching `_free` (passing NULL to `_free` is a no-op);
//! - the message of the last failure on the calling thread is available via
//!   [`pm_last_error`];
//! - matrices are row-major `double` arrays, booleans are `uint8_t` (0 or 1);
//! - panics never cross the boundary; they surface as `PM_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pmaudit::audit::{AuditError, AuditStream, StreamConfig};
use pmaudit::detectors::{
    mcd_fit_traced, ocsvm_score, DetectorError, McdConfig, McdModel, OcsvmConfig, OcsvmModel,
};
use pmaudit::evaluate::{confusion, f1};
use pmaudit::forest::{ForestError, ForestModel};
use pmaudit::roc::auroc;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmStatus {
    Ok = 0,
    ErrNull = 1,
    ErrInvalidArgument = 2,
    ErrIo = 3,
    ErrFormat = 4,
    ErrDimension = 5,
    ErrDegenerate = 6,
    ErrNotConverged = 7,
    ErrPanic = 99,
}

/// Trained random forest.
pub struct PmForest(ForestModel);

/// Per-machine audit stream state.
pub struct PmStream(AuditStream);

/// Fitted one-class SVM.
pub struct PmOcsvm(OcsvmModel);

/// Fitted MCD estimate.
pub struct PmMcd(McdModel);

/// One audit decision. Detector fields are meaningful only when the
/// matching `has_*` flag is 1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PmDecision {
    /// 0 while warming up, 1 once detectors are scoring.
    pub active: u8,
    pub has_ocsvm: u8,
    pub ocsvm_score: f64,
    pub ocsvm_flag: u8,
    pub has_mcd: u8,
    pub mcd_score: f64,
    pub mcd_flag: u8,
    pub has_ensemble: u8,
    pub ensemble_flag: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(PmStatus, String);

impl Failure {
    fn new(status: PmStatus, msg: impl Into<String>) -> Self {
        Failure(status, msg.into())
    }
}

impl From<DetectorError> for Failure {
    fn from(e: DetectorError) -> Self {
        let status = match e {
            DetectorError::DimensionMismatch { .. } => PmStatus::ErrDimension,
            DetectorError::DegenerateData
            | DetectorError::SingularCovariance { .. }
            | DetectorError::DegenerateSubset
            | DetectorError::TooFewSamples { .. } => PmStatus::ErrDegenerate,
            DetectorError::NotConverged { .. } => PmStatus::ErrNotConverged,
            DetectorError::NonPositiveSigma(_) | DetectorError::InvalidParams(_) => PmStatus::ErrInvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<ForestError> for Failure {
    fn from(e: ForestError) -> Self {
        let status = match e {
            ForestError::Io(_) => PmStatus::ErrIo,
            ForestError::Format(_) => PmStatus::ErrFormat,
            ForestError::WidthMismatch { .. } => PmStatus::ErrDimension,
            _ => PmStatus::ErrInvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<AuditError> for Failure {
    fn from(e: AuditError) -> Self {
        match e {
            AuditError::Detector(d) => d.into(),
            other => Failure(PmStatus::ErrInvalidArgument, other.to_string()),
        }
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PmStatus::ErrPanic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() { Err(Failure::new(PmStatus::ErrNull, format!("{what} is NULL"))) } else { Ok(()) }
}

/// # Safety
/// `p` must be valid for `n` reads when non-null.
unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, n))
}

/// # Safety
/// `data` must be valid for `n * d` reads.
unsafe fn rows(data: *const f64, n: usize, d: usize) -> Result<Vec<Vec<f64>>, Failure> {
    if d == 0 {
        return Err(Failure::new(PmStatus::ErrInvalidArgument, "dimension must be >= 1"));
    }
    let flat = slice(data, n.checked_mul(d).ok_or_else(|| Failure::new(PmStatus::ErrInvalidArgument, "size overflow"))?, "data")?;
    Ok(flat.chunks(d).map(<[f64]>::to_vec).collect())
}

/// # Safety
/// `p` must be valid for `n` reads when non-null.
unsafe fn bools(p: *const u8, n: usize, what: &str) -> Result<Vec<bool>, Failure> {
    Ok(slice(p, n, what)?.iter().map(|&b| b != 0).collect())
}

/// # Safety
/// `s` must be a NUL-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(s, what)?;
    CStr::from_ptr(s).to_str().map_err(|_| Failure::new(PmStatus::ErrInvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model written by `pmaudit train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pm_forest_load(path: *const c_char, out: *mut *mut PmForest) -> PmStatus {
    guard(|| {
        non_null(out, "out")?;
        let model = ForestModel::load(text(path, "path")?)?;
        *out = Box::into_raw(Box::new(PmForest(model)));
        Ok(())
    })
}

/// # Safety
/// `forest` must come from [`pm_forest_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pm_forest_free(forest: *mut PmForest) {
    if !forest.is_null() {
        drop(Box::from_raw(forest));
    }
}

/// Feature count the model expects; 0 for NULL.
///
/// # Safety
/// `forest` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_forest_width(forest: *const PmForest) -> usize {
    forest.as_ref().map_or(0, |f| f.0.width())
}

/// Calibrated decision threshold; NaN for NULL.
///
/// # Safety
/// `forest` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_forest_threshold(forest: *const PmForest) -> f64 {
    forest.as_ref().map_or(f64::NAN, |f| f.0.threshold)
}

/// Work-order probabilities for `n_rows` rows of `width` features.
///
/// # Safety
/// `rows` must hold `n_rows * width` doubles and `out` room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn pm_forest_predict(
    forest: *const PmForest,
    data: *const f64,
    n_rows: usize,
    width: usize,
    out: *mut f64,
) -> PmStatus {
    guard(|| {
        non_null(forest, "forest")?;
        let f = &(*forest).0;
        let xs = rows(data, n_rows, width)?;
        let p = xs.iter().map(|x| f.predict_one(x)).collect::<Result<Vec<f64>, _>>()?;
        if n_rows > 0 {
            non_null(out, "out")?;
            ptr::copy_nonoverlapping(p.as_ptr(), out, n_rows);
        }
        Ok(())
    })
}

/// Creates an audit stream. `config_json` may be NULL for the defaults or a
/// JSON object with any of the stream settings, e.g.
/// `{"threshold": 0.4, "warmup": 30, "window": 30}`.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pm_stream_new(config_json: *const c_char, out: *mut *mut PmStream) -> PmStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg: StreamConfig = if config_json.is_null() {
            StreamConfig::default()
        } else {
            serde_json::from_str(text(config_json, "config_json")?)
                .map_err(|e| Failure::new(PmStatus::ErrFormat, e.to_string()))?
        };
        *out = Box::into_raw(Box::new(PmStream(AuditStream::new(cfg)?)));
        Ok(())
    })
}

/// Feeds one classifier probability and reports the decision for it.
///
/// # Safety
/// `stream` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pm_stream_step(stream: *mut PmStream, p: f64, out: *mut PmDecision) -> PmStatus {
    guard(|| {
        non_null(stream, "stream")?;
        non_null(out, "out")?;
        let d = (*stream).0.step(p)?;
        let mut r = PmDecision { active: d.is_active() as u8, ..Default::default() };
        if let Some(o) = d.ocsvm {
            (r.has_ocsvm, r.ocsvm_score, r.ocsvm_flag) = (1, o.normalized(), o.flag as u8);
        }
        if let Some(m) = d.mcd {
            (r.has_mcd, r.mcd_score, r.mcd_flag) = (1, m.normalized(), m.flag as u8);
        }
        if let Some(e) = d.ensemble {
            (r.has_ensemble, r.ensemble_flag) = (1, e as u8);
        }
        *out = r;
        Ok(())
    })
}

/// # Safety
/// `stream` must come from [`pm_stream_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pm_stream_free(stream: *mut PmStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Fits a one-class SVM on `n` points of dimension `d`. A `sigma` of 0 or
/// less selects the median heuristic.
///
/// # Safety
/// `data` must hold `n * d` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pm_ocsvm_fit(
    data: *const f64,
    n: usize,
    d: usize,
    nu: f64,
    sigma: f64,
    out: *mut *mut PmOcsvm,
) -> PmStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = OcsvmConfig { nu, sigma: (sigma > 0.0).then_some(sigma), ..Default::default() };
        let model = cfg.fit(&rows(data, n, d)?)?;
        *out = Box::into_raw(Box::new(PmOcsvm(model)));
        Ok(())
    })
}

/// Raw anomaly score `rho - f(x)`; positive outside the learned region.
///
/// # Safety
/// `x` must hold `d` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pm_ocsvm_score(model: *const PmOcsvm, x: *const f64, d: usize, out: *mut f64) -> PmStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = ocsvm_score(&(*model).0, slice(x, d, "x")?)?.raw;
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`pm_ocsvm_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pm_ocsvm_free(model: *mut PmOcsvm) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// FastMCD on `n` points of dimension `d` with the default support size.
///
/// # Safety
/// `data` must hold `n * d` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pm_mcd_fit(
    data: *const f64,
    n: usize,
    d: usize,
    n_starts: usize,
    seed: u64,
    out: *mut *mut PmMcd,
) -> PmStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = McdConfig { n_starts, seed, ..Default::default() };
        let (model, _) = mcd_fit_traced(&rows(data, n, d)?, &cfg)?;
        *out = Box::into_raw(Box::new(PmMcd(model)));
        Ok(())
    })
}

/// Robust Mahalanobis distance of `x`.
///
/// # Safety
/// `x` must hold `d` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pm_mcd_distance(model: *const PmMcd, x: *const f64, d: usize, out: *mut f64) -> PmStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).0.robust_distance(slice(x, d, "x")?)?;
        Ok(())
    })
}

/// Outlier cutoff `sqrt(chi2_{d, 0.975})`; NaN for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pm_mcd_cutoff(model: *const PmMcd) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.0.cutoff)
}

/// # Safety
/// `model` must come from [`pm_mcd_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pm_mcd_free(model: *mut PmMcd) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// F1 of binary decisions against labels (0 when there is nothing to find
/// and nothing was flagged).
///
/// # Safety
/// Both arrays must hold `n` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pm_f1(decisions: *const u8, labels: *const u8, n: usize, out: *mut f64) -> PmStatus {
    guard(|| {
        non_null(out, "out")?;
        let c = confusion(&bools(decisions, n, "decisions")?, &bools(labels, n, "labels")?)
            .map_err(|e| Failure::new(PmStatus::ErrInvalidArgument, e.to_string()))?;
        *out = f1(&c);
        Ok(())
    })
}

/// Area under the ROC curve, ties counted as one half.
///
/// # Safety
/// `scores` and `labels` must hold `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pm_auroc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> PmStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = auroc(slice(scores, n, "scores")?, &bools(labels, n, "labels")?)
            .map_err(|e| Failure::new(PmStatus::ErrInvalidArgument, e.to_string()))?;
        Ok(())
    })
}
