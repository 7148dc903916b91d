//! C ABI for driftscope.
//!
//! Every object crosses the boundary as an opaque pointer (`DsLog`, `DsModel`,
//! `DsScores`) created by a `ds_*` constructor and released by the matching
//! `ds_*_free`. Every fallible function returns a [`DsStatus`]; on failure the
//! message is available from [`ds_last_error`] on the same thread. Panics are
//! caught at the boundary and reported as [`DsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use driftscope::drift::{detect_drift_points, ks_two_sample, sliding_window_pvalues};
use driftscope::eventlog::read_header;
use driftscope::scoring::{score_log, trace_means};
use driftscope::{parse_log, train_model, EdbnModel, Error, EventLog, Schema, StructureConfig, TraceScore};

/// Result code of every fallible `ds_*` function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    EmptyLog = 5,
    InvalidArgument = 6,
    Model = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

/// A parsed event log.
pub struct DsLog(EventLog);

/// A trained model.
pub struct DsModel(EdbnModel);

/// Per-trace scores of one log under one model.
pub struct DsScores(Vec<TraceScore>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(DsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => DsStatus::Io,
            Error::Parse { .. } | Error::Csv(_) | Error::Schema(_) => DsStatus::Parse,
            Error::EmptyLog => DsStatus::EmptyLog,
            Error::InvalidArgument(_) | Error::UnknownAttribute(_) | Error::EmptySample => DsStatus::InvalidArgument,
            Error::Version { .. } | Error::Integrity(_) | Error::Json(_) => DsStatus::Model,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f` behind the panic barrier and translates its outcome to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DsStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal error: {message}"));
            DsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn samples<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next `ds_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ds_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a CSV event log. `timestamp_column` may be null, in which case file
/// order is kept. Every other column is read as a categorical attribute.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out_log` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_log_parse(
    path: *const c_char,
    trace_id_column: *const c_char,
    timestamp_column: *const c_char,
    out_log: *mut *mut DsLog,
) -> DsStatus {
    guard(|| {
        let out_log = out(out_log, "out_log")?;
        let path = str_arg(path, "path")?;
        let trace_id = str_arg(trace_id_column, "trace_id_column")?;
        let timestamp = opt_str_arg(timestamp_column, "timestamp_column")?;
        let schema = Schema::infer(&read_header(path)?, trace_id, timestamp)?;
        *out_log = boxed(DsLog(parse_log(path, &schema)?));
        Ok(())
    })
}

/// Parses a CSV event log with the schema a model was trained on.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ds_log_parse_for_model(
    model: *const DsModel,
    path: *const c_char,
    out_log: *mut *mut DsLog,
) -> DsStatus {
    guard(|| {
        let out_log = out(out_log, "out_log")?;
        let model = obj(model, "model")?;
        let path = str_arg(path, "path")?;
        *out_log = boxed(DsLog(parse_log(path, &model.0.schema)?));
        Ok(())
    })
}

/// Number of traces in the log, or 0 for a null handle.
///
/// # Safety
/// `log` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ds_log_trace_count(log: *const DsLog) -> usize {
    log.as_ref().map_or(0, |l| l.0.trace_count())
}

/// Number of events in the log, or 0 for a null handle.
///
/// # Safety
/// `log` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ds_log_event_count(log: *const DsLog) -> usize {
    log.as_ref().map_or(0, |l| l.0.event_count())
}

/// # Safety
/// `log` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ds_log_free(log: *mut DsLog) {
    free(log)
}

/// Learns a model from the first traces of `log` that together hold at least
/// `train_events` events. `fd_threshold` in (0, 1] and `k_max` are the structure
/// search settings; pass 0 for either to use the defaults (0.99 and 2).
///
/// # Safety
/// `log` must come from this library; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_model_learn(
    log: *const DsLog,
    train_events: usize,
    fd_threshold: f64,
    k_max: usize,
    out_model: *mut *mut DsModel,
) -> DsStatus {
    guard(|| {
        let out_model = out(out_model, "out_model")?;
        let log = obj(log, "log")?;
        let mut config = StructureConfig::default();
        if fd_threshold != 0.0 {
            if !(fd_threshold > 0.0 && fd_threshold <= 1.0) {
                return Err(Error::InvalidArgument(format!("fd_threshold {fd_threshold} outside (0, 1]")).into());
            }
            config.fd_threshold = fd_threshold;
        }
        if k_max != 0 {
            config.k_max = k_max;
        }
        let (train, _) = log.0.split_train(train_events)?;
        *out_model = boxed(DsModel(train_model(&train, &config)?));
        Ok(())
    })
}

/// Loads a model saved by [`ds_model_save`] or the command-line tool.
///
/// # Safety
/// `path` must be NUL-terminated; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_model_load(path: *const c_char, out_model: *mut *mut DsModel) -> DsStatus {
    guard(|| {
        let out_model = out(out_model, "out_model")?;
        let path = str_arg(path, "path")?;
        *out_model = boxed(DsModel(EdbnModel::load(path)?));
        Ok(())
    })
}

/// Writes the model as JSON.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ds_model_save(model: *const DsModel, path: *const c_char) -> DsStatus {
    guard(|| {
        let model = obj(model, "model")?;
        let path = str_arg(path, "path")?;
        model.0.save(path)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ds_model_free(model: *mut DsModel) {
    free(model)
}

/// Scores every trace of `log` under `model`.
///
/// # Safety
/// Handles must come from this library; `out_scores` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_score_log(
    model: *const DsModel,
    log: *const DsLog,
    out_scores: *mut *mut DsScores,
) -> DsStatus {
    guard(|| {
        let out_scores = out(out_scores, "out_scores")?;
        let model = obj(model, "model")?;
        let log = obj(log, "log")?;
        *out_scores = boxed(DsScores(score_log(&model.0, &log.0)?));
        Ok(())
    })
}

/// Number of scored traces, or 0 for a null handle.
///
/// # Safety
/// `scores` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ds_scores_len(scores: *const DsScores) -> usize {
    scores.as_ref().map_or(0, |s| s.0.len())
}

/// Copies the per-trace mean scores into `buffer`. `capacity` must be at least
/// [`ds_scores_len`]; otherwise nothing is written and `BufferTooSmall` is returned.
///
/// # Safety
/// `buffer` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_scores_means(scores: *const DsScores, buffer: *mut f64, capacity: usize) -> DsStatus {
    guard(|| {
        let scores = obj(scores, "scores")?;
        let means = trace_means(&scores.0);
        if capacity < means.len() {
            return Err(Failure(
                DsStatus::BufferTooSmall,
                format!("buffer holds {capacity} values, {} needed", means.len()),
            ));
        }
        if !means.is_empty() {
            if buffer.is_null() {
                return Err(null("buffer"));
            }
            std::slice::from_raw_parts_mut(buffer, means.len()).copy_from_slice(&means);
        }
        Ok(())
    })
}

/// # Safety
/// `scores` must be null or an unfreed handle from this library.
#[no_mangle]
pub unsafe extern "C" fn ds_scores_free(scores: *mut DsScores) {
    free(scores)
}

/// Two-sample Kolmogorov–Smirnov test.
///
/// # Safety
/// `a` and `b` must point to `n` and `m` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_ks_two_sample(
    a: *const f64,
    n: usize,
    b: *const f64,
    m: usize,
    out_d: *mut f64,
    out_p: *mut f64,
) -> DsStatus {
    guard(|| {
        let out_d = out(out_d, "out_d")?;
        let out_p = out(out_p, "out_p")?;
        let r = ks_two_sample(samples(a, n, "a")?, samples(b, m, "b")?)?;
        *out_d = r.d;
        *out_p = r.p;
        Ok(())
    })
}

/// Runs the sliding-window test over a score series and reports drift points
/// as trace indices. `min_separation` of 0 means the window size. The number of
/// points is always stored in `out_count`; if it exceeds `capacity` nothing is
/// written to `out_indices` and `BufferTooSmall` is returned.
///
/// # Safety
/// `means` must point to `len` doubles and `out_indices` to `capacity` slots.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ds_detect_drift(
    means: *const f64,
    len: usize,
    window: usize,
    step: usize,
    threshold: f64,
    min_separation: usize,
    out_indices: *mut usize,
    capacity: usize,
    out_count: *mut usize,
) -> DsStatus {
    guard(|| {
        let out_count = out(out_count, "out_count")?;
        let series = sliding_window_pvalues(samples(means, len, "means")?, window, step)?;
        let separation = if min_separation == 0 { window } else { min_separation };
        let points = detect_drift_points(&series, threshold, separation)?;
        *out_count = points.len();
        if points.len() > capacity {
            return Err(Failure(
                DsStatus::BufferTooSmall,
                format!("buffer holds {capacity} indices, {} found", points.len()),
            ));
        }
        if !points.is_empty() {
            if out_indices.is_null() {
                return Err(null("out_indices"));
            }
            let dst = std::slice::from_raw_parts_mut(out_indices, points.len());
            for (slot, p) in dst.iter_mut().zip(&points) {
                *slot = p.trace_index;
            }
        }
        Ok(())
    })
}
