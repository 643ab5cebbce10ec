//! C ABI over `senseq`.
//!
//! Every fallible function returns a `SenseqStatus`; on failure a message is
//! available from `senseq_last_error_message` on the same thread. Handles are
//! opaque and owned by the caller until passed to the matching `_free`.
//! Strings returned through `char **` must be released with
//! `senseq_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use serde::Deserialize;

use senseq::dataset::{load_events, rasterize, event_range, split_days, HouseMeta, TimesliceSequence};
use senseq::eval::{self, CvOptions, MpcaAggregation};
use senseq::features::{featurize, FeatureConfig};
use senseq::models::{Model, ModelDocument, ModelKind, ModelOptions};
use senseq::{container, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenseqStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Metadata = 5,
    InvalidConfig = 6,
    Domain = 7,
    Dimension = 8,
    Numerical = 9,
    ModelMismatch = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Timeslice data plus its house metadata.
pub struct SenseqDataset {
    seq: TimesliceSequence,
    meta: HouseMeta,
}

/// A trained model together with the feature recipe it expects.
pub struct SenseqModel {
    doc: ModelDocument,
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> SenseqStatus {
    match e {
        Error::Io { .. } => SenseqStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => SenseqStatus::Parse,
        Error::MetadataMismatch(_) | Error::InvalidMetadata(_) => SenseqStatus::Metadata,
        Error::InvalidConfig(_) => SenseqStatus::InvalidConfig,
        Error::InvalidRange(_) | Error::Domain(_) | Error::EmptyTrainingSet => SenseqStatus::Domain,
        Error::Dimension(_) => SenseqStatus::Dimension,
        Error::Numerical(_) | Error::Optimizer(_) => SenseqStatus::Numerical,
        Error::ModelMismatch(_) => SenseqStatus::ModelMismatch,
        Error::Fold { source, .. } => status_of(source),
    }
}

struct Failure(SenseqStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(SenseqStatus::Parse, format!("options: {e}"))
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SenseqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SenseqStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SenseqStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SenseqStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SenseqStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(SenseqStatus::Parse, "interior NUL in output".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Options accepted as JSON by `senseq_cross_validate` and `senseq_train`.
/// Only `model` is required.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunOptions {
    model: ModelKind,
    #[serde(default)]
    features: FeatureConfig,
    #[serde(default)]
    model_options: ModelOptions,
    #[serde(default)]
    mpca_aggregation: MpcaAggregation,
    #[serde(default)]
    jobs: Option<usize>,
}

unsafe fn run_options(json: *const c_char) -> Result<RunOptions, Failure> {
    let opts: RunOptions = serde_json::from_str(str_arg(json, "options_json")?)?;
    opts.features.validate()?;
    opts.model_options.validate()?;
    if opts.jobs == Some(0) {
        return Err(Failure(SenseqStatus::Domain, "jobs must be at least 1".into()));
    }
    Ok(opts)
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn senseq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn senseq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a dataset file written by `senseq rasterize` (its `.meta.json`
/// sidecar must sit next to it).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn senseq_dataset_load(path: *const c_char, out: *mut *mut SenseqDataset) -> SenseqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathBuf::from(str_arg(path, "path")?);
        let (seq, meta) = container::read_dataset(path)?;
        *out = Box::into_raw(Box::new(SenseqDataset { seq, meta }));
        Ok(())
    })
}

/// Rasterizes an events CSV over the span of its events.
///
/// # Safety
/// Both paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn senseq_dataset_from_events(
    events_path: *const c_char,
    meta_path: *const c_char,
    out: *mut *mut SenseqDataset,
) -> SenseqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let events_path = str_arg(events_path, "events_path")?;
        let meta_path = str_arg(meta_path, "meta_path")?;
        let (events, meta) = load_events(events_path, meta_path)?;
        let (start, end) = event_range(&events)?;
        let seq = rasterize(&events, &meta, start, end)?;
        *out = Box::into_raw(Box::new(SenseqDataset { seq, meta }));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library and not have been freed; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn senseq_dataset_free(ds: *mut SenseqDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Timeslices, sensors, activities and days. Any output pointer may be NULL.
///
/// # Safety
/// `ds` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn senseq_dataset_shape(
    ds: *const SenseqDataset,
    n_timeslices: *mut usize,
    n_sensors: *mut usize,
    n_activities: *mut usize,
    n_days: *mut usize,
) -> SenseqStatus {
    guard(|| {
        let ds = ref_arg(ds, "dataset")?;
        for (p, v) in [
            (n_timeslices, ds.seq.len()),
            (n_sensors, ds.meta.sensor_count()),
            (n_activities, ds.meta.activity_count()),
            (n_days, ds.seq.day_boundaries.len()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Leave-one-day-out cross-validation. `options_json` is an object like
/// `{"model":"crf","features":{"representation":"ob","concat_k":5}}`; the
/// full report is returned as JSON in `report_json`.
///
/// # Safety
/// `ds` must be a live handle, `options_json` a NUL-terminated string and
/// `report_json` writable.
#[no_mangle]
pub unsafe extern "C" fn senseq_cross_validate(
    ds: *const SenseqDataset,
    options_json: *const c_char,
    report_json: *mut *mut c_char,
) -> SenseqStatus {
    guard(|| {
        let ds = ref_arg(ds, "dataset")?;
        if report_json.is_null() {
            return Err(null("report_json"));
        }
        let o = run_options(options_json)?;
        let days = split_days(&ds.seq);
        let cv = CvOptions {
            model: o.model,
            model_options: o.model_options,
            mpca_aggregation: o.mpca_aggregation,
            jobs: o.jobs,
        };
        let report = eval::cross_validate(&days, ds.meta.activity_count(), &o.features, &cv)?;
        write_string(report_json, serde_json::to_string(&report)?)
    })
}

/// Trains on every day of `ds`.
///
/// # Safety
/// `ds` must be a live handle, `options_json` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn senseq_train(
    ds: *const SenseqDataset,
    options_json: *const c_char,
    out: *mut *mut SenseqModel,
) -> SenseqStatus {
    guard(|| {
        let ds = ref_arg(ds, "dataset")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let o = run_options(options_json)?;
        let data = split_days(&ds.seq)
            .iter()
            .map(|d| featurize(d, &o.features))
            .collect::<senseq::Result<Vec<_>>>()?;
        let model = Model::fit(o.model, &data, ds.meta.activity_count(), &o.model_options)?;
        let doc = ModelDocument::new(&model, o.features)?;
        *out = Box::into_raw(Box::new(SenseqModel { doc, model }));
        Ok(())
    })
}

/// Loads a model JSON document.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn senseq_model_load(path: *const c_char, out: *mut *mut SenseqModel) -> SenseqStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let doc = ModelDocument::load(str_arg(path, "path")?)?;
        let model = doc.to_model()?;
        *out = Box::into_raw(Box::new(SenseqModel { doc, model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn senseq_model_save(model: *const SenseqModel, path: *const c_char) -> SenseqStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        m.doc.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// The model document as JSON.
///
/// # Safety
/// `model` must be a live handle; `json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn senseq_model_to_json(model: *const SenseqModel, json: *mut *mut c_char) -> SenseqStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        if json.is_null() {
            return Err(null("json"));
        }
        write_string(json, serde_json::to_string(&m.doc)?)
    })
}

/// # Safety
/// `model` must come from this library and not have been freed; NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn senseq_model_free(model: *mut SenseqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Decodes every day of `ds` with the model's own feature recipe and writes
/// one label per evaluation unit (minute or segment) into `labels`.
/// `written` always receives the required length; if `capacity` is too small
/// nothing else is written and `BufferTooSmall` is returned.
///
/// # Safety
/// Handles must be live; `labels` must point to `capacity` writable values
/// (may be NULL when `capacity` is 0); `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn senseq_predict(
    model: *const SenseqModel,
    ds: *const SenseqDataset,
    labels: *mut usize,
    capacity: usize,
    written: *mut usize,
) -> SenseqStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let ds = ref_arg(ds, "dataset")?;
        if written.is_null() {
            return Err(null("written"));
        }
        let cfg = m.doc.config;
        m.doc
            .check_compatible(&cfg, ds.meta.sensor_count(), ds.meta.activity_count())?;
        let mut pred = Vec::new();
        for day in split_days(&ds.seq) {
            let f = featurize(&day, &cfg)?;
            pred.extend(eval::evaluate_day(&m.model, &day, &f)?.0);
        }
        *written = pred.len();
        if capacity < pred.len() {
            return Err(Failure(
                SenseqStatus::BufferTooSmall,
                format!("{} labels needed, capacity {capacity}", pred.len()),
            ));
        }
        if labels.is_null() && !pred.is_empty() {
            return Err(null("labels"));
        }
        if !pred.is_empty() {
            std::slice::from_raw_parts_mut(labels, pred.len()).copy_from_slice(&pred);
        }
        Ok(())
    })
}
