//! C ABI for `btd-core`.
//!
//! Models live behind an opaque `BtdModel` handle created by
//! `btd_model_load`/`btd_model_load_bytes` and released by `btd_model_free`.
//! Every fallible call returns a `BtdStatus`; on failure a description is
//! available from `btd_last_error` until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use btd_core::imageio::{load_pgm, Label};
use btd_core::metrics::{confusion, ConfusionMatrix, Metric, MetricsReport};
use btd_core::pipeline::{ModelArtifact, PipelineError};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtdStatus {
    Ok = 0,
    NullArgument = 1,
    Io = 2,
    BadModel = 3,
    BadImage = 4,
    InvalidArgument = 5,
    BufferTooSmall = 6,
    Runtime = 7,
    Panic = 8,
}

/// Opaque trained model.
pub struct BtdModel {
    inner: ModelArtifact,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BtdConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

/// One metric as an exact fraction. When `defined` is 0 the denominator was
/// zero and the other fields are 0.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BtdMetric {
    pub defined: u8,
    pub num: u64,
    pub den: u64,
    pub value: f64,
    /// Percent in hundredths, rounded half up (98.27% is 9827).
    pub percent_bp: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BtdMetrics {
    pub accuracy: BtdMetric,
    pub sensitivity: BtdMetric,
    pub specificity: BtdMetric,
    pub precision: BtdMetric,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: BtdStatus, msg: impl Into<String>) -> BtdStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> BtdStatus) -> BtdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(BtdStatus::Panic, "internal panic"),
    }
}

fn pipeline_status(e: &PipelineError) -> BtdStatus {
    match e {
        PipelineError::Io { .. } => BtdStatus::Io,
        PipelineError::Artifact(_) => BtdStatus::BadModel,
        PipelineError::Image { .. } => BtdStatus::BadImage,
        _ => BtdStatus::Runtime,
    }
}

/// # Safety
/// `data` must point to `len` readable bytes (or be null with `len == 0`).
unsafe fn bytes<'a>(data: *const u8, len: usize) -> Option<&'a [u8]> {
    if data.is_null() {
        return (len == 0).then_some(&[]);
    }
    Some(std::slice::from_raw_parts(data, len))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next `btd_*` call on the same thread.
#[no_mangle]
pub extern "C" fn btd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Model container format version this library reads and writes.
#[no_mangle]
pub extern "C" fn btd_format_version() -> u32 {
    btd_core::pipeline::FORMAT_VERSION
}

fn store(out: *mut *mut BtdModel, model: ModelArtifact) {
    let handle = Box::into_raw(Box::new(BtdModel { inner: model }));
    // SAFETY: callers checked `out` for null
    unsafe { *out = handle };
}

/// Loads a `.btdm` file. On success `*out` receives a handle to release with
/// `btd_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn btd_model_load(path: *const c_char, out: *mut *mut BtdModel) -> BtdStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(BtdStatus::NullArgument, "null argument");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(BtdStatus::InvalidArgument, "path is not UTF-8");
        };
        match ModelArtifact::load(Path::new(path)) {
            Ok(m) => {
                store(out, m);
                BtdStatus::Ok
            }
            Err(e) => fail(pipeline_status(&e), e.to_string()),
        }
    })
}

/// Loads a model from an in-memory `.btdm` image.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn btd_model_load_bytes(data: *const u8, len: usize, out: *mut *mut BtdModel) -> BtdStatus {
    guard(|| {
        let (Some(buf), false) = (bytes(data, len), out.is_null()) else {
            return fail(BtdStatus::NullArgument, "null argument");
        };
        match ModelArtifact::from_bytes(buf) {
            Ok(m) => {
                store(out, m);
                BtdStatus::Ok
            }
            Err(e) => fail(BtdStatus::BadModel, e.to_string()),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from a `btd_model_load*` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn btd_model_free(model: *mut BtdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes (the length of a score vector).
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn btd_model_num_classes(model: *const BtdModel, out: *mut usize) -> BtdStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return fail(BtdStatus::NullArgument, "null argument");
        }
        *out = (*model).inner.network.num_classes;
        BtdStatus::Ok
    })
}

/// Classifies a binary PGM image. `*out_class` receives 0 (healthy) or
/// 1 (tumor); `scores` (may be null when `scores_len` is 0) receives the head's
/// score vector, which needs `btd_model_num_classes` slots.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn btd_model_predict_pgm(
    model: *const BtdModel,
    pgm: *const u8,
    pgm_len: usize,
    out_class: *mut u32,
    scores: *mut f64,
    scores_len: usize,
) -> BtdStatus {
    guard(|| {
        if model.is_null() || out_class.is_null() || (scores.is_null() && scores_len > 0) {
            return fail(BtdStatus::NullArgument, "null argument");
        }
        let Some(buf) = bytes(pgm, pgm_len) else {
            return fail(BtdStatus::NullArgument, "null image buffer");
        };
        let model = &(*model).inner;
        let need = model.network.num_classes;
        if !scores.is_null() && scores_len < need {
            return fail(BtdStatus::BufferTooSmall, format!("score buffer needs {need} slots"));
        }
        let img = match load_pgm(buf) {
            Ok(img) => img,
            Err(e) => return fail(BtdStatus::BadImage, e.to_string()),
        };
        match model.predict_image(&img) {
            Ok(p) => {
                *out_class = p.class as u32;
                if !scores.is_null() {
                    std::slice::from_raw_parts_mut(scores, need).copy_from_slice(&p.scores);
                }
                BtdStatus::Ok
            }
            Err(e) => fail(pipeline_status(&e), e.to_string()),
        }
    })
}

/// Tallies a confusion matrix from class indices (0 healthy, 1 tumor).
///
/// # Safety
/// `preds` and `labels` must each point to `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn btd_confusion(
    preds: *const u32,
    labels: *const u32,
    n: usize,
    out: *mut BtdConfusion,
) -> BtdStatus {
    guard(|| {
        if preds.is_null() || labels.is_null() || out.is_null() {
            return fail(BtdStatus::NullArgument, "null argument");
        }
        let to_labels = |p: *const u32| -> Option<Vec<Label>> {
            std::slice::from_raw_parts(p, n)
                .iter()
                .map(|&c| Label::from_index(c as usize))
                .collect()
        };
        let (Some(p), Some(l)) = (to_labels(preds), to_labels(labels)) else {
            return fail(BtdStatus::InvalidArgument, "class indices must be 0 or 1");
        };
        match confusion(&p, &l) {
            Ok(cm) => {
                *out = BtdConfusion {
                    tp: cm.tp,
                    fp: cm.fp,
                    tn: cm.tn,
                    fn_: cm.fn_,
                };
                BtdStatus::Ok
            }
            Err(e) => fail(BtdStatus::InvalidArgument, e.to_string()),
        }
    })
}

fn metric(m: Metric) -> BtdMetric {
    match m.ratio() {
        None => BtdMetric::default(),
        Some(r) => BtdMetric {
            defined: 1,
            num: *r.numer(),
            den: *r.denom(),
            value: m.value().unwrap_or_default(),
            percent_bp: m.percent_bp().unwrap_or_default(),
        },
    }
}

/// Accuracy, sensitivity, specificity and precision of a confusion matrix.
///
/// # Safety
/// `cm` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn btd_metrics(cm: *const BtdConfusion, out: *mut BtdMetrics) -> BtdStatus {
    guard(|| {
        if cm.is_null() || out.is_null() {
            return fail(BtdStatus::NullArgument, "null argument");
        }
        let c = &*cm;
        let r = MetricsReport::from_confusion(&ConfusionMatrix::new(c.tp, c.fp, c.tn, c.fn_));
        *out = BtdMetrics {
            accuracy: metric(r.accuracy),
            sensitivity: metric(r.sensitivity),
            specificity: metric(r.specificity),
            precision: metric(r.precision),
        };
        BtdStatus::Ok
    })
}
