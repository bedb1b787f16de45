//! C ABI for the fei3d toolkit.
//!
//! Models travel as opaque handles created from checkpoint files; every
//! fallible call returns a [`FeiStatus`] and stores a human-readable
//! message retrievable with [`fei3d_last_error_message`]. Buffers are
//! caller-allocated row-major f64 unless noted; strings returned by the
//! library must be released with [`fei3d_string_free`].
//!
//! The matching header (`include/fei3d.h`) is generated at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use fei3d::fusion::{late_fuse_class, late_fuse_va, FusionStrategy};
use fei3d::metrics::{classification_report, regression_report, MetricsReport};
use fei3d::nn::MlpModel;
use fei3d::numerics::Matrix;
use fei3d::training::load_checkpoint;
use fei3d::Error;

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeiStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Argument outside its domain (bad shape, bad enum value, ...).
    InvalidArgument = 2,
    /// Input data failed validation.
    DataError = 3,
    /// File could not be read or written.
    IoError = 4,
    /// File content violates its format.
    FormatError = 5,
    /// Any other library failure.
    InternalError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(err: Error) -> FeiStatus {
    let status = match &err {
        Error::Shape(_) | Error::Domain(_) | Error::Config(_) => FeiStatus::InvalidArgument,
        Error::Data(_) | Error::Alignment(_) | Error::NonFinite(_) => FeiStatus::DataError,
        Error::Io(_) => FeiStatus::IoError,
        Error::Format { .. } | Error::Parse { .. } | Error::Json(_) => FeiStatus::FormatError,
        Error::Protocol(_) => FeiStatus::InternalError,
    };
    set_last_error(&err.to_string());
    status
}

fn null_arg(name: &str) -> FeiStatus {
    set_last_error(&format!("{name} must not be null"));
    FeiStatus::NullPointer
}

/// Message of the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fei3d_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fei3d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque classifier/regressor handle.
pub struct FeiModel {
    inner: MlpModel,
}

/// Loads a model from a checkpoint file into a fresh handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fei3d_model_load(
    path: *const c_char,
    out_model: *mut *mut FeiModel,
) -> FeiStatus {
    if path.is_null() {
        return null_arg("path");
    }
    if out_model.is_null() {
        return null_arg("out_model");
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_last_error("path is not valid UTF-8");
            return FeiStatus::InvalidArgument;
        }
    };
    match load_checkpoint(Path::new(path)) {
        Ok((model, _meta)) => {
            *out_model = Box::into_raw(Box::new(FeiModel { inner: model }));
            FeiStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Releases a handle created by [`fei3d_model_load`]. Null is a no-op.
///
/// # Safety
/// `model` must be null or a pointer previously returned by this library,
/// and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fei3d_model_free(model: *mut FeiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fei3d_model_input_dim(
    model: *const FeiModel,
    out: *mut usize,
) -> FeiStatus {
    if model.is_null() {
        return null_arg("model");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = (*model).inner.input_dim();
    FeiStatus::Ok
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fei3d_model_output_dim(
    model: *const FeiModel,
    out: *mut usize,
) -> FeiStatus {
    if model.is_null() {
        return null_arg("model");
    }
    if out.is_null() {
        return null_arg("out");
    }
    *out = (*model).inner.head_width();
    FeiStatus::Ok
}

/// Head layout: how many leading output columns are class scores and
/// whether the trailing two columns are valence/arousal.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fei3d_model_head_info(
    model: *const FeiModel,
    out_class_count: *mut usize,
    out_has_va: *mut bool,
) -> FeiStatus {
    if model.is_null() {
        return null_arg("model");
    }
    if out_class_count.is_null() || out_has_va.is_null() {
        return null_arg("out_class_count/out_has_va");
    }
    let head = (*model).inner.head();
    *out_class_count = head.class_count();
    *out_has_va = head.has_va();
    FeiStatus::Ok
}

/// Eval-mode forward pass. `features` is row-major `rows x cols` with
/// `cols` equal to the model input dimension; `out` receives raw head
/// scores, `rows x output_dim` (`out_len` must be at least that).
///
/// # Safety
/// Buffers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fei3d_model_predict(
    model: *const FeiModel,
    features: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    out_len: usize,
) -> FeiStatus {
    if model.is_null() {
        return null_arg("model");
    }
    if features.is_null() {
        return null_arg("features");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let model = &(*model).inner;
    let needed = rows * model.head_width();
    if out_len < needed {
        set_last_error(&format!(
            "output buffer holds {out_len} values, need {needed}"
        ));
        return FeiStatus::InvalidArgument;
    }
    let data = std::slice::from_raw_parts(features, rows * cols).to_vec();
    let batch = match Matrix::from_vec(rows, cols, data) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    match model.forward_eval(&batch) {
        Ok(scores) => {
            std::slice::from_raw_parts_mut(out, needed).copy_from_slice(scores.data());
            FeiStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// In-place row softmax over a `rows x cols` buffer, for turning raw
/// class scores into probabilities.
///
/// # Safety
/// `data` must be valid for `rows * cols` values.
#[no_mangle]
pub unsafe extern "C" fn fei3d_softmax_rows(
    data: *mut f64,
    rows: usize,
    cols: usize,
) -> FeiStatus {
    if data.is_null() {
        return null_arg("data");
    }
    let slice = std::slice::from_raw_parts_mut(data, rows * cols);
    let m = match Matrix::from_vec(rows, cols, slice.to_vec()) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let soft = fei3d::losses::softmax_rows(&m);
    slice.copy_from_slice(soft.data());
    FeiStatus::Ok
}

/// Late-fusion rule selector for the C surface; `Weighted` reads the
/// separate weight argument as the second source's share.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeiFusionStrategy {
    Max = 0,
    Min = 1,
    Mean = 2,
    Weighted = 3,
}

fn strategy_of(s: FeiFusionStrategy, weight: f64) -> FusionStrategy {
    match s {
        FeiFusionStrategy::Max => FusionStrategy::Max,
        FeiFusionStrategy::Min => FusionStrategy::Min,
        FeiFusionStrategy::Mean => FusionStrategy::Mean,
        FeiFusionStrategy::Weighted => FusionStrategy::Weighted(weight),
    }
}

/// Fuses two aligned row-major `rows x classes` probability matrices into
/// `out` (same shape). Rows must sum to 1 within 1e-9.
///
/// # Safety
/// Buffers must be valid for `rows * classes` values.
#[no_mangle]
pub unsafe extern "C" fn fei3d_late_fuse_class(
    a: *const f64,
    b: *const f64,
    rows: usize,
    classes: usize,
    strategy: FeiFusionStrategy,
    weight: f64,
    out: *mut f64,
) -> FeiStatus {
    if a.is_null() || b.is_null() {
        return null_arg("a/b");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let n = rows * classes;
    let build = |p: *const f64| {
        Matrix::from_vec(rows, classes, std::slice::from_raw_parts(p, n).to_vec())
    };
    let (ma, mb) = match (build(a), build(b)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return fail(e),
    };
    match late_fuse_class(&ma, &mb, &strategy_of(strategy, weight)) {
        Ok(fused) => {
            std::slice::from_raw_parts_mut(out, n).copy_from_slice(fused.data());
            FeiStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Fuses two aligned row-major `rows x 2` valence/arousal matrices into
/// `out` (same shape). Values must lie in [-1, 1].
///
/// # Safety
/// Buffers must be valid for `rows * 2` values.
#[no_mangle]
pub unsafe extern "C" fn fei3d_late_fuse_va(
    a: *const f64,
    b: *const f64,
    rows: usize,
    strategy: FeiFusionStrategy,
    weight: f64,
    out: *mut f64,
) -> FeiStatus {
    if a.is_null() || b.is_null() {
        return null_arg("a/b");
    }
    if out.is_null() {
        return null_arg("out");
    }
    let n = rows * 2;
    let build =
        |p: *const f64| Matrix::from_vec(rows, 2, std::slice::from_raw_parts(p, n).to_vec());
    let (ma, mb) = match (build(a), build(b)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return fail(e),
    };
    match late_fuse_va(&ma, &mb, &strategy_of(strategy, weight)) {
        Ok(fused) => {
            std::slice::from_raw_parts_mut(out, n).copy_from_slice(fused.data());
            FeiStatus::Ok
        }
        Err(e) => fail(e),
    }
}

fn report_to_cstring(report: &MetricsReport) -> *mut c_char {
    let json = report.to_json_pretty().replace('\0', " ");
    CString::new(json).unwrap_or_default().into_raw()
}

/// Full classification metric battery (accuracy, per-class and averaged
/// precision/recall/F1) as a JSON string; release with
/// [`fei3d_string_free`].
///
/// # Safety
/// Label buffers must be valid for `len` values; `out_json` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fei3d_classification_report_json(
    true_labels: *const u32,
    pred_labels: *const u32,
    len: usize,
    classes: usize,
    out_json: *mut *mut c_char,
) -> FeiStatus {
    if true_labels.is_null() || pred_labels.is_null() {
        return null_arg("true_labels/pred_labels");
    }
    if out_json.is_null() {
        return null_arg("out_json");
    }
    let truth: Vec<usize> = std::slice::from_raw_parts(true_labels, len)
        .iter()
        .map(|&v| v as usize)
        .collect();
    let pred: Vec<usize> = std::slice::from_raw_parts(pred_labels, len)
        .iter()
        .map(|&v| v as usize)
        .collect();
    match classification_report(&truth, &pred, classes) {
        Ok(report) => {
            *out_json = report_to_cstring(&MetricsReport::classification_only(report));
            FeiStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Regression metric battery (MSE/MAE/RMSE/CCC per valence-arousal
/// dimension) over row-major `rows x 2` buffers, as a JSON string;
/// release with [`fei3d_string_free`].
///
/// # Safety
/// Buffers must be valid for `rows * 2` values; `out_json` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fei3d_regression_report_json(
    pred: *const f64,
    target: *const f64,
    rows: usize,
    out_json: *mut *mut c_char,
) -> FeiStatus {
    if pred.is_null() || target.is_null() {
        return null_arg("pred/target");
    }
    if out_json.is_null() {
        return null_arg("out_json");
    }
    let n = rows * 2;
    let build =
        |p: *const f64| Matrix::from_vec(rows, 2, std::slice::from_raw_parts(p, n).to_vec());
    let (mp, mt) = match (build(pred), build(target)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return fail(e),
    };
    match regression_report(&mp, &mt) {
        Ok(report) => {
            *out_json = report_to_cstring(&MetricsReport::regression_only(report));
            FeiStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or a pointer returned by this library, and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fei3d_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
