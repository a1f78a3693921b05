//! C interface to the veritext classifiers.
//!
//! Models are opaque `VtModel` handles owned by the caller and released with
//! `vt_model_free`. Every fallible call returns a `VtStatus`; on failure a
//! message for the current thread is available from `vt_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use veritext::artifact;
use veritext::config::ExperimentConfig;
use veritext::corpus::{load_dataset, DataFormat, Label, Pipeline, Preprocessor};
use veritext::eval::{confusion, metrics};
use veritext::pipeline::{FeatureKind, ModelKind, TextClassifier};
use veritext::Error;

/// Status codes. Values 2 through 5 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VtStatus {
    Ok = 0,
    Invalid = 2,
    InvalidPair = 3,
    Training = 4,
    VersionMismatch = 5,
    NullArgument = 10,
    InvalidUtf8 = 11,
    Panic = 12,
}

pub const VT_LABEL_REAL: c_int = 0;
pub const VT_LABEL_FAKE: c_int = 1;

pub const VT_PIPELINE_RAW: c_int = 0;
pub const VT_PIPELINE_CLASSIC: c_int = 1;

/// A trained classifier together with the configuration it was fitted with.
pub struct VtModel {
    clf: TextClassifier,
    config: ExperimentConfig,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VtMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1_positive: f64,
    pub f1_negative: f64,
    pub f1_weighted: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = CString::new(message.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: VtStatus, message: impl Into<String>) -> VtStatus {
    set_error(message);
    status
}

fn from_error(err: Error) -> VtStatus {
    let status = match err.exit_code() {
        3 => VtStatus::InvalidPair,
        4 => VtStatus::Training,
        5 => VtStatus::VersionMismatch,
        _ => VtStatus::Invalid,
    };
    fail(status, err.to_string())
}

fn guard(f: impl FnOnce() -> VtStatus) -> VtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(VtStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, VtStatus> {
    if p.is_null() {
        return Err(fail(VtStatus::NullArgument, format!("{name} is null")));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(VtStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

fn label_code(label: Label) -> c_int {
    if label.is_fake() {
        VT_LABEL_FAKE
    } else {
        VT_LABEL_REAL
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn vt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Read a model file written by `veritext train` or `vt_model_save`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vt_model_load(path: *const c_char, out: *mut *mut VtModel) -> VtStatus {
    guard(|| {
        if out.is_null() {
            return fail(VtStatus::NullArgument, "out is null");
        }
        let path = tri!(unsafe { str_arg(path, "path") });
        match artifact::load(Path::new(path)) {
            Ok((clf, header)) => {
                let model = Box::new(VtModel {
                    clf,
                    config: header.config,
                });
                unsafe { *out = Box::into_raw(model) };
                VtStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Fit a classifier on a labeled CSV or TSV file. `model` and `features`
/// take the command-line names ("svm", "tfidf", ...). `config_path` may be
/// null for the default hyperparameters.
///
/// # Safety
/// String arguments must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vt_model_train(
    model: *const c_char,
    features: *const c_char,
    data_path: *const c_char,
    config_path: *const c_char,
    out: *mut *mut VtModel,
) -> VtStatus {
    guard(|| {
        if out.is_null() {
            return fail(VtStatus::NullArgument, "out is null");
        }
        let model = tri!(unsafe { str_arg(model, "model") });
        let features = tri!(unsafe { str_arg(features, "features") });
        let data = tri!(unsafe { str_arg(data_path, "data_path") });
        let model: ModelKind = tri!(model.parse().map_err(from_error));
        let features: FeatureKind = tri!(features.parse().map_err(from_error));
        let config = if config_path.is_null() {
            ExperimentConfig::default()
        } else {
            let p = tri!(unsafe { str_arg(config_path, "config_path") });
            tri!(ExperimentConfig::load(Path::new(p)).map_err(from_error))
        };
        let data = Path::new(data);
        let corpus = tri!(load_dataset(data, DataFormat::from_path(data)).map_err(from_error));
        let texts: Vec<&str> = corpus.texts().collect();
        let (clf, _) =
            tri!(TextClassifier::fit(&config, model, features, &texts, &corpus.labels()).map_err(from_error));
        unsafe { *out = Box::into_raw(Box::new(VtModel { clf, config })) };
        VtStatus::Ok
    })
}

/// Write the model to `path` in the artifact format.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vt_model_save(model: *const VtModel, path: *const c_char) -> VtStatus {
    guard(|| {
        let Some(m) = (unsafe { model.as_ref() }) else {
            return fail(VtStatus::NullArgument, "model is null");
        };
        let path = tri!(unsafe { str_arg(path, "path") });
        match artifact::save(Path::new(path), &m.clf, &m.config) {
            Ok(()) => VtStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// Label `n` posts. Writes `VT_LABEL_FAKE` or `VT_LABEL_REAL` to
/// `out_labels[i]` and, when `out_scores` is not null, the model's score to
/// `out_scores[i]`. Naive Bayes and the tree ensembles report a FAKE
/// probability; the linear models and the encoder report a signed margin.
/// Larger always means more likely FAKE.
///
/// # Safety
/// `texts` must hold `n` NUL-terminated strings; the output arrays must
/// have room for `n` values.
#[no_mangle]
pub unsafe extern "C" fn vt_model_predict(
    model: *const VtModel,
    texts: *const *const c_char,
    n: usize,
    out_labels: *mut c_int,
    out_scores: *mut f64,
) -> VtStatus {
    guard(|| {
        let Some(m) = (unsafe { model.as_ref() }) else {
            return fail(VtStatus::NullArgument, "model is null");
        };
        if n == 0 {
            return VtStatus::Ok;
        }
        if texts.is_null() || out_labels.is_null() {
            return fail(VtStatus::NullArgument, "texts or out_labels is null");
        }
        let ptrs = unsafe { std::slice::from_raw_parts(texts, n) };
        let mut owned = Vec::with_capacity(n);
        for (i, &p) in ptrs.iter().enumerate() {
            owned.push(tri!(unsafe { str_arg(p, &format!("texts[{i}]")) }));
        }
        let preds = tri!(m.clf.predict(&owned).map_err(from_error));
        let labels = unsafe { std::slice::from_raw_parts_mut(out_labels, n) };
        for (slot, p) in labels.iter_mut().zip(&preds) {
            *slot = label_code(p.label);
        }
        if !out_scores.is_null() {
            let scores = unsafe { std::slice::from_raw_parts_mut(out_scores, n) };
            for (slot, p) in scores.iter_mut().zip(&preds) {
                *slot = p.score;
            }
        }
        VtStatus::Ok
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vt_model_free(model: *mut VtModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Tokenize `text` with `VT_PIPELINE_RAW` or `VT_PIPELINE_CLASSIC` and write
/// the tokens joined by single spaces. Free the result with `vt_string_free`.
///
/// # Safety
/// `text` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vt_preprocess(text: *const c_char, pipeline: c_int, out: *mut *mut c_char) -> VtStatus {
    guard(|| {
        if out.is_null() {
            return fail(VtStatus::NullArgument, "out is null");
        }
        let text = tri!(unsafe { str_arg(text, "text") });
        let pipeline = match pipeline {
            VT_PIPELINE_RAW => Pipeline::Raw,
            VT_PIPELINE_CLASSIC => Pipeline::Classic,
            other => return fail(VtStatus::Invalid, format!("unknown pipeline {other}")),
        };
        let joined = Preprocessor::default().tokenize(text, pipeline).tokens.join(" ");
        match CString::new(joined) {
            Ok(s) => {
                unsafe { *out = s.into_raw() };
                VtStatus::Ok
            }
            Err(_) => fail(VtStatus::InvalidUtf8, "token contains NUL"),
        }
    })
}

/// # Safety
/// `s` must come from `vt_preprocess` or be null.
#[no_mangle]
pub unsafe extern "C" fn vt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Confusion-matrix metrics with FAKE as the positive class. `n` must be
/// at least 1.
///
/// # Safety
/// `predicted` and `truth` must hold `n` label codes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vt_metrics(
    predicted: *const c_int,
    truth: *const c_int,
    n: usize,
    out: *mut VtMetrics,
) -> VtStatus {
    guard(|| {
        if out.is_null() || (n > 0 && (predicted.is_null() || truth.is_null())) {
            return fail(VtStatus::NullArgument, "null argument");
        }
        let decode = |codes: &[c_int]| -> Result<Vec<Label>, VtStatus> {
            codes
                .iter()
                .map(|&c| match c {
                    VT_LABEL_FAKE => Ok(Label::Fake),
                    VT_LABEL_REAL => Ok(Label::Real),
                    other => Err(fail(VtStatus::Invalid, format!("unknown label code {other}"))),
                })
                .collect()
        };
        let (p, t) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            unsafe {
                (
                    tri!(decode(std::slice::from_raw_parts(predicted, n))),
                    tri!(decode(std::slice::from_raw_parts(truth, n))),
                )
            }
        };
        let cm = tri!(confusion(&p, &t).map_err(from_error));
        let r = metrics(&cm);
        unsafe {
            *out = VtMetrics {
                accuracy: r.accuracy,
                precision: r.precision,
                recall: r.recall,
                f1_positive: r.f1_positive,
                f1_negative: r.f1_negative,
                f1_weighted: r.f1_weighted,
                tp: cm.tp as u64,
                fp: cm.fp as u64,
                fn_: cm.fn_ as u64,
                tn: cm.tn as u64,
            }
        };
        VtStatus::Ok
    })
}
