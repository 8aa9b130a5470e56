//! C ABI over the persuakit library.
//!
//! All documents cross the boundary as NUL-terminated UTF-8 JSON in the same
//! formats the command-line tool reads and writes. Functions return a
//! [`PkStatus`]; on failure a description is available from
//! [`pk_last_error_message`] on the calling thread. Strings handed out through
//! `out_json` parameters are owned by the caller and must be released with
//! [`pk_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use persuakit::augmentation::{self, Strategy};
use persuakit::dataset;
use persuakit::ensembling::mean_ensemble;
use persuakit::pipeline;
use persuakit::scoring::{self, BenefitSet};
use persuakit::thresholding::{self, Grid, PredictionMatrix, ThresholdProfile};
use persuakit::{Error, LabelHierarchy};
use serde_json::Value;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PkStatus {
    Ok = 0,
    /// A required pointer was null or a parameter was invalid.
    InvalidArgument = 1,
    /// A document could not be parsed.
    Malformed = 2,
    /// Documents parsed but violate a contract (unknown labels, mismatched ids, ...).
    Validation = 3,
    /// File system failure.
    Io = 4,
    /// External service failure.
    Service = 5,
    /// Internal error; the library caught a panic.
    Internal = 6,
}

/// Opaque label hierarchy handle.
pub struct PkHierarchy(LabelHierarchy);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> PkStatus {
    match e {
        Error::Malformed(_) => PkStatus::Malformed,
        Error::InvalidArgument(_) | Error::EmptyGrid(_) => PkStatus::InvalidArgument,
        Error::Io { .. } => PkStatus::Io,
        Error::Service(_) => PkStatus::Service,
        _ => PkStatus::Validation,
    }
}

struct Failure(PkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PkStatus::InvalidArgument, msg.into())
}

/// Runs `f` behind a panic guard and records the error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PkStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal error".into());
            PkStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn hierarchy_arg<'a>(h: *const PkHierarchy) -> Result<&'a LabelHierarchy, Failure> {
    h.as_ref()
        .map(|h| &h.0)
        .ok_or_else(|| invalid("`hierarchy` is null"))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(PkStatus::Internal, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(invalid("output pointer is null"))
    } else {
        Ok(())
    }
}

fn parse_members(doc: &str, h: &LabelHierarchy) -> Result<Vec<PredictionMatrix>, Failure> {
    let docs: Vec<Value> = serde_json::from_str(doc)
        .map_err(|e| Failure(PkStatus::Malformed, format!("members must be a JSON array of matrices: {e}")))?;
    docs.iter()
        .map(|d| {
            let m = PredictionMatrix::parse(d.to_string().as_bytes())?;
            m.validate_against(h)?;
            Ok(pipeline::to_probabilities(m)?)
        })
        .collect()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn pk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned through an `out_json` parameter. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Handle to the bundled persuasion taxonomy.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn pk_hierarchy_default(out: *mut *mut PkHierarchy) -> PkStatus {
    guard(|| {
        check_out(out)?;
        *out = Box::into_raw(Box::new(PkHierarchy(LabelHierarchy::persuasion())));
        Ok(())
    })
}

/// Parses a hierarchy document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_hierarchy_from_json(json: *const c_char, out: *mut *mut PkHierarchy) -> PkStatus {
    guard(|| {
        check_out(out)?;
        let h = LabelHierarchy::parse(str_arg(json, "json")?.as_bytes())?;
        *out = Box::into_raw(Box::new(PkHierarchy(h)));
        Ok(())
    })
}

/// Releases a hierarchy handle. Null is ignored.
///
/// # Safety
/// `h` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn pk_hierarchy_free(h: *mut PkHierarchy) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of leaf techniques, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pk_hierarchy_leaf_count(h: *const PkHierarchy) -> usize {
    h.as_ref().map_or(0, |h| h.0.leaf_order().len())
}

/// Hierarchical and per-class scores of two label files.
///
/// # Safety
/// String arguments must be NUL-terminated, `h` a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_score(
    h: *const PkHierarchy,
    gold_json: *const c_char,
    pred_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PkStatus {
    guard(|| {
        check_out(out_json)?;
        let h = hierarchy_arg(h)?;
        let gold = pipeline::parse_label_file(str_arg(gold_json, "gold_json")?.as_bytes())?;
        let pred = pipeline::parse_label_file(str_arg(pred_json, "pred_json")?.as_bytes())?;
        put_string(out_json, scoring::hierarchical_prf(&gold, &pred, h)?.to_json())
    })
}

/// Tunes per-technique thresholds over the grid `lo..=hi` in steps of `step`.
/// Logit matrices are passed through the sigmoid first.
///
/// # Safety
/// String arguments must be NUL-terminated, `h` a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_tune_thresholds(
    h: *const PkHierarchy,
    matrix_json: *const c_char,
    gold_json: *const c_char,
    lo: f64,
    hi: f64,
    step: f64,
    out_json: *mut *mut c_char,
) -> PkStatus {
    guard(|| {
        check_out(out_json)?;
        let h = hierarchy_arg(h)?;
        let m = PredictionMatrix::parse(str_arg(matrix_json, "matrix_json")?.as_bytes())?;
        m.validate_against(h)?;
        let m = pipeline::to_probabilities(m)?;
        let gold = pipeline::parse_label_file(str_arg(gold_json, "gold_json")?.as_bytes())?;
        let profile = thresholding::tune_thresholds(&m, &gold, Grid { lo, hi, step }, h)?;
        put_string(out_json, profile.to_json())
    })
}

/// Mean ensemble of a JSON array of prediction matrices.
///
/// # Safety
/// String arguments must be NUL-terminated, `h` a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_ensemble(
    h: *const PkHierarchy,
    members_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PkStatus {
    guard(|| {
        check_out(out_json)?;
        let h = hierarchy_arg(h)?;
        let members = parse_members(str_arg(members_json, "members_json")?, h)?;
        put_string(out_json, mean_ensemble(&members)?.to_json())
    })
}

/// Ensembles the members and applies a threshold profile, producing a label file.
///
/// # Safety
/// String arguments must be NUL-terminated, `h` a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_predict(
    h: *const PkHierarchy,
    members_json: *const c_char,
    profile_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PkStatus {
    guard(|| {
        check_out(out_json)?;
        let h = hierarchy_arg(h)?;
        let members = parse_members(str_arg(members_json, "members_json")?, h)?;
        let profile = ThresholdProfile::parse(str_arg(profile_json, "profile_json")?.as_bytes())?;
        let labels = pipeline::predict_labels(&members, &profile, h)?;
        put_string(out_json, pipeline::label_file_json(&labels))
    })
}

/// Builds an augmentation plan. `params_json` is an object with a `strategy`
/// key and the strategy's parameters: `n` for `para_n`; `benefit` (list of
/// techniques) and optional `m` (default 10) for `para_benef`; optional
/// `target` (default 1500) and `batch` (default 5) for `para_bal`.
///
/// # Safety
/// String arguments must be NUL-terminated, `h` a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pk_plan_augment(
    h: *const PkHierarchy,
    dataset_json: *const c_char,
    params_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PkStatus {
    guard(|| {
        check_out(out_json)?;
        let h = hierarchy_arg(h)?;
        let ds = dataset::load_dataset("dataset", str_arg(dataset_json, "dataset_json")?.as_bytes(), h)?;
        let params: Value = serde_json::from_str(str_arg(params_json, "params_json")?)
            .map_err(|e| Failure(PkStatus::Malformed, e.to_string()))?;
        let count = |key: &str, default: Option<usize>| -> Result<usize, Failure> {
            match params.get(key) {
                Some(v) => v
                    .as_u64()
                    .map(|n| n as usize)
                    .ok_or_else(|| invalid(format!("`{key}` must be a non-negative integer"))),
                None => default.ok_or_else(|| invalid(format!("missing `{key}`"))),
            }
        };
        let strategy: Strategy = params
            .get("strategy")
            .and_then(Value::as_str)
            .ok_or_else(|| invalid("missing `strategy`"))?
            .parse()?;
        let plan = match strategy {
            Strategy::ParaN => augmentation::plan_para_n(&ds, count("n", None)?, h)?,
            Strategy::ParaBenef => {
                let techniques = params
                    .get("benefit")
                    .cloned()
                    .ok_or_else(|| invalid("missing `benefit`"))
                    .and_then(|v| {
                        serde_json::from_value(v).map_err(|e| Failure(PkStatus::Malformed, e.to_string()))
                    })?;
                let b = BenefitSet {
                    techniques,
                    epsilon: scoring::DEFAULT_EPSILON,
                };
                augmentation::plan_para_benef(&ds, &b, count("m", Some(10))?, h)?
            }
            Strategy::ParaBal => {
                augmentation::plan_para_bal(&ds, count("target", Some(1500))?, count("batch", Some(5))?, h)?
            }
        };
        put_string(out_json, plan.to_json())
    })
}
