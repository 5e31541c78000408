//! C ABI over the affirm toolkit.
//!
//! Every fallible call returns an [`AffirmStatus`]; on failure the message is
//! available from [`affirm_last_error`] on the same thread. Strings handed out
//! by this library must be released with [`affirm_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use affirm::blend::make_plan;
use affirm::cue::{CrfModel, Detector, LexiconSet};
use affirm::metrics::{bleu2, chrfpp, MetricScore};
use affirm::tokenize::token_count;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffirmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    UnsupportedLanguage = 4,
    Io = 5,
    Model = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Internal = 9,
}

/// Opaque cue detector handle.
pub struct AffirmDetector {
    inner: Detector,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(AffirmStatus, String);

impl From<affirm::Error> for Failure {
    fn from(e: affirm::Error) -> Self {
        use affirm::Error as E;
        let status = match &e {
            E::UnsupportedLanguage { .. } => AffirmStatus::UnsupportedLanguage,
            E::Io { .. } => AffirmStatus::Io,
            E::Model(_) | E::Lexicon { .. } | E::Json { .. } | E::Format { .. } => AffirmStatus::Model,
            E::InvalidArgument(_) | E::LineCountMismatch { .. } => AffirmStatus::InvalidArgument,
            _ => AffirmStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AffirmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AffirmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside affirm");
            AffirmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(AffirmStatus::NullPointer, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(AffirmStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller promises a valid, writable pointer when non-NULL.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(AffirmStatus::NullPointer, format!("{name} is NULL")))
}

fn detector_arg<'a>(p: *const AffirmDetector) -> Result<&'a Detector, Failure> {
    // SAFETY: non-NULL handles come from affirm_detector_new_* and are live.
    unsafe { p.as_ref() }
        .map(|d| &d.inner)
        .ok_or_else(|| Failure(AffirmStatus::NullPointer, "detector is NULL".into()))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next affirm call on the same thread.
#[no_mangle]
pub extern "C" fn affirm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Rule detector over the bundled lexicons. Never NULL.
#[no_mangle]
pub extern "C" fn affirm_detector_new_rules() -> *mut AffirmDetector {
    clear_error();
    Box::into_raw(Box::new(AffirmDetector {
        inner: Detector::bundled_rules(),
    }))
}

/// Loads a trained model file into a new detector stored in `*out`.
///
/// # Safety
/// `model_path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn affirm_detector_new_crf(
    model_path: *const c_char,
    out: *mut *mut AffirmDetector,
) -> AffirmStatus {
    guard(|| {
        let path = str_arg(model_path, "model_path")?;
        let out = out_arg(out, "out")?;
        let model = CrfModel::load(path)?;
        let inner = Detector::crf(Arc::new(model), Arc::new(LexiconSet::bundled()));
        *out = Box::into_raw(Box::new(AffirmDetector { inner }));
        Ok(())
    })
}

/// # Safety
/// `detector` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn affirm_detector_free(detector: *mut AffirmDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn affirm_has_negation(
    detector: *const AffirmDetector,
    sentence: *const c_char,
    lang: *const c_char,
    out: *mut bool,
) -> AffirmStatus {
    guard(|| {
        let d = detector_arg(detector)?;
        let s = str_arg(sentence, "sentence")?;
        let l = str_arg(lang, "lang")?;
        *out_arg(out, "out")? = d.has_negation(s, l)?;
        Ok(())
    })
}

/// Tags `sentence` and writes the tagged sentence as JSON to `*out_json`.
/// Free the string with [`affirm_string_free`].
///
/// # Safety
/// String arguments must be NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn affirm_tag_json(
    detector: *const AffirmDetector,
    sentence: *const c_char,
    lang: *const c_char,
    out_json: *mut *mut c_char,
) -> AffirmStatus {
    guard(|| {
        let d = detector_arg(detector)?;
        let s = str_arg(sentence, "sentence")?;
        let l = str_arg(lang, "lang")?;
        let out = out_arg(out_json, "out_json")?;
        let tagged = d.detect(s, l)?;
        let json = serde_json::to_string(&tagged).map_err(|e| Failure(AffirmStatus::Internal, e.to_string()))?;
        *out = CString::new(json)
            .map_err(|e| Failure(AffirmStatus::Internal, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn affirm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn affirm_token_count(
    sentence: *const c_char,
    lang: *const c_char,
    out: *mut usize,
) -> AffirmStatus {
    guard(|| {
        let s = str_arg(sentence, "sentence")?;
        let l = str_arg(lang, "lang")?;
        *out_arg(out, "out")? = token_count(s, l);
        Ok(())
    })
}

unsafe fn string_array<'a>(p: *const *const c_char, n: usize, name: &str) -> Result<Vec<&'a str>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Failure(AffirmStatus::NullPointer, format!("{name} is NULL")));
    }
    std::slice::from_raw_parts(p, n)
        .iter()
        .enumerate()
        .map(|(i, &s)| str_arg(s, &format!("{name}[{i}]")))
        .collect()
}

type Metric = fn(&[&str], &[&str]) -> affirm::Result<MetricScore>;

unsafe fn corpus_metric(
    metric: Metric,
    candidates: *const *const c_char,
    references: *const *const c_char,
    n: usize,
    out: *mut f64,
) -> AffirmStatus {
    guard(|| {
        let c = string_array(candidates, n, "candidates")?;
        let r = string_array(references, n, "references")?;
        *out_arg(out, "out")? = metric(&c, &r)?.value;
        Ok(())
    })
}

/// Corpus BLEU-2 over `n` aligned candidate/reference strings.
///
/// # Safety
/// Both arrays must hold `n` NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn affirm_bleu2(
    candidates: *const *const c_char,
    references: *const *const c_char,
    n: usize,
    out: *mut f64,
) -> AffirmStatus {
    corpus_metric(|c, r| bleu2(c, r), candidates, references, n, out)
}

/// Corpus chrF++ over `n` aligned candidate/reference strings.
///
/// # Safety
/// Both arrays must hold `n` NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn affirm_chrfpp(
    candidates: *const *const c_char,
    references: *const *const c_char,
    n: usize,
    out: *mut f64,
) -> AffirmStatus {
    corpus_metric(|c, r| chrfpp(c, r), candidates, references, n, out)
}

/// Writes the per-epoch auxiliary counts of a blend plan into `out`, which has
/// room for `capacity` values. `*written` receives the number of epochs
/// (`m + n + k`) even when the buffer is too small.
///
/// # Safety
/// `out` must point to `capacity` writable values (or be NULL when
/// `capacity` is 0); `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn affirm_blend_counts(
    m: usize,
    n: usize,
    k: usize,
    factor: f64,
    n_ours: usize,
    out: *mut usize,
    capacity: usize,
    written: *mut usize,
) -> AffirmStatus {
    guard(|| {
        let written = out_arg(written, "written")?;
        let plan = make_plan(m, n, k, factor, n_ours, 0, 0)?;
        let counts = &plan.per_epoch_aux_counts;
        *written = counts.len();
        if counts.len() > capacity {
            return Err(Failure(
                AffirmStatus::BufferTooSmall,
                format!("need room for {} counts, have {capacity}", counts.len()),
            ));
        }
        if !counts.is_empty() {
            if out.is_null() {
                return Err(Failure(AffirmStatus::NullPointer, "out is NULL".into()));
            }
            std::slice::from_raw_parts_mut(out, counts.len()).copy_from_slice(counts);
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_records_and_clears() {
        let s = guard(|| Err(Failure(AffirmStatus::Io, "boom".into())));
        assert_eq!(s, AffirmStatus::Io);
        let msg = unsafe { CStr::from_ptr(affirm_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "boom");
        assert_eq!(guard(|| Ok(())), AffirmStatus::Ok);
        assert!(affirm_last_error().is_null());
    }

    #[test]
    fn guard_catches_panics() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let s = guard(|| panic!("nope"));
        std::panic::set_hook(prev);
        assert_eq!(s, AffirmStatus::Panic);
    }

    #[test]
    fn error_mapping() {
        let f: Failure = affirm::Error::invalid("x").into();
        assert_eq!(f.0, AffirmStatus::InvalidArgument);
    }
}
