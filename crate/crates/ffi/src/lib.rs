//! C ABI over `kgcdr`: open a trained checkpoint, predict ratings, and
//! compute the evaluation metrics.
//!
//! Every fallible function returns a [`KgcdrStatus`]; on failure the message
//! is available from [`kgcdr_last_error_message`] on the same thread.
//! Handles are opaque and must be released with [`kgcdr_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use kgcdr::eval::{f1_at_threshold, mae, Trained};
use kgcdr::interactions::normalize_rating;
use kgcdr::{Domain, Error, ErrorKind};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgcdrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Parse = 4,
    Io = 5,
    Data = 6,
    EmptyGraph = 7,
    Config = 8,
    Training = 9,
    Lookup = 10,
    Eval = 11,
    Panic = 12,
}

impl From<ErrorKind> for KgcdrStatus {
    fn from(kind: ErrorKind) -> Self {
        match kind {
            ErrorKind::Shape => KgcdrStatus::Shape,
            ErrorKind::Parse => KgcdrStatus::Parse,
            ErrorKind::Io => KgcdrStatus::Io,
            ErrorKind::Data => KgcdrStatus::Data,
            ErrorKind::EmptyGraph => KgcdrStatus::EmptyGraph,
            ErrorKind::Config => KgcdrStatus::Config,
            ErrorKind::Training => KgcdrStatus::Training,
            ErrorKind::Lookup => KgcdrStatus::Lookup,
            ErrorKind::Eval => KgcdrStatus::Eval,
        }
    }
}

/// Rating domain: the denser source or the sparser target.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgcdrDomain {
    Source = 0,
    Target = 1,
}

impl From<KgcdrDomain> for Domain {
    fn from(d: KgcdrDomain) -> Self {
        match d {
            KgcdrDomain::Source => Domain::Source,
            KgcdrDomain::Target => Domain::Target,
        }
    }
}

/// A loaded model of any kind.
pub struct KgcdrModel {
    inner: Trained,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(KgcdrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.kind().into(), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(KgcdrStatus::NullPointer, format!("{what} is NULL"))
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KgcdrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            KgcdrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside kgcdr");
            KgcdrStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be NULL or point to `len` readable values.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next kgcdr call on the same thread.
#[no_mangle]
pub extern "C" fn kgcdr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kgcdr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens a checkpoint written by the `train` command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
/// On success `*out` receives a handle owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn kgcdr_model_open(path: *const c_char, out: *mut *mut KgcdrModel) -> KgcdrStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(KgcdrStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
        let inner = Trained::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(KgcdrModel { inner }));
        Ok(())
    })
}

/// Releases a handle; NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle from [`kgcdr_model_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kgcdr_model_free(model: *mut KgcdrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicted normalized rating in (0, 1).
///
/// # Safety
/// `model` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kgcdr_model_predict(
    model: *const KgcdrModel,
    user: usize,
    domain: KgcdrDomain,
    item: usize,
    out: *mut f64,
) -> KgcdrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.inner.predict(user, domain.into(), item)?;
        Ok(())
    })
}

/// Predicts `n` (user, item) pairs of one domain. Nothing is written to
/// `out` unless every pair is valid.
///
/// # Safety
/// `users` and `items` must point to `n` readable values and `out` to `n`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn kgcdr_model_predict_batch(
    model: *const KgcdrModel,
    domain: KgcdrDomain,
    users: *const usize,
    items: *const usize,
    n: usize,
    out: *mut f64,
) -> KgcdrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let users = slice(users, n, "users")?;
        let items = slice(items, n, "items")?;
        if n > 0 && out.is_null() {
            return Err(null("out"));
        }
        let preds = users
            .iter()
            .zip(items)
            .map(|(&u, &i)| m.inner.predict(u, domain.into(), i))
            .collect::<kgcdr::Result<Vec<f64>>>()?;
        if n > 0 {
            std::slice::from_raw_parts_mut(out, n).copy_from_slice(&preds);
        }
        Ok(())
    })
}

/// Maps a 1-5 rating onto [0, 1].
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kgcdr_normalize_rating(raw: u8, out: *mut f64) -> KgcdrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = normalize_rating(raw)?;
        Ok(())
    })
}

/// Mean absolute error in percent of normalized predictions against
/// normalized targets.
///
/// # Safety
/// `predictions` and `targets` must point to `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn kgcdr_mae(predictions: *const f64, targets: *const f64, n: usize, out: *mut f64) -> KgcdrStatus {
    guard(|| {
        let p = slice(predictions, n, "predictions")?;
        let t = slice(targets, n, "targets")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = mae(p, t)?;
        Ok(())
    })
}

/// F1 in percent of "prediction >= 0.75" against "raw rating >= 4".
///
/// # Safety
/// `predictions` and `targets_raw` must point to `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn kgcdr_f1(predictions: *const f64, targets_raw: *const u8, n: usize, out: *mut f64) -> KgcdrStatus {
    guard(|| {
        let p = slice(predictions, n, "predictions")?;
        let t = slice(targets_raw, n, "targets_raw")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = f1_at_threshold(p, t)?;
        Ok(())
    })
}
