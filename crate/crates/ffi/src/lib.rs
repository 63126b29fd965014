//! C ABI over the `caet` library.
//!
//! Every fallible function returns a [`CaetStatus`]; on failure the message is
//! available from [`caet_last_error`] on the same thread. Strings returned by
//! the library must be released with [`caet_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use caet::cli::transfer_text;
use caet::evalkit::{bleu, geometric_mean};
use caet::text::split_words;
use caet::training::{load_checkpoint, Checkpoint};
use caet::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Data = 4,
    Io = 5,
    Checkpoint = 6,
    Numeric = 7,
    Internal = 8,
}

/// A loaded transfer model. Opaque to C.
pub struct CaetModel {
    checkpoint: Checkpoint,
    max_len: usize,
    attributes: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> CaetStatus {
    match err {
        Error::Config(_) | Error::UnknownAttribute(_) => CaetStatus::Config,
        Error::Io(_) => CaetStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) => CaetStatus::Checkpoint,
        Error::NonFinite { .. } => CaetStatus::Numeric,
        Error::Shape { .. } | Error::EmptyLoss | Error::MixedAttributes => CaetStatus::Internal,
        _ => CaetStatus::Data,
    }
}

/// Runs `f`, recording errors and converting panics into `Internal`.
fn guard(f: impl FnOnce() -> Result<(), CaetStatus>) -> CaetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CaetStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            CaetStatus::Internal
        }
    }
}

fn fail(err: Error) -> CaetStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, CaetStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(CaetStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        CaetStatus::InvalidUtf8
    })
}

fn out_arg<T>(p: *mut T) -> Result<(), CaetStatus> {
    if p.is_null() {
        set_error("output pointer is null");
        return Err(CaetStatus::NullPointer);
    }
    Ok(())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn caet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn caet_model_load(path: *const c_char, out: *mut *mut CaetModel) -> CaetStatus {
    guard(|| {
        out_arg(out)?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let checkpoint = load_checkpoint(Path::new(path)).map_err(fail)?;
        let max_len = checkpoint.training.as_ref().map_or(32, |t| t.max_len);
        let attributes = checkpoint
            .vocab
            .attribute_names()
            .iter()
            .map(|a| CString::new(*a).map_err(|_| CaetStatus::Data))
            .collect::<Result<_, _>>()?;
        *out = Box::into_raw(Box::new(CaetModel {
            checkpoint,
            max_len,
            attributes,
        }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`caet_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn caet_model_free(model: *mut CaetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Name of attribute `index` (0 or 1), or null. Owned by the model.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn caet_model_attribute(model: *const CaetModel, index: usize) -> *const c_char {
    match model.as_ref().and_then(|m| m.attributes.get(index)) {
        Some(name) => name.as_ptr(),
        None => ptr::null(),
    }
}

/// Rewrites `text` into attribute `to`. On success `*out` holds a new string
/// to be released with [`caet_string_free`].
///
/// # Safety
/// `model` must be a live handle; `text` and `to` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn caet_transfer(
    model: *const CaetModel,
    text: *const c_char,
    to: *const c_char,
    out: *mut *mut c_char,
) -> CaetStatus {
    guard(|| {
        out_arg(out)?;
        *out = ptr::null_mut();
        let Some(m) = model.as_ref() else {
            set_error("model is null");
            return Err(CaetStatus::NullPointer);
        };
        let text = str_arg(text, "text")?;
        let to = str_arg(to, "attribute")?;
        let vocab = &m.checkpoint.vocab;
        let attr = vocab.attribute(to).map_err(fail)?;
        let result = transfer_text(&m.checkpoint.model, vocab, text, attr, m.max_len).map_err(fail)?;
        *out = CString::new(result).map_err(|_| CaetStatus::Internal)?.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn caet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Cube root of `acc * sim / ppl`; zero when `acc` or `sim` is not positive.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn caet_geometric_mean(acc: f64, ppl: f64, sim: f64, out: *mut f64) -> CaetStatus {
    guard(|| {
        out_arg(out)?;
        *out = geometric_mean(acc, ppl, sim).map_err(fail)?;
        Ok(())
    })
}

/// Sentence BLEU (0-100) of `candidate` against `n_refs` references, on
/// lowercased words.
///
/// # Safety
/// `candidate` and each of the `n_refs` entries of `refs` must be
/// NUL-terminated strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn caet_bleu(
    candidate: *const c_char,
    refs: *const *const c_char,
    n_refs: usize,
    out: *mut f64,
) -> CaetStatus {
    guard(|| {
        out_arg(out)?;
        let cand = split_words(&str_arg(candidate, "candidate")?.to_lowercase());
        if refs.is_null() || n_refs == 0 {
            set_error("at least one reference is required");
            return Err(if refs.is_null() { CaetStatus::NullPointer } else { CaetStatus::Data });
        }
        let refs: Vec<Vec<String>> = std::slice::from_raw_parts(refs, n_refs)
            .iter()
            .map(|&r| Ok(split_words(&str_arg(r, "reference")?.to_lowercase())))
            .collect::<Result<_, CaetStatus>>()?;
        let refs: Vec<&[String]> = refs.iter().map(Vec::as_slice).collect();
        *out = bleu(&cand, &refs);
        Ok(())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn caet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
