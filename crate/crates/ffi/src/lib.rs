//! C ABI for relboost.
//!
//! Handles are opaque pointers created and released by this library. Every
//! fallible call returns an [`RbStatus`]; on failure the message is available
//! from [`rb_last_error_message`] until the next call on the same thread.
//! Strings returned through out-parameters must be released with
//! [`rb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use relboost::cli::load_store;
use relboost::ingest::store_from_facts;
use relboost::logic::{parse_facts, RuleStyle};
use relboost::{BoostedModel, Error, FactStore, RuleSet};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    SchemaMismatch = 5,
    InvalidModel = 6,
    InvalidData = 7,
    Internal = 8,
}

/// A trained model.
pub struct RbModel {
    inner: BoostedModel,
}

/// Facts parsed against a model's schema.
pub struct RbFactStore {
    inner: FactStore,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RbStatus {
    match e {
        Error::Io { .. } => RbStatus::Io,
        Error::Parse { .. } => RbStatus::Parse,
        Error::SchemaMismatch { .. } => RbStatus::SchemaMismatch,
        Error::FormatVersion { .. } | Error::Model(_) | Error::InvalidSchema(_) => RbStatus::InvalidModel,
        e if e.is_internal() => RbStatus::Internal,
        _ => RbStatus::InvalidData,
    }
}

enum Failure {
    Status(RbStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RbStatus::Ok,
        Ok(Err(Failure::Status(s, m))) => {
            set_error(m);
            s
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("panic inside relboost".into());
            RbStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Status(RbStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(RbStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::Status(RbStatus::NullArgument, format!("`{name}` is null")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::Status(RbStatus::NullArgument, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::Status(RbStatus::Internal, "string contains a nul byte".into()))
}

/// Message for the last failed call on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn rb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static.
#[no_mangle]
pub extern "C" fn rb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model document from `path`.
///
/// # Safety
/// `path` must be a valid C string; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rb_model_load(path: *const c_char, out: *mut *mut RbModel) -> RbStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let inner = BoostedModel::load(path)?;
        *out = Box::into_raw(Box::new(RbModel { inner }));
        Ok(())
    })
}

/// Parses a model document held in memory.
///
/// # Safety
/// `json` must be a valid C string; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rb_model_from_json(json: *const c_char, out: *mut *mut RbModel) -> RbStatus {
    guard(|| {
        out_arg(out, "out")?;
        let inner = BoostedModel::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(RbModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rb_model_free(model: *mut RbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trees in the model, 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rb_model_tree_count(model: *const RbModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.trees.len())
}

/// Target action name, to be released with `rb_string_free`.
///
/// # Safety
/// `model` must be a live handle; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rb_model_target(model: *const RbModel, out: *mut *mut c_char) -> RbStatus {
    guard(|| {
        out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        *out = into_c_string(m.inner.target.clone())?;
        Ok(())
    })
}

/// Weighted rules of every tree (`tree < 0`) or of one tree.
///
/// # Safety
/// `model` must be a live handle; `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rb_model_rules(
    model: *const RbModel,
    tree: i64,
    unicode: bool,
    out: *mut *mut c_char,
) -> RbStatus {
    guard(|| {
        out_arg(out, "out")?;
        let m = &ref_arg(model, "model")?.inner;
        let only = match usize::try_from(tree) {
            Ok(t) if t >= m.trees.len() => {
                return Err(Failure::Status(
                    RbStatus::InvalidData,
                    format!("tree {t} out of range; model has {} trees", m.trees.len()),
                ))
            }
            Ok(t) => Some(t),
            Err(_) => None,
        };
        let style = if unicode { RuleStyle::Unicode } else { RuleStyle::Ascii };
        *out = into_c_string(RuleSet::from_model(m).render(&m.schema, style, only)?)?;
        Ok(())
    })
}

/// Loads a facts file using the model's schema.
///
/// # Safety
/// `model` must be a live handle, `path` a valid C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rb_facts_load(
    model: *const RbModel,
    path: *const c_char,
    out: *mut *mut RbFactStore,
) -> RbStatus {
    guard(|| {
        out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        let inner = load_store(str_arg(path, "path")?.as_ref(), &m.inner.schema)?;
        *out = Box::into_raw(Box::new(RbFactStore { inner }));
        Ok(())
    })
}

/// Parses facts text using the model's schema.
///
/// # Safety
/// `model` must be a live handle, `text` a valid C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rb_facts_parse(
    model: *const RbModel,
    text: *const c_char,
    out: *mut *mut RbFactStore,
) -> RbStatus {
    guard(|| {
        out_arg(out, "out")?;
        let schema = &ref_arg(model, "model")?.inner.schema;
        let inner = store_from_facts(parse_facts(str_arg(text, "text")?, schema)?, schema)?;
        *out = Box::into_raw(Box::new(RbFactStore { inner }));
        Ok(())
    })
}

/// # Safety
/// `facts` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rb_facts_free(facts: *mut RbFactStore) {
    if !facts.is_null() {
        drop(Box::from_raw(facts));
    }
}

/// Probability of the model's action for `subject` at hour `time`.
///
/// # Safety
/// Handles must be live, `subject` a valid C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rb_predict(
    model: *const RbModel,
    facts: *const RbFactStore,
    subject: *const c_char,
    time: u32,
    out: *mut f64,
) -> RbStatus {
    guard(|| {
        out_arg(out, "out")?;
        let m = ref_arg(model, "model")?;
        let f = ref_arg(facts, "facts")?;
        *out = m.inner.predict(&f.inner, str_arg(subject, "subject")?, time)?;
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn rb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
