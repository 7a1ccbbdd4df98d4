//! C ABI over a trained run directory: load, predict token labels (direct or
//! with per-sentence adaptation), score prediction files.
//!
//! Every function returns a [`MetanerStatus`]. On failure the message is
//! available from [`metaner_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::OnceLock;

use metaner::adapt::{adapt_and_predict, direct_predict, SourcePool};
use metaner::autodiff::ParamStore;
use metaner::corpus::Sentence;
use metaner::evaluation::score_prediction_file;
use metaner::pipeline::{load_run, read_run_config, Workspace};
use metaner::retrieval::RetrievalIndex;
use metaner::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetanerStatus {
    Ok = 0,
    /// Bad configuration or arguments.
    Config = 1,
    /// Unreadable or malformed files.
    Data = 2,
    /// Non-finite values during computation.
    Numerical = 3,
    NullPointer = 4,
    InvalidUtf8 = 5,
    /// Caller buffer too small; the required size is reported.
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetanerMode {
    Direct = 0,
    Adapt = 1,
}

/// Overall phrase-level score.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetanerScore {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Opaque handle to a loaded run.
pub struct MetanerModel {
    ws: Workspace,
    params: ParamStore,
    index: OnceLock<Result<RetrievalIndex, String>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: MetanerStatus, message: impl Into<String>) -> MetanerStatus {
    set_error(message.into());
    status
}

fn from_error(e: Error) -> MetanerStatus {
    let status = match e.exit_code() {
        2 => MetanerStatus::Data,
        3 => MetanerStatus::Numerical,
        _ => MetanerStatus::Config,
    };
    fail(status, e.to_string())
}

fn guarded(body: impl FnOnce() -> MetanerStatus) -> MetanerStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(MetanerStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, MetanerStatus> {
    if s.is_null() {
        return Err(fail(MetanerStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(MetanerStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn metaner_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads the run directory written by `metaner meta-train`.
///
/// # Safety
/// `run_dir` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn metaner_model_load(run_dir: *const c_char, out: *mut *mut MetanerModel) -> MetanerStatus {
    guarded(|| {
        if out.is_null() {
            return fail(MetanerStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let dir = match read_str(run_dir, "run_dir") {
            Ok(d) => Path::new(d),
            Err(s) => return s,
        };
        let loaded = read_run_config(dir).and_then(|mut cfg| {
            cfg.output = None;
            load_run(dir, &cfg)
        });
        match loaded {
            Ok((ws, params)) => {
                *out = Box::into_raw(Box::new(MetanerModel {
                    ws,
                    params,
                    index: OnceLock::new(),
                }));
                MetanerStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`metaner_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn metaner_model_free(model: *mut MetanerModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of labels; label ids run from 0 to this count minus one.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn metaner_model_label_count(model: *const MetanerModel, out: *mut usize) -> MetanerStatus {
    if model.is_null() || out.is_null() {
        return fail(MetanerStatus::NullPointer, "model or out is null");
    }
    *out = (*model).ws.labels.len();
    MetanerStatus::Ok
}

/// Copies the NUL-terminated name of label `id` into `buf`. `required`, if
/// not null, receives the needed size including the terminator.
///
/// # Safety
/// `model` must be a live handle; `buf` must hold `buf_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn metaner_model_label_name(
    model: *const MetanerModel,
    id: usize,
    buf: *mut c_char,
    buf_len: usize,
    required: *mut usize,
) -> MetanerStatus {
    if model.is_null() {
        return fail(MetanerStatus::NullPointer, "model is null");
    }
    let labels = &(*model).ws.labels;
    if id >= labels.len() {
        return fail(MetanerStatus::Config, format!("label id {id} out of range"));
    }
    let name = labels.name(id).as_bytes();
    if !required.is_null() {
        *required = name.len() + 1;
    }
    if buf.is_null() || buf_len < name.len() + 1 {
        return fail(MetanerStatus::BufferTooSmall, "label buffer too small");
    }
    ptr::copy_nonoverlapping(name.as_ptr(), buf.cast::<u8>(), name.len());
    *buf.add(name.len()) = 0;
    MetanerStatus::Ok
}

/// Tags one tokenized sentence, writing one label id per token to
/// `out_labels`. `seed` keys the dropout of the adaptation step.
///
/// # Safety
/// `tokens` must point to `n_tokens` NUL-terminated strings and
/// `out_labels` to `n_tokens` writable slots.
#[no_mangle]
pub unsafe extern "C" fn metaner_model_predict(
    model: *const MetanerModel,
    tokens: *const *const c_char,
    n_tokens: usize,
    mode: MetanerMode,
    seed: u64,
    out_labels: *mut usize,
) -> MetanerStatus {
    guarded(|| {
        if model.is_null() || out_labels.is_null() || (tokens.is_null() && n_tokens > 0) {
            return fail(MetanerStatus::NullPointer, "model, tokens or out_labels is null");
        }
        if n_tokens == 0 {
            return fail(MetanerStatus::Config, "sentence has no tokens");
        }
        let model = &*model;
        let mut words = Vec::with_capacity(n_tokens);
        for i in 0..n_tokens {
            match read_str(*tokens.add(i), "token") {
                Ok(w) => words.push(w.to_string()),
                Err(s) => return s,
            }
        }
        let sentence = Sentence::new(0, words, vec!["O".to_string(); n_tokens]);
        let encoded = match model.ws.encode(&[sentence]) {
            Ok(mut e) => e.remove(0),
            Err(e) => return from_error(e),
        };
        let ws = &model.ws;
        let labels = match mode {
            MetanerMode::Direct => direct_predict(&ws.tagger, &model.params, &encoded),
            MetanerMode::Adapt => {
                let index = model
                    .index
                    .get_or_init(|| RetrievalIndex::build(&ws.tagger, &model.params, &ws.source).map_err(|e| e.to_string()));
                let index = match index {
                    Ok(i) => i,
                    Err(msg) => return fail(MetanerStatus::Numerical, msg.clone()),
                };
                let cfg = ws.config.seeded(seed).adapt;
                let pool = SourcePool::new(&ws.source);
                adapt_and_predict(&ws.tagger, &model.params, &encoded, &pool, index, &cfg).map(|a| a.labels)
            }
        };
        match labels {
            Ok(l) => {
                ptr::copy_nonoverlapping(l.as_ptr(), out_labels, n_tokens);
                MetanerStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Scores a file whose last two columns are gold and predicted tags.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn metaner_score_prediction_file(path: *const c_char, out: *mut MetanerScore) -> MetanerStatus {
    guarded(|| {
        if out.is_null() {
            return fail(MetanerStatus::NullPointer, "out is null");
        }
        let path = match read_str(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let file = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) => return fail(MetanerStatus::Data, format!("{path}: {e}")),
        };
        match score_prediction_file(std::io::BufReader::new(file)) {
            Ok(r) => {
                let o = r.overall;
                *out = MetanerScore {
                    gold: o.gold,
                    predicted: o.predicted,
                    correct: o.correct,
                    precision: o.precision,
                    recall: o.recall,
                    f1: o.f1,
                };
                MetanerStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}
