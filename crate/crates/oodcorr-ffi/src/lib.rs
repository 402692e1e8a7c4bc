//! C ABI for the partial OOD correlation library.
//!
//! Conventions:
//! - Handles (`OodcorrRunSet`, `OodcorrResult`) are opaque pointers owned by
//!   this library; release them with the matching `_free` function.
//! - Every fallible function returns an `OodcorrStatus` code;
//!   [`oodcorr_last_error`] returns a message for the most recent failure on
//!   the calling thread.
//! - The companion header lives at `include/oodcorr.h` and is kept in sync
//!   by the `header_sync` test.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use oodcorr::export;
use oodcorr::ingest::{self, AlignPolicy};
use oodcorr::partial_corr::{self, CorrError, PartialCorrResult};
use oodcorr::regressors::{FitError, GamConfig, RegressorKind};
use oodcorr::synth;
use oodcorr::trace::{validate_runset, Corr, DatasetId, RunSet};

/// Status codes shared with the C header.
pub const OODCORR_OK: c_int = 0;
pub const OODCORR_ERR_USAGE: c_int = 1;
pub const OODCORR_ERR_INPUT: c_int = 2;
pub const OODCORR_ERR_NUMERIC: c_int = 3;
pub const OODCORR_ERR_NULL_ARGUMENT: c_int = 4;
pub const OODCORR_ERR_UTF8: c_int = 5;
pub const OODCORR_ERR_INDEX: c_int = 6;
pub const OODCORR_UNDEFINED: c_int = 7;
pub const OODCORR_ERR_IO: c_int = 8;
pub const OODCORR_ERR_PANIC: c_int = 9;

pub const OODCORR_REGRESSOR_LINEAR: c_int = 0;
pub const OODCORR_REGRESSOR_RIDGE: c_int = 1;
pub const OODCORR_REGRESSOR_GAM: c_int = 2;

pub const OODCORR_ALIGN_STRICT: c_int = 0;
pub const OODCORR_ALIGN_INTERSECT: c_int = 1;

/// Opaque runset handle.
pub struct OodcorrRunSet {
    inner: RunSet,
}

/// Opaque analysis-result handle.
pub struct OodcorrResult {
    inner: PartialCorrResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let sanitized = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn oodcorr_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Static library version string.
#[no_mangle]
pub extern "C" fn oodcorr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn fail(code: c_int, message: impl Into<String>) -> c_int {
    set_error(message);
    code
}

fn corr_error_status(e: &CorrError) -> c_int {
    match e {
        CorrError::Fit {
            source: FitError::SingularSystem | FitError::DegenerateX,
            ..
        } => OODCORR_ERR_NUMERIC,
        _ => OODCORR_ERR_INPUT,
    }
}

/// # Safety
/// `ptr` must be non-null and point to a NUL-terminated string.
unsafe fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, c_int> {
    if ptr.is_null() {
        return Err(fail(
            OODCORR_ERR_NULL_ARGUMENT,
            format!("{name} must not be NULL"),
        ));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(OODCORR_ERR_UTF8, format!("{name} is not valid UTF-8")))
}

fn path_arg(s: &str) -> PathBuf {
    Path::new(s).to_path_buf()
}

fn guarded(body: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => fail(OODCORR_ERR_PANIC, "internal panic; this is a bug"),
    }
}

fn load_runset(path: &str, in_domain: &str, align: c_int) -> Result<RunSet, c_int> {
    let policy = match align {
        OODCORR_ALIGN_STRICT => AlignPolicy::Strict,
        OODCORR_ALIGN_INTERSECT => AlignPolicy::Intersect,
        other => {
            return Err(fail(
                OODCORR_ERR_USAGE,
                format!("unknown align policy {other}"),
            ))
        }
    };
    let runset = ingest::parse_trace_csv(&path_arg(path), &DatasetId::new(in_domain))
        .map_err(|e| fail(OODCORR_ERR_INPUT, e.to_string()))?;
    let (runset, _dropped) = ingest::align_checkpoints(runset, policy)
        .map_err(|e| fail(OODCORR_ERR_INPUT, e.to_string()))?;
    let violations = validate_runset(&runset);
    if let Some(first) = violations.first() {
        return Err(fail(OODCORR_ERR_INPUT, format!("Violation: {first}")));
    }
    Ok(runset)
}

/// Parses a trace CSV and aligns checkpoints.
///
/// # Safety
/// `path` and `in_domain` must be NUL-terminated strings; `out` must point
/// to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn oodcorr_runset_parse_csv(
    path: *const c_char,
    in_domain: *const c_char,
    align: c_int,
    out: *mut *mut OodcorrRunSet,
) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail(OODCORR_ERR_NULL_ARGUMENT, "out must not be NULL");
        }
        let path = match utf8_arg(path, "path") {
            Ok(s) => s,
            Err(code) => return code,
        };
        let in_domain = match utf8_arg(in_domain, "in_domain") {
            Ok(s) => s,
            Err(code) => return code,
        };
        match load_runset(path, in_domain, align) {
            Ok(runset) => {
                *out = Box::into_raw(Box::new(OodcorrRunSet { inner: runset }));
                OODCORR_OK
            }
            Err(code) => code,
        }
    })
}

/// Number of traces (runs) in the set; 0 for a NULL handle.
///
/// # Safety
/// `handle` must be NULL or a pointer from `oodcorr_runset_parse_csv`.
#[no_mangle]
pub unsafe extern "C" fn oodcorr_runset_n_traces(handle: *const OodcorrRunSet) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).inner.traces.len()
}

/// Releases a runset handle. NULL is accepted.
///
/// # Safety
/// `handle` must be NULL or an owned pointer from `oodcorr_runset_parse_csv`,
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oodcorr_runset_free(handle: *mut OodcorrRunSet) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Computes partial correlations over the runset.
///
/// `regressor`: 0 linear, 1 ridge (`ridge_lambda`), 2 spline smoother
/// (`n_basis` basis functions, default GCV grid). `per_run` non-zero selects
/// the per-run Fisher-z variant.
///
/// # Safety
/// `handle` must be a live runset pointer; `out` must point to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn oodcorr_analyze(
    handle: *const OodcorrRunSet,
    regressor: c_int,
    ridge_lambda: c_double,
    n_basis: usize,
    per_run: c_int,
    out: *mut *mut OodcorrResult,
) -> c_int {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            return fail(OODCORR_ERR_NULL_ARGUMENT, "handle and out must not be NULL");
        }
        let kind = match regressor {
            OODCORR_REGRESSOR_LINEAR => RegressorKind::Linear,
            OODCORR_REGRESSOR_RIDGE => {
                if ridge_lambda <= 0.0 || !ridge_lambda.is_finite() {
                    return fail(
                        OODCORR_ERR_USAGE,
                        format!("NonPositiveLambda: ridge_lambda {ridge_lambda}"),
                    );
                }
                RegressorKind::Ridge {
                    lambda: ridge_lambda,
                }
            }
            OODCORR_REGRESSOR_GAM => {
                let cfg = GamConfig {
                    n_basis,
                    ..GamConfig::default()
                };
                if let Err(e) = cfg.validate() {
                    return fail(OODCORR_ERR_USAGE, e.to_string());
                }
                RegressorKind::Gam(cfg)
            }
            other => {
                return fail(OODCORR_ERR_USAGE, format!("unknown regressor {other}"));
            }
        };
        let runset = &(*handle).inner;
        let computed = if per_run != 0 {
            partial_corr::partial_corr_matrix_per_run(runset, &kind)
        } else {
            partial_corr::partial_corr_matrix(runset, &kind)
        };
        match computed {
            Ok(result) => {
                *out = Box::into_raw(Box::new(OodcorrResult { inner: result }));
                OODCORR_OK
            }
            Err(e) => fail(corr_error_status(&e), e.to_string()),
        }
    })
}

/// Number of OOD datasets in the result matrix; 0 for a NULL handle.
///
/// # Safety
/// `handle` must be NULL or a pointer from `oodcorr_analyze`.
#[no_mangle]
pub unsafe extern "C" fn oodcorr_result_n_datasets(handle: *const OodcorrResult) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).inner.matrix.len()
}

/// Copies dataset name `index` into `buf` (NUL-terminated, truncating) and
/// returns the full length including the terminator, or 0 on error.
///
/// # Safety
/// `handle` must be a live result pointer; `buf` must point to `len`
/// writable bytes (or be NULL with `len == 0` to query the length).
#[no_mangle]
pub unsafe extern "C" fn oodcorr_result_dataset_name(
    handle: *const OodcorrResult,
    index: usize,
    buf: *mut c_char,
    len: usize,
) -> usize {
    if handle.is_null() {
        set_error("handle must not be NULL");
        return 0;
    }
    let datasets = &(*handle).inner.matrix.datasets;
    let Some(name) = datasets.get(index) else {
        set_error(format!("dataset index {index} out of range"));
        return 0;
    };
    let bytes = name.name().as_bytes();
    if !buf.is_null() && len > 0 {
        let copy = bytes.len().min(len - 1);
        std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, copy);
        *buf.add(copy) = 0;
    }
    bytes.len() + 1
}

/// Reads matrix entry `(i, j)`. Returns `OODCORR_OK` and writes `*out` for a
/// defined entry, `OODCORR_UNDEFINED` otherwise.
///
/// # Safety
/// `handle` must be a live result pointer; `out` must point to a writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn oodcorr_result_entry(
    handle: *const OodcorrResult,
    i: usize,
    j: usize,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            return fail(OODCORR_ERR_NULL_ARGUMENT, "handle and out must not be NULL");
        }
        let matrix = &(*handle).inner.matrix;
        if i >= matrix.len() || j >= matrix.len() {
            return fail(
                OODCORR_ERR_INDEX,
                format!(
                    "entry ({i}, {j}) out of range for {} datasets",
                    matrix.len()
                ),
            );
        }
        match matrix.get(i, j) {
            Corr::Defined(v) => {
                *out = v;
                OODCORR_OK
            }
            Corr::Undefined => OODCORR_UNDEFINED,
        }
    })
}

/// Mean of the defined off-diagonal pairs. `OODCORR_UNDEFINED` when none are.
///
/// # Safety
/// `handle` must be a live result pointer; `out` must point to a writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn oodcorr_result_average(
    handle: *const OodcorrResult,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        if handle.is_null() || out.is_null() {
            return fail(OODCORR_ERR_NULL_ARGUMENT, "handle and out must not be NULL");
        }
        match partial_corr::average_partial_corr(&(*handle).inner) {
            Corr::Defined(v) => {
                *out = v;
                OODCORR_OK
            }
            Corr::Undefined => OODCORR_UNDEFINED,
        }
    })
}

unsafe fn write_rendering(
    handle: *const OodcorrResult,
    path: *const c_char,
    render: impl Fn(&PartialCorrResult) -> String,
) -> c_int {
    if handle.is_null() {
        return fail(OODCORR_ERR_NULL_ARGUMENT, "handle must not be NULL");
    }
    let path = match utf8_arg(path, "path") {
        Ok(s) => s,
        Err(code) => return code,
    };
    let content = render(&(*handle).inner);
    match std::fs::write(path_arg(path), content) {
        Ok(()) => OODCORR_OK,
        Err(e) => fail(OODCORR_ERR_IO, format!("Io: {path}: {e}")),
    }
}

/// Writes the full result as JSON.
///
/// # Safety
/// `handle` must be a live result pointer; `path` must be a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn oodcorr_result_write_json(
    handle: *const OodcorrResult,
    path: *const c_char,
) -> c_int {
    guarded(|| write_rendering(handle, path, export::dump_result_json))
}

/// Writes the pairwise correlation CSV.
///
/// # Safety
/// As for [`oodcorr_result_write_json`].
#[no_mangle]
pub unsafe extern "C" fn oodcorr_result_write_csv(
    handle: *const OodcorrResult,
    path: *const c_char,
) -> c_int {
    guarded(|| write_rendering(handle, path, export::dump_result_csv))
}

/// Writes the annotated heatmap SVG.
///
/// # Safety
/// As for [`oodcorr_result_write_json`].
#[no_mangle]
pub unsafe extern "C" fn oodcorr_result_render_heatmap_svg(
    handle: *const OodcorrResult,
    path: *const c_char,
) -> c_int {
    guarded(|| {
        write_rendering(handle, path, |r| {
            export::render_heatmap(r, &export::RenderSpec::default())
        })
    })
}

/// Writes the correlation graph in DOT format.
///
/// # Safety
/// As for [`oodcorr_result_write_json`].
#[no_mangle]
pub unsafe extern "C" fn oodcorr_result_render_graph_dot(
    handle: *const OodcorrResult,
    path: *const c_char,
) -> c_int {
    guarded(|| write_rendering(handle, path, export::render_graph))
}

/// Releases a result handle. NULL is accepted.
///
/// # Safety
/// `handle` must be NULL or an owned pointer from `oodcorr_analyze`, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn oodcorr_result_free(handle: *mut OodcorrResult) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Generates synthetic traces from a JSON config string and writes the trace
/// CSV plus its `.meta.json` sidecar.
///
/// # Safety
/// `config_json` and `output_path` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn oodcorr_simulate_to_csv(
    config_json: *const c_char,
    output_path: *const c_char,
) -> c_int {
    guarded(|| {
        let config = match utf8_arg(config_json, "config_json") {
            Ok(s) => s,
            Err(code) => return code,
        };
        let output = match utf8_arg(output_path, "output_path") {
            Ok(s) => s,
            Err(code) => return code,
        };
        let cfg: synth::SynthConfig = match serde_json_parse(config) {
            Ok(cfg) => cfg,
            Err(detail) => return fail(OODCORR_ERR_INPUT, format!("MalformedConfig: {detail}")),
        };
        if let Err(e) = cfg.validate() {
            return fail(OODCORR_ERR_INPUT, e.to_string());
        }
        let (runset, _clip) = synth::simulate_runset(&cfg);
        let out_path = path_arg(output);
        if let Err(e) = std::fs::write(&out_path, ingest::write_trace_csv(&runset)) {
            return fail(OODCORR_ERR_IO, format!("Io: {output}: {e}"));
        }
        let meta = ingest::Metadata {
            label: Some(runset.label.clone()),
            in_domain: Some(runset.in_domain.name().to_string()),
        };
        let sidecar = ingest::sidecar_path(&out_path);
        match std::fs::write(&sidecar, serde_json_pretty(&meta)) {
            Ok(()) => OODCORR_OK,
            Err(e) => fail(OODCORR_ERR_IO, format!("Io: {}: {e}", sidecar.display())),
        }
    })
}

fn serde_json_parse(content: &str) -> Result<synth::SynthConfig, String> {
    serde_json::from_str(content).map_err(|e| e.to_string())
}

fn serde_json_pretty(meta: &ingest::Metadata) -> String {
    let mut s = serde_json::to_string_pretty(meta).expect("metadata serializes");
    s.push('\n');
    s
}
