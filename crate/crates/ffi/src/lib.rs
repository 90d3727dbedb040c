//! C ABI for the boundary-probe pipeline.
//!
//! All handles are opaque; every fallible call returns a [`BpStatus`] and
//! records a message retrievable with [`bp_last_error`]. Strings returned
//! by this library are heap-allocated and must be released with
//! [`bp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

use boundary_probe::harness::ValidationReport;
use boundary_probe::pipeline::{run_all, run_analyze, run_report, run_train, PipelineConfig};
use boundary_probe::{builtin_systems, Error};

/// Result of every fallible FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IoError = 3,
    RuntimeError = 4,
}

/// Opaque pipeline configuration handle.
pub struct BpConfig(PipelineConfig);

/// Opaque validation-report handle.
pub struct BpReport(ValidationReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> BpStatus {
    match err {
        Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::Parse { .. } => {
            BpStatus::InvalidArgument
        }
        Error::Io { .. } => BpStatus::IoError,
        _ => BpStatus::RuntimeError,
    }
}

fn fail(err: Error) -> BpStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn to_c_string(s: String) -> *mut c_char {
    // embedded NUL can't cross the boundary; replace rather than abort
    CString::new(s.replace('\0', "?"))
        .expect("NUL stripped")
        .into_raw()
}

unsafe fn c_str<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

/// Message from the most recent failed call on this thread, or NULL.
/// The caller owns the returned string (release with `bp_string_free`).
#[no_mangle]
pub extern "C" fn bp_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(c) => c.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Releases a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must have been returned by a `bp_*` function and not freed before.
#[no_mangle]
pub unsafe extern "C" fn bp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Newline-separated names of the built-in systems.
#[no_mangle]
pub extern "C" fn bp_list_systems() -> *mut c_char {
    let names: Vec<String> = builtin_systems()
        .iter()
        .map(|s| s.name().to_string())
        .collect();
    to_c_string(names.join("\n"))
}

/// A configuration with the reference defaults. Never fails.
#[no_mangle]
pub extern "C" fn bp_config_new() -> *mut BpConfig {
    Box::into_raw(Box::new(BpConfig(PipelineConfig::default())))
}

/// Loads a configuration from a TOML file into `*out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_config_from_file(
    path: *const c_char,
    out: *mut *mut BpConfig,
) -> BpStatus {
    if out.is_null() {
        return BpStatus::NullPointer;
    }
    let Some(path) = c_str(path) else {
        set_error("path is NULL or not UTF-8".into());
        return BpStatus::NullPointer;
    };
    match PipelineConfig::from_file(&PathBuf::from(path)) {
        Ok(cfg) => {
            *out = Box::into_raw(Box::new(BpConfig(cfg)));
            BpStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Sets one configuration key. `value` is parsed as a TOML literal
/// (numbers, booleans, arrays); anything unparseable is taken as a string,
/// so `bp_config_set(cfg, "system", "system_2_combined")` works unquoted.
///
/// # Safety
/// All pointers must be valid; `cfg` must come from `bp_config_new` or
/// `bp_config_from_file`.
#[no_mangle]
pub unsafe extern "C" fn bp_config_set(
    cfg: *mut BpConfig,
    key: *const c_char,
    value: *const c_char,
) -> BpStatus {
    let Some(cfg) = cfg.as_mut() else {
        return BpStatus::NullPointer;
    };
    let (Some(key), Some(value)) = (c_str(key), c_str(value)) else {
        set_error("key/value is NULL or not UTF-8".into());
        return BpStatus::NullPointer;
    };
    let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .map(|mut t| t.remove("v").unwrap())
        .unwrap_or_else(|_| toml::Value::String(value.to_string()));

    let mut table = toml::Table::try_from(&cfg.0).expect("config serializes");
    table.insert(key.to_string(), parsed);
    match table.try_into::<PipelineConfig>() {
        Ok(updated) => {
            cfg.0 = updated;
            BpStatus::Ok
        }
        Err(e) => {
            set_error(format!("cannot set {key:?}: {e}"));
            BpStatus::InvalidArgument
        }
    }
}

/// The effective configuration rendered as TOML.
///
/// # Safety
/// `cfg` must be a valid configuration handle.
#[no_mangle]
pub unsafe extern "C" fn bp_config_to_toml(cfg: *const BpConfig) -> *mut c_char {
    match cfg.as_ref() {
        Some(cfg) => to_c_string(cfg.0.to_toml()),
        None => std::ptr::null_mut(),
    }
}

/// # Safety
/// `cfg` must come from this library and not be freed twice. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn bp_config_free(cfg: *mut BpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Trains the explorer and writes the checkpoint and metrics log.
///
/// # Safety
/// `cfg` must be a valid configuration handle.
#[no_mangle]
pub unsafe extern "C" fn bp_train(cfg: *const BpConfig) -> BpStatus {
    let Some(cfg) = cfg.as_ref() else {
        return BpStatus::NullPointer;
    };
    match run_train(&cfg.0) {
        Ok(_) => BpStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Collects counterfactuals and writes trajectories, rules, and cluster
/// plot data. Requires a prior `bp_train` with the same configuration.
///
/// # Safety
/// `cfg` must be a valid configuration handle.
#[no_mangle]
pub unsafe extern "C" fn bp_analyze(cfg: *const BpConfig) -> BpStatus {
    let Some(cfg) = cfg.as_ref() else {
        return BpStatus::NullPointer;
    };
    match run_analyze(&cfg.0) {
        Ok(_) => BpStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Validates the collected artifacts and stores a report handle in `*out`.
/// Whether validation passed is data on the report, not a status code.
///
/// # Safety
/// `cfg` must be a valid configuration handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_report(cfg: *const BpConfig, out: *mut *mut BpReport) -> BpStatus {
    let Some(cfg) = cfg.as_ref() else {
        return BpStatus::NullPointer;
    };
    if out.is_null() {
        return BpStatus::NullPointer;
    }
    match run_report(&cfg.0) {
        Ok(report) => {
            *out = Box::into_raw(Box::new(BpReport(report)));
            BpStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Full pipeline: train, analyze, report.
///
/// # Safety
/// `cfg` must be a valid configuration handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bp_run(cfg: *const BpConfig, out: *mut *mut BpReport) -> BpStatus {
    let Some(cfg) = cfg.as_ref() else {
        return BpStatus::NullPointer;
    };
    if out.is_null() {
        return BpStatus::NullPointer;
    }
    match run_all(&cfg.0) {
        Ok(report) => {
            *out = Box::into_raw(Box::new(BpReport(report)));
            BpStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// 1 when every ground-truth check passed (or none applied), else 0.
///
/// # Safety
/// `report` must be a valid report handle.
#[no_mangle]
pub unsafe extern "C" fn bp_report_passed(report: *const BpReport) -> i32 {
    match report.as_ref() {
        Some(r) => r.0.passed() as i32,
        None => 0,
    }
}

/// Number of counterfactual records behind the report.
///
/// # Safety
/// `report` must be a valid report handle.
#[no_mangle]
pub unsafe extern "C" fn bp_report_counterfactual_count(report: *const BpReport) -> u64 {
    match report.as_ref() {
        Some(r) => r.0.counterfactual_count as u64,
        None => 0,
    }
}

/// Human-readable report text, identical to the `report` subcommand's.
///
/// # Safety
/// `report` must be a valid report handle.
#[no_mangle]
pub unsafe extern "C" fn bp_report_render(report: *const BpReport) -> *mut c_char {
    match report.as_ref() {
        Some(r) => to_c_string(r.0.render()),
        None => std::ptr::null_mut(),
    }
}

/// # Safety
/// `report` must come from this library and not be freed twice. NULL is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn bp_report_free(report: *mut BpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
