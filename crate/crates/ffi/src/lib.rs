//! C ABI for the distobs toolkit: opaque scenario handles, status
//! codes, and JSON-in/JSON-out entry points so other languages can
//! drive design, certification and simulation.
//!
//! Ownership rules: every `*mut DistobsScenario` returned by a
//! constructor must be released with `distobs_scenario_free`; every
//! `char*` written to an out-parameter must be released with
//! `distobs_string_free`. `distobs_last_error_message` stays owned by
//! the library and is only valid on the calling thread until the next
//! failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use distobs::io::commands::{reproduce_to_dir, simulate_scenario};
use distobs::io::config::{build_scenario, BuiltScenario, ScenarioConfig};
use distobs::io::presets::preset_config;
use distobs::io::report::design_report;
use distobs::Error;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistobsStatus {
    Ok = 0,
    /// Some other failure (I/O, numerics).
    Internal = 1,
    /// Malformed configuration or arguments.
    Config = 2,
    /// A standing assumption of the design does not hold.
    Assumption = 3,
    /// A reproduce-run acceptance check failed.
    Acceptance = 4,
    /// A required pointer argument was null.
    NullArgument = 5,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 6,
}

/// Opaque handle: a validated scenario (system, designs, schedule,
/// certification) ready to simulate.
pub struct DistobsScenario {
    built: BuiltScenario,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> DistobsStatus {
    match err.exit_code() {
        2 => DistobsStatus::Config,
        3 => DistobsStatus::Assumption,
        4 => DistobsStatus::Acceptance,
        _ => DistobsStatus::Internal,
    }
}

fn fail(err: &Error) -> DistobsStatus {
    set_error(&err.to_string());
    status_of(err)
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, DistobsStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(DistobsStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        DistobsStatus::InvalidUtf8
    })
}

fn give_string(text: String, out: *mut *mut c_char) -> DistobsStatus {
    match CString::new(text) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            DistobsStatus::Ok
        }
        Err(_) => {
            set_error("output contained an interior NUL byte");
            DistobsStatus::Internal
        }
    }
}

fn build_from_config(config: ScenarioConfig, out: *mut *mut DistobsScenario) -> DistobsStatus {
    match build_scenario(&config) {
        Ok(built) => {
            let handle = Box::new(DistobsScenario { built });
            unsafe { *out = Box::into_raw(handle) };
            DistobsStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Parse and validate a scenario configuration (JSON text).
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to writable
/// pointer storage.
#[no_mangle]
pub unsafe extern "C" fn distobs_scenario_from_json(
    json: *const c_char,
    out: *mut *mut DistobsScenario,
) -> DistobsStatus {
    if out.is_null() {
        set_error("null output pointer");
        return DistobsStatus::NullArgument;
    }
    *out = ptr::null_mut();
    let text = match read_str(json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    match ScenarioConfig::from_json(text) {
        Ok(config) => build_from_config(config, out),
        Err(e) => fail(&e),
    }
}

/// Load one of the bundled scenarios: "paper-example", "paper-noise"
/// or "resilience4".
///
/// # Safety
/// `name` must point to a NUL-terminated string and `out` to writable
/// pointer storage.
#[no_mangle]
pub unsafe extern "C" fn distobs_scenario_preset(
    name: *const c_char,
    out: *mut *mut DistobsScenario,
) -> DistobsStatus {
    if out.is_null() {
        set_error("null output pointer");
        return DistobsStatus::NullArgument;
    }
    *out = ptr::null_mut();
    let name = match read_str(name) {
        Ok(t) => t,
        Err(s) => return s,
    };
    match preset_config(name) {
        Ok(config) => build_from_config(config, out),
        Err(e) => fail(&e),
    }
}

/// Release a scenario handle. Passing null is a no-op.
///
/// # Safety
/// `scenario` must be a pointer returned by a constructor of this
/// library that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn distobs_scenario_free(scenario: *mut DistobsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Serialize the design/certification report of a scenario as JSON.
///
/// # Safety
/// `scenario` must be a live handle; `out_json` must point to writable
/// pointer storage. The returned string must be freed with
/// `distobs_string_free`.
#[no_mangle]
pub unsafe extern "C" fn distobs_design_report_json(
    scenario: *const DistobsScenario,
    out_json: *mut *mut c_char,
) -> DistobsStatus {
    if scenario.is_null() || out_json.is_null() {
        set_error("null argument");
        return DistobsStatus::NullArgument;
    }
    let handle = &*scenario;
    let report = match design_report(&handle.built) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    match serde_json::to_string_pretty(&report) {
        Ok(text) => give_string(text, out_json),
        Err(e) => {
            set_error(&e.to_string());
            DistobsStatus::Internal
        }
    }
}

/// Simulate the scenario; the fixed-key run summary is returned as
/// JSON. When `csv_path` is non-null the sampled trace is also written
/// there.
///
/// # Safety
/// `scenario` must be a live handle; `csv_path` may be null or a
/// NUL-terminated path; `out_summary_json` must point to writable
/// pointer storage. The returned string must be freed with
/// `distobs_string_free`.
#[no_mangle]
pub unsafe extern "C" fn distobs_simulate_json(
    scenario: *const DistobsScenario,
    csv_path: *const c_char,
    out_summary_json: *mut *mut c_char,
) -> DistobsStatus {
    if scenario.is_null() || out_summary_json.is_null() {
        set_error("null argument");
        return DistobsStatus::NullArgument;
    }
    let handle = &*scenario;
    let csv = if csv_path.is_null() {
        None
    } else {
        match read_str(csv_path) {
            Ok(p) => Some(p.to_string()),
            Err(s) => return s,
        }
    };
    let summary = match simulate_scenario(&handle.built, csv.as_deref().map(Path::new)) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    match serde_json::to_string(&summary) {
        Ok(text) => give_string(text, out_summary_json),
        Err(e) => {
            set_error(&e.to_string());
            DistobsStatus::Internal
        }
    }
}

/// Run a bundled scenario end to end, writing its artifacts into
/// `outdir`, and return the acceptance summary as JSON. Returns
/// `Acceptance` (4) when a check fails; the summary is still written.
///
/// # Safety
/// `preset` and `outdir` must be NUL-terminated strings;
/// `out_summary_json` must point to writable pointer storage. The
/// returned string must be freed with `distobs_string_free`.
#[no_mangle]
pub unsafe extern "C" fn distobs_reproduce_json(
    preset: *const c_char,
    outdir: *const c_char,
    out_summary_json: *mut *mut c_char,
) -> DistobsStatus {
    if out_summary_json.is_null() {
        set_error("null output pointer");
        return DistobsStatus::NullArgument;
    }
    let preset = match read_str(preset) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let outdir = match read_str(outdir) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let summary = match reproduce_to_dir(preset, Path::new(outdir)) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let text = match serde_json::to_string_pretty(&summary) {
        Ok(t) => t,
        Err(e) => {
            set_error(&e.to_string());
            return DistobsStatus::Internal;
        }
    };
    let status = give_string(text, out_summary_json);
    if status == DistobsStatus::Ok && !summary.pass {
        set_error("one or more acceptance checks failed");
        DistobsStatus::Acceptance
    } else {
        status
    }
}

/// Release a string returned by this library. Passing null is a no-op.
///
/// # Safety
/// `s` must be a pointer returned by this library that has not been
/// freed yet.
#[no_mangle]
pub unsafe extern "C" fn distobs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last error raised on this thread. Owned by the
/// library; valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn distobs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn distobs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
