//! C ABI for the simulator, so other languages can parse scenarios, run
//! them, and read back tables, traces and metrics.
//!
//! Handles are opaque; every function returns an [`LbStatus`] code and
//! writes results through out-pointers. Strings returned through
//! `char **out` are NUL-terminated, owned by the caller, and must be
//! released with `lbsim_string_free`. On any non-OK status,
//! `lbsim_last_error_message` returns a description of the failure.
//!
//! The generated header lands in `include/lbsim.h` at build time.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::ptr;

use libc::c_char;

use lbsim::render::{render_metrics, render_review_matrix, render_trace};
use lbsim::scenario::parse_scenario;
use lbsim::simulator::{run, RunOptions, RunOutput, SimError, Strategy};

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: impl Into<Vec<u8>>) {
    let message = CString::new(message).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
}

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Scenario text failed to parse or validate.
    ParseFailed = 3,
    /// The run aborted (audit violation or internal error).
    RunFailed = 4,
    /// An enum argument was out of range.
    InvalidArgument = 5,
}

/// Placement strategy selector for [`lbsim_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbStrategy {
    /// Two-tier capability routing with rebalancing.
    TwoTier = 0,
    /// Global round-robin baseline.
    RoundRobin = 1,
    /// Seeded uniform-random baseline.
    Random = 2,
}

/// An opaque parsed scenario.
pub struct LbScenario {
    inner: lbsim::Scenario,
}

/// An opaque finished run: final state, metrics and trace.
pub struct LbRun {
    output: RunOutput,
}

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lbsim_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Returns the message for the most recent error on this thread. The
/// pointer is valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lbsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parses scenario text into a handle.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lbsim_scenario_parse(
    text: *const c_char,
    out: *mut *mut LbScenario,
) -> LbStatus {
    if text.is_null() || out.is_null() {
        set_last_error("null argument");
        return LbStatus::NullArgument;
    }
    *out = ptr::null_mut();
    let text = match CStr::from_ptr(text).to_str() {
        Ok(text) => text,
        Err(_) => {
            set_last_error("scenario text is not valid UTF-8");
            return LbStatus::InvalidUtf8;
        }
    };
    match parse_scenario(text) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(LbScenario { inner }));
            LbStatus::Ok
        }
        Err(errors) => {
            let joined = errors
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("\n");
            set_last_error(joined);
            LbStatus::ParseFailed
        }
    }
}

/// Releases a scenario handle. NULL is a no-op.
///
/// # Safety
/// `scenario` must have come from `lbsim_scenario_parse` and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lbsim_scenario_free(scenario: *mut LbScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs a scenario. `override_seed` replaces the scenario's seed when
/// `has_seed` is true. `audit` enables the per-tick invariant check.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lbsim_run(
    scenario: *const LbScenario,
    strategy: LbStrategy,
    has_seed: bool,
    override_seed: u64,
    audit: bool,
    out: *mut *mut LbRun,
) -> LbStatus {
    if scenario.is_null() || out.is_null() {
        set_last_error("null argument");
        return LbStatus::NullArgument;
    }
    *out = ptr::null_mut();
    let strategy = match strategy {
        LbStrategy::TwoTier => Strategy::TwoTier,
        LbStrategy::RoundRobin => Strategy::RoundRobin,
        LbStrategy::Random => Strategy::Random,
    };
    let options = RunOptions {
        strategy,
        seed: has_seed.then_some(override_seed),
        audit,
    };
    match run((*scenario).inner.clone(), options) {
        Ok(output) => {
            *out = Box::into_raw(Box::new(LbRun { output }));
            LbStatus::Ok
        }
        Err(SimError::Validation(errors)) => {
            let joined = errors
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("\n");
            set_last_error(joined);
            LbStatus::ParseFailed
        }
        Err(e) => {
            set_last_error(e.to_string());
            LbStatus::RunFailed
        }
    }
}

/// Releases a run handle. NULL is a no-op.
///
/// # Safety
/// `run` must have come from `lbsim_run` and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lbsim_run_free(run: *mut LbRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

unsafe fn string_out(out: *mut *mut c_char, text: String) -> LbStatus {
    if out.is_null() {
        set_last_error("null argument");
        return LbStatus::NullArgument;
    }
    match CString::new(text) {
        Ok(text) => {
            *out = text.into_raw();
            LbStatus::Ok
        }
        Err(_) => {
            set_last_error("rendered text contains an interior NUL byte");
            *out = ptr::null_mut();
            LbStatus::RunFailed
        }
    }
}

/// Renders the final per-cluster review-matrix tables.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer; free the result
/// with `lbsim_string_free`.
#[no_mangle]
pub unsafe extern "C" fn lbsim_run_tables(run: *const LbRun, out: *mut *mut c_char) -> LbStatus {
    if run.is_null() {
        set_last_error("null argument");
        return LbStatus::NullArgument;
    }
    string_out(out, render_review_matrix(&(*run).output.state))
}

/// Renders the run's trace, one event per line.
///
/// # Safety
/// As for `lbsim_run_tables`.
#[no_mangle]
pub unsafe extern "C" fn lbsim_run_trace(run: *const LbRun, out: *mut *mut c_char) -> LbStatus {
    if run.is_null() {
        set_last_error("null argument");
        return LbStatus::NullArgument;
    }
    string_out(out, render_trace(&(*run).output.trace))
}

/// Renders the run's metrics summary.
///
/// # Safety
/// As for `lbsim_run_tables`.
#[no_mangle]
pub unsafe extern "C" fn lbsim_run_metrics(run: *const LbRun, out: *mut *mut c_char) -> LbStatus {
    if run.is_null() {
        set_last_error("null argument");
        return LbStatus::NullArgument;
    }
    string_out(out, render_metrics(&(*run).output.metrics))
}

/// Number of jobs still in the pending queue at the end of the run.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lbsim_run_pending_count(
    run: *const LbRun,
    out: *mut u64,
) -> LbStatus {
    if run.is_null() || out.is_null() {
        set_last_error("null argument");
        return LbStatus::NullArgument;
    }
    *out = (*run).output.metrics.pending_end;
    LbStatus::Ok
}

/// Number of job relocations (balancing moves plus migrations).
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lbsim_run_move_count(run: *const LbRun, out: *mut u64) -> LbStatus {
    if run.is_null() || out.is_null() {
        set_last_error("null argument");
        return LbStatus::NullArgument;
    }
    *out = (*run).output.metrics.moves;
    LbStatus::Ok
}

/// Servers over-committed (UNEVEN) at the end of the run.
///
/// # Safety
/// `run` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lbsim_run_uneven_count(run: *const LbRun, out: *mut u64) -> LbStatus {
    if run.is_null() || out.is_null() {
        set_last_error("null argument");
        return LbStatus::NullArgument;
    }
    let (_, uneven, _) = (*run).output.state.status_counts();
    *out = uneven as u64;
    LbStatus::Ok
}

/// Releases a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `text` must have been returned through a `char **out` parameter of this
/// library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lbsim_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}
