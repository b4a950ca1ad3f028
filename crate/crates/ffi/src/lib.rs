//! C interface to the positioning library.
//!
//! The surface is deliberately small: an opaque experiment handle carrying
//! the full configuration, integer status codes, one flat struct for trial
//! summaries, and file-based output for sweeps (the same CSV/JSON contract
//! the CLI writes).
//!
//! # Conventions
//!
//! * Every fallible call returns [`risloc_status`]; `RISLOC_OK` is zero.
//!   On any other status, [`risloc_last_error_message`] returns a
//!   human-readable explanation for the current thread, valid until the
//!   next failing call on that thread.
//! * Handles come from `risloc_experiment_desk`, `risloc_experiment_paper`,
//!   or `risloc_experiment_load`, and must be released exactly once with
//!   `risloc_experiment_free`. A handle may be used from any thread, but
//!   not from two threads at the same time.
//! * Strings returned as `char*` (only `risloc_experiment_config_text`)
//!   are owned by the caller and released with `risloc_string_free`.
//! * Disabled estimation methods surface as NaN fields, matching the CSV
//!   contract.
//!
//! The matching C header is `include/risloc.h`.

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use risloc_core::geometry::Position2D;
use risloc_core::harness::{
    position_bound_at, run_sweep, run_trial, write_sweep_outputs, ExperimentConfig,
};
use risloc_core::Error;

/// Version of this C ABI. Bumped on any breaking change to the exported
/// symbols, structs, or semantics.
pub const ABI_VERSION: u32 = 1;

// ─── Status codes and error reporting ───────────────────────────────────────

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum risloc_status {
    /// Success.
    RISLOC_OK = 0,
    /// Invalid configuration (unknown key, malformed value, bad dimension).
    RISLOC_CONFIG_ERROR = 1,
    /// Numerical or model failure while running.
    RISLOC_RUNTIME_ERROR = 2,
    /// Filesystem failure.
    RISLOC_IO_ERROR = 3,
    /// A required pointer argument was null.
    RISLOC_NULL_ARGUMENT = 4,
    /// A string argument was not valid UTF-8.
    RISLOC_INVALID_UTF8 = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn fail(status: risloc_status, msg: String) -> risloc_status {
    set_last_error(msg);
    status
}

fn fail_null(what: &str) -> risloc_status {
    fail(
        risloc_status::RISLOC_NULL_ARGUMENT,
        format!("{what} must not be null"),
    )
}

fn status_of(e: &Error) -> risloc_status {
    match e.exit_code() {
        1 => risloc_status::RISLOC_CONFIG_ERROR,
        3 => risloc_status::RISLOC_IO_ERROR,
        _ => risloc_status::RISLOC_RUNTIME_ERROR,
    }
}

fn fail_with(e: Error) -> risloc_status {
    let status = status_of(&e);
    set_last_error(e.to_string());
    status
}

/// Message for the most recent failing call on this thread, or null when
/// no call has failed yet.
///
/// The pointer stays valid until the next failing call on the same thread;
/// do not free it.
#[no_mangle]
pub extern "C" fn risloc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// ABI version of this library (see `ABI_VERSION`).
#[no_mangle]
pub extern "C" fn risloc_abi_version() -> u32 {
    ABI_VERSION
}

// ─── Experiment handle ──────────────────────────────────────────────────────

/// Opaque experiment configuration handle.
pub struct risloc_experiment {
    inner: ExperimentConfig,
}

/// Reads a required UTF-8 string argument.
///
/// # Safety
/// `p` must be null or a valid NUL-terminated C string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, risloc_status> {
    if p.is_null() {
        return Err(fail_null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        fail(
            risloc_status::RISLOC_INVALID_UTF8,
            format!("{what} is not valid UTF-8"),
        )
    })
}

/// Borrows the configuration behind a handle.
///
/// # Safety
/// `h` must be null or a pointer from `risloc_experiment_*`.
unsafe fn handle_arg<'a>(
    h: *const risloc_experiment,
) -> Result<&'a ExperimentConfig, risloc_status> {
    h.as_ref().map(|h| &h.inner).ok_or_else(|| fail_null("experiment handle"))
}

/// New experiment with the small-dimension defaults (8-element arrays,
/// 8 subcarriers, 8 snapshots). Free with `risloc_experiment_free`.
#[no_mangle]
pub extern "C" fn risloc_experiment_desk() -> *mut risloc_experiment {
    Box::into_raw(Box::new(risloc_experiment {
        inner: ExperimentConfig::desk(),
    }))
}

/// New experiment with the full-scale defaults (32-element arrays,
/// 20 subcarriers, 32 snapshots, long sweeps). Free with
/// `risloc_experiment_free`.
#[no_mangle]
pub extern "C" fn risloc_experiment_paper() -> *mut risloc_experiment {
    Box::into_raw(Box::new(risloc_experiment {
        inner: ExperimentConfig::paper(),
    }))
}

/// Loads a `key = value` configuration file over the small-dimension
/// defaults and writes the new handle to `out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated C string; `out` must be a valid
/// pointer to a `risloc_experiment*`.
#[no_mangle]
pub unsafe extern "C" fn risloc_experiment_load(
    path: *const c_char,
    out: *mut *mut risloc_experiment,
) -> risloc_status {
    if out.is_null() {
        return fail_null("output handle pointer");
    }
    let path = match str_arg(path, "config path") {
        Ok(p) => p,
        Err(s) => return s,
    };
    match ExperimentConfig::from_file(Path::new(path)) {
        Ok(cfg) => {
            *out = Box::into_raw(Box::new(risloc_experiment { inner: cfg }));
            risloc_status::RISLOC_OK
        }
        Err(e) => fail_with(e),
    }
}

/// Releases a handle. Null is a no-op.
///
/// # Safety
/// `h` must be null or a pointer previously returned by a
/// `risloc_experiment_*` constructor, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn risloc_experiment_free(h: *mut risloc_experiment) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Sets the master seed driving every per-trial RNG stream.
///
/// # Safety
/// `h` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn risloc_experiment_set_seed(
    h: *mut risloc_experiment,
    seed: u64,
) -> risloc_status {
    match h.as_mut() {
        Some(h) => {
            h.inner.master_seed = seed;
            risloc_status::RISLOC_OK
        }
        None => fail_null("experiment handle"),
    }
}

/// Sets the number of Monte-Carlo trials per SNR point.
///
/// # Safety
/// `h` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn risloc_experiment_set_trials(
    h: *mut risloc_experiment,
    trials: u64,
) -> risloc_status {
    match h.as_mut() {
        Some(h) => {
            h.inner.trials = trials as usize;
            risloc_status::RISLOC_OK
        }
        None => fail_null("experiment handle"),
    }
}

/// Sets one configuration key to a value, with the same keys, syntax, and
/// validation as the configuration file (e.g. key `"snr_db_list"`, value
/// `"-10,0,10"`).
///
/// # Safety
/// `h` must be a valid handle; `key` and `value` must be valid
/// NUL-terminated C strings.
#[no_mangle]
pub unsafe extern "C" fn risloc_experiment_set(
    h: *mut risloc_experiment,
    key: *const c_char,
    value: *const c_char,
) -> risloc_status {
    let handle = match h.as_mut() {
        Some(h) => h,
        None => return fail_null("experiment handle"),
    };
    let key = match str_arg(key, "config key") {
        Ok(k) => k,
        Err(s) => return s,
    };
    let value = match str_arg(value, "config value") {
        Ok(v) => v,
        Err(s) => return s,
    };
    match handle.inner.apply_config_text(&format!("{key} = {value}")) {
        Ok(()) => risloc_status::RISLOC_OK,
        Err(e) => fail_with(e),
    }
}

/// Canonical `key = value` text of the handle's full configuration, in the
/// format `risloc_experiment_load` accepts. Returns null when `h` is null.
/// Release the string with `risloc_string_free`.
///
/// # Safety
/// `h` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn risloc_experiment_config_text(
    h: *const risloc_experiment,
) -> *mut c_char {
    match handle_arg(h) {
        Ok(cfg) => match CString::new(cfg.to_config_string()) {
            Ok(c) => c.into_raw(),
            Err(_) => std::ptr::null_mut(),
        },
        Err(_) => std::ptr::null_mut(),
    }
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or a pointer returned by a `risloc_*` function that
/// documents this deallocator, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn risloc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ─── Running ────────────────────────────────────────────────────────────────

/// Flat summary of one Monte-Carlo trial.
///
/// Position errors are meters; a disabled method (see the `methods`
/// configuration key) reports NaN in its error and rebuild fields. When
/// `failed` is nonzero the trial's estimation errors are NaN and only the
/// identifying fields are meaningful.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct risloc_trial_summary {
    /// Signal-to-noise ratio of the trial, dB.
    pub snr_db: f64,
    /// Trial index within its SNR cell.
    pub trial_index: u64,
    /// Derived per-trial RNG seed.
    pub seed: u64,
    /// True target x, meters.
    pub target_x: f64,
    /// True target y, meters.
    pub target_y: f64,
    /// Position error of the grid-based coarse stage, meters.
    pub pos_err_coarse_m: f64,
    /// Position error of the two-loop refined estimate, meters.
    pub pos_err_proposed_m: f64,
    /// Position error of the descent baseline estimate, meters.
    pub pos_err_cdgd_m: f64,
    /// Position error bound at the true parameters, meters.
    pub peb_m: f64,
    /// Exact atom rebuilds spent by the refined estimate.
    pub rebuilds_proposed: f64,
    /// Exact atom rebuilds spent by the baseline.
    pub rebuilds_cdgd: f64,
    /// 1 when the trial failed (see the per-trial CSV for the reason).
    pub failed: i32,
}

/// Runs one seeded trial at the given SNR and writes its summary to `out`.
///
/// The trial is fully determined by the handle's configuration plus
/// `(snr_db, trial_index)`; rerunning it reproduces the summary exactly.
///
/// # Safety
/// `h` must be a valid handle; `out` must point to writable memory for one
/// `risloc_trial_summary`.
#[no_mangle]
pub unsafe extern "C" fn risloc_run_trial(
    h: *const risloc_experiment,
    snr_db: f64,
    trial_index: u64,
    out: *mut risloc_trial_summary,
) -> risloc_status {
    let cfg = match handle_arg(h) {
        Ok(c) => c,
        Err(s) => return s,
    };
    if out.is_null() {
        return fail_null("trial summary pointer");
    }
    let r = run_trial(cfg, snr_db, trial_index as usize).record;
    *out = risloc_trial_summary {
        snr_db: r.snr_db,
        trial_index: r.trial_index as u64,
        seed: r.seed,
        target_x: r.target.x,
        target_y: r.target.y,
        pos_err_coarse_m: r.pos_err_coarse_m,
        pos_err_proposed_m: r.pos_err_proposed_m,
        pos_err_cdgd_m: r.pos_err_cdgd_m,
        peb_m: r.peb_m,
        rebuilds_proposed: r.rebuilds_proposed,
        rebuilds_cdgd: r.rebuilds_cdgd,
        failed: r.failed as i32,
    };
    risloc_status::RISLOC_OK
}

/// Runs the configured SNR x trials sweep and writes `aggregate.csv`,
/// `trials.csv`, and `report.json` into `out_dir` (created if missing).
///
/// Identical configurations and seeds produce byte-identical CSV files.
///
/// # Safety
/// `h` must be a valid handle; `out_dir` must be a valid NUL-terminated C
/// string.
#[no_mangle]
pub unsafe extern "C" fn risloc_run_sweep(
    h: *const risloc_experiment,
    out_dir: *const c_char,
) -> risloc_status {
    let cfg = match handle_arg(h) {
        Ok(c) => c,
        Err(s) => return s,
    };
    let dir = match str_arg(out_dir, "output directory") {
        Ok(d) => d,
        Err(s) => return s,
    };
    let outcome = run_sweep(cfg);
    match write_sweep_outputs(cfg, &outcome, Path::new(dir)) {
        Ok(()) => risloc_status::RISLOC_OK,
        Err(e) => fail_with(e),
    }
}

/// Evaluates the position error bound at target `(x, y)` under the
/// handle's scene, probing seed, and gain magnitudes, with noise
/// calibrated to `snr_db`. Writes the bound (meters) to `out_peb_m`; an
/// uninformative geometry yields +infinity.
///
/// # Safety
/// `h` must be a valid handle; `out_peb_m` must point to a writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn risloc_position_bound(
    h: *const risloc_experiment,
    snr_db: f64,
    x: f64,
    y: f64,
    out_peb_m: *mut f64,
) -> risloc_status {
    let cfg = match handle_arg(h) {
        Ok(c) => c,
        Err(s) => return s,
    };
    if out_peb_m.is_null() {
        return fail_null("bound output pointer");
    }
    match position_bound_at(cfg, snr_db, Position2D::new(x, y)) {
        Ok(b) => {
            *out_peb_m = b.peb_m;
            risloc_status::RISLOC_OK
        }
        Err(e) => fail_with(e),
    }
}

// ─── Tests ──────────────────────────────────────────────────────────────────
