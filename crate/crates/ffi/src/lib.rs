//! C ABI over `dfsim`.
//!
//! Conventions:
//! - every fallible function returns a [`DfsimStatus`] and writes results
//!   through out-pointers, which are left untouched on failure;
//! - on failure, [`dfsim_last_error`] returns a message for the calling thread;
//! - experiments are opaque [`DfsimExperiment`] handles, released with
//!   [`dfsim_experiment_free`];
//! - strings returned as `char *` are owned by the caller and released with
//!   [`dfsim_string_free`].
//!
//! Panics never cross the boundary; they are reported as `DFSIM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dfsim::cli::{has_errors, run, ExperimentConfig, Severity};
use dfsim::cumulant::{cp_fidelity, cp_zeta, ts_fidelity, ts_zetas};
use dfsim::montecarlo::{average_superpropagator, SimConfig};
use dfsim::noise::OuParams;
use dfsim::sequences::{build_cp, build_ts};
use dfsim::spinsys::{CouplingForm, SpinSystem};
use dfsim::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DfsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Config could not be parsed or failed validation.
    Config = 4,
    Io = 5,
    /// Numerical failure such as a non-Hermitian or singular operator.
    Numeric = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DfsimSequence {
    Cp = 0,
    Ts = 1,
}

/// Opaque experiment configuration.
pub struct DfsimExperiment {
    config: ExperimentConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> DfsimStatus {
    match err {
        Error::InvalidParameter { .. } | Error::InvalidIndex { .. } | Error::Dimension(_) => {
            DfsimStatus::InvalidArgument
        }
        Error::Config(_) | Error::Table { .. } => DfsimStatus::Config,
        Error::Io(_) => DfsimStatus::Io,
        _ => DfsimStatus::Numeric,
    }
}

/// Runs `f`, converting errors and panics into a status plus last-error text.
fn guard(f: impl FnOnce() -> Result<(), (DfsimStatus, String)>) -> DfsimStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DfsimStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DfsimStatus::Panic
        }
    }
}

fn lib<T>(r: dfsim::Result<T>) -> Result<T, (DfsimStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), (DfsimStatus, String)> {
    if p.is_null() {
        Err((DfsimStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (DfsimStatus, String)> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DfsimStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next `dfsim_*` call on the same thread.
#[no_mangle]
pub extern "C" fn dfsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dfsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from a `dfsim_*` function and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dfsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Attenuation coefficient of a CP train with `2 n` pulses spaced `tau`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dfsim_cp_zeta(strength: f64, tau_c: f64, n: u32, tau: f64, out: *mut f64) -> DfsimStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lib(cp_zeta(strength, tau_c, n, tau))?;
        Ok(())
    })
}

/// Entanglement fidelity of the CP train for a given attenuation coefficient.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dfsim_cp_fidelity(zeta: f64, n: u32, tau: f64, out: *mut f64) -> DfsimStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = cp_fidelity(zeta, n, tau);
        Ok(())
    })
}

/// Attenuation coefficients of the time-suspension train.
///
/// # Safety
/// `zeta1` and `zeta2` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dfsim_ts_zetas(
    strength: f64,
    tau_c: f64,
    n: u32,
    tau: f64,
    zeta1: *mut f64,
    zeta2: *mut f64,
) -> DfsimStatus {
    guard(|| {
        non_null(zeta1, "zeta1")?;
        non_null(zeta2, "zeta2")?;
        let (a, b) = lib(ts_zetas(strength, tau_c, n, tau))?;
        *zeta1 = a;
        *zeta2 = b;
        Ok(())
    })
}

/// Entanglement fidelity of the time-suspension train.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dfsim_ts_fidelity(zeta1: f64, zeta2: f64, n: u32, tau: f64, out: *mut f64) -> DfsimStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ts_fidelity(zeta1, zeta2, n, tau);
        Ok(())
    })
}

/// Monte Carlo fidelity of a two-spin decoupling train (secular coupling)
/// with `n_cycles` cycles filling `total_time` seconds. `delta_omega` is in
/// rad/s, `j_hz` in Hz. Deterministic in `seed` for any thread count.
///
/// # Safety
/// `fidelity` and `stderr_out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dfsim_dd_fidelity_mc(
    sequence: DfsimSequence,
    n_cycles: u32,
    total_time: f64,
    strength: f64,
    tau_c: f64,
    delta_omega: f64,
    j_hz: f64,
    n_traj: usize,
    seed: u64,
    fidelity: *mut f64,
    stderr_out: *mut f64,
) -> DfsimStatus {
    guard(|| {
        non_null(fidelity, "fidelity")?;
        non_null(stderr_out, "stderr_out")?;
        if n_cycles == 0 || !(total_time > 0.0 && total_time.is_finite()) {
            return Err((DfsimStatus::InvalidArgument, "n_cycles and total_time must be positive".into()));
        }
        if !(delta_omega.is_finite() && j_hz.is_finite()) {
            return Err((DfsimStatus::InvalidArgument, "delta_omega and j_hz must be finite".into()));
        }
        let seq = match sequence {
            DfsimSequence::Cp => lib(build_cp(n_cycles, total_time / (2.0 * n_cycles as f64), false))?,
            DfsimSequence::Ts => lib(build_ts(n_cycles, total_time / (4.0 * n_cycles as f64)))?,
        };
        let cfg = SimConfig::new(
            SpinSystem::two_spin(delta_omega, j_hz),
            CouplingForm::Weak,
            seq,
            lib(OuParams::new(strength, tau_c))?,
            n_traj,
            seed,
        );
        let r = lib(average_superpropagator(&cfg))?;
        *fidelity = r.fidelity;
        *stderr_out = r.fidelity_stderr;
        Ok(())
    })
}

/// Parses a TOML experiment config. On success `*out` owns a new handle.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dfsim_experiment_from_toml(toml: *const c_char, out: *mut *mut DfsimExperiment) -> DfsimStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = read_str(toml, "toml")?;
        let config = lib(ExperimentConfig::from_toml_str(text))?;
        *out = Box::into_raw(Box::new(DfsimExperiment { config }));
        Ok(())
    })
}

/// Reads and parses a TOML experiment config file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dfsim_experiment_load(path: *const c_char, out: *mut *mut DfsimExperiment) -> DfsimStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = read_str(path, "path")?;
        let config = lib(ExperimentConfig::load(Path::new(path)))?;
        *out = Box::into_raw(Box::new(DfsimExperiment { config }));
        Ok(())
    })
}

/// Overrides the master seed.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dfsim_experiment_set_seed(exp: *mut DfsimExperiment, seed: u64) -> DfsimStatus {
    guard(|| {
        non_null(exp, "exp")?;
        (*exp).config.seed = Some(seed);
        Ok(())
    })
}

/// Validates without running. Counts are written to the out-pointers; when
/// `report` is non-NULL it receives one violation per line (free with
/// `dfsim_string_free`). Violations are data, so this returns OK for an
/// invalid config.
///
/// # Safety
/// `exp` must be a live handle; out-pointers must be valid for writes or NULL
/// where noted.
#[no_mangle]
pub unsafe extern "C" fn dfsim_experiment_validate(
    exp: *const DfsimExperiment,
    n_errors: *mut usize,
    n_warnings: *mut usize,
    report: *mut *mut c_char,
) -> DfsimStatus {
    guard(|| {
        non_null(exp, "exp")?;
        non_null(n_errors, "n_errors")?;
        non_null(n_warnings, "n_warnings")?;
        let v = (*exp).config.validate();
        *n_errors = v.iter().filter(|x| x.severity == Severity::Error).count();
        *n_warnings = v.len() - *n_errors;
        if !report.is_null() {
            let text: Vec<String> = v.iter().map(ToString::to_string).collect();
            *report = to_c_string(text.join("\n"));
        }
        Ok(())
    })
}

/// Runs the experiment, writing its CSV and `summary.toml` into `out_dir`.
/// `rows` (may be NULL) receives the number of CSV rows; `csv_path` (may be
/// NULL) receives the CSV path, to be freed with `dfsim_string_free`.
///
/// # Safety
/// `exp` must be a live handle and `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dfsim_experiment_run(
    exp: *const DfsimExperiment,
    out_dir: *const c_char,
    rows: *mut usize,
    csv_path: *mut *mut c_char,
) -> DfsimStatus {
    guard(|| {
        non_null(exp, "exp")?;
        let dir = read_str(out_dir, "out_dir")?;
        let cfg = &(*exp).config;
        let v = cfg.validate();
        if has_errors(&v) {
            let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err((DfsimStatus::Config, msgs.join("; ")));
        }
        let summary = lib(run(cfg, Path::new(dir)))?;
        if !rows.is_null() {
            *rows = summary.rows;
        }
        if !csv_path.is_null() {
            *csv_path = to_c_string(summary.csv.display().to_string());
        }
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `exp` must come from `dfsim_experiment_*` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dfsim_experiment_free(exp: *mut DfsimExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}
