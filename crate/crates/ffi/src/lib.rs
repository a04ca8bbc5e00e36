//! C ABI over the `fnlse` solvers.
//!
//! Every fallible call returns an [`FnlseStatus`]; on failure the message is
//! available from [`fnlse_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fnlse::config::{Mode, RunConfig};
use fnlse::io::{FrameKind, Snapshot};
use fnlse::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnlseStatus {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Numerical = 3,
    Nonexistence = 4,
    Io = 5,
    Panic = 6,
}

/// Run mode requested when parsing a configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnlseMode {
    /// Take the mode from the document's `mode` key, defaulting to ground.
    FromDocument = 0,
    Ground = 1,
    Dynamics = 2,
    Sweep = 3,
}

/// Parsed and validated run configuration.
pub struct FnlseConfig {
    inner: RunConfig,
}

/// Field snapshot read from disk.
pub struct FnlseSnapshot {
    inner: Snapshot,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FnlseGroundSummary {
    pub steps: usize,
    pub converged: bool,
    pub total_energy: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub rotation: f64,
    pub interaction: f64,
    pub nonlocal: f64,
    pub mass: f64,
    pub max_abs: f64,
    pub lz: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FnlseDynamicsSummary {
    pub t_final: f64,
    pub steps: usize,
    pub diagnostics_rows: usize,
    pub snapshots: usize,
    pub max_mass_drift: f64,
    pub max_energy_drift: f64,
    /// NaN when the law residual was not computed.
    pub max_law_residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(FnlseStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => FnlseStatus::Io,
            _ => match e.exit_code() {
                fnlse::error::EXIT_NONEXISTENCE => FnlseStatus::Nonexistence,
                fnlse::error::EXIT_NUMERICAL => FnlseStatus::Numerical,
                _ => FnlseStatus::Config,
            },
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(FnlseStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FnlseStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FnlseStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FnlseStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(&format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(&format!("{name} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(&format!("{name} is null")))
}

fn mode(m: FnlseMode) -> Option<Mode> {
    match m {
        FnlseMode::FromDocument => None,
        FnlseMode::Ground => Some(Mode::Ground),
        FnlseMode::Dynamics => Some(Mode::Dynamics),
        FnlseMode::Sweep => Some(Mode::Sweep),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fnlse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn fnlse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a TOML configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string, `mode_hint` one of the [`FnlseMode`]
/// values, and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fnlse_config_parse(text: *const c_char, mode_hint: FnlseMode, out: *mut *mut FnlseConfig) -> FnlseStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let text = str_arg(text, "text")?;
        let inner = fnlse::config::parse_config_as(text, mode(mode_hint))?;
        *out = Box::into_raw(Box::new(FnlseConfig { inner }));
        Ok(())
    })
}

/// Reads and parses a TOML configuration file.
///
/// # Safety
/// Same contract as [`fnlse_config_parse`], with `path` naming the file.
#[no_mangle]
pub unsafe extern "C" fn fnlse_config_load(path: *const c_char, mode_hint: FnlseMode, out: *mut *mut FnlseConfig) -> FnlseStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let path = str_arg(path, "path")?;
        let inner = fnlse::config::load_config(Path::new(path), mode(mode_hint))?;
        *out = Box::into_raw(Box::new(FnlseConfig { inner }));
        Ok(())
    })
}

/// Serializes a configuration to TOML; free the result with [`fnlse_string_free`].
///
/// # Safety
/// `config` must come from [`fnlse_config_parse`] or [`fnlse_config_load`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fnlse_config_to_toml(config: *const FnlseConfig, out: *mut *mut c_char) -> FnlseStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let text = handle(config, "config")?.inner.to_toml()?;
        *out = CString::new(text).map_err(|_| invalid("TOML contains NUL"))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `config` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fnlse_config_free(config: *mut FnlseConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fnlse_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Computes a ground state, writing artifacts under `out_dir`.
///
/// Artifacts are written even when the run ends in [`FnlseStatus::Nonexistence`].
///
/// # Safety
/// `config` must be a live handle, `out_dir` a NUL-terminated string, and
/// `summary` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn fnlse_ground_run(
    config: *const FnlseConfig,
    out_dir: *const c_char,
    summary: *mut FnlseGroundSummary,
) -> FnlseStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.inner;
        let dir = str_arg(out_dir, "out_dir")?;
        let s = fnlse::runner::run_ground(cfg, Path::new(dir))?;
        if let Some(out) = summary.as_mut() {
            *out = FnlseGroundSummary {
                steps: s.steps,
                converged: s.converged,
                total_energy: s.total_energy,
                kinetic: s.energy.kinetic,
                potential: s.energy.potential,
                rotation: s.energy.rotation,
                interaction: s.energy.interaction,
                nonlocal: s.energy.nonlocal,
                mass: s.mass,
                max_abs: s.max_abs,
                lz: s.lz,
            };
        }
        Ok(())
    })
}

/// Propagates the configured initial field, writing artifacts under `out_dir`.
///
/// # Safety
/// Same contract as [`fnlse_ground_run`].
#[no_mangle]
pub unsafe extern "C" fn fnlse_dynamics_run(
    config: *const FnlseConfig,
    out_dir: *const c_char,
    summary: *mut FnlseDynamicsSummary,
) -> FnlseStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.inner;
        let dir = str_arg(out_dir, "out_dir")?;
        let s = fnlse::runner::run_dynamics(cfg, Path::new(dir))?;
        if let Some(out) = summary.as_mut() {
            *out = FnlseDynamicsSummary {
                t_final: s.t_final,
                steps: s.steps,
                diagnostics_rows: s.diagnostics_rows,
                snapshots: s.snapshots,
                max_mass_drift: s.max_mass_drift,
                max_energy_drift: s.max_energy_drift,
                max_law_residual: s.max_law_residual.unwrap_or(f64::NAN),
            };
        }
        Ok(())
    })
}

/// Reads a snapshot file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fnlse_snapshot_read(path: *const c_char, out: *mut *mut FnlseSnapshot) -> FnlseStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let path = str_arg(path, "path")?;
        let inner = Snapshot::read(Path::new(path))?;
        *out = Box::into_raw(Box::new(FnlseSnapshot { inner }));
        Ok(())
    })
}

/// Spatial dimension, or 0 for a NULL handle.
///
/// # Safety
/// `snap` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fnlse_snapshot_dim(snap: *const FnlseSnapshot) -> usize {
    snap.as_ref().map_or(0, |s| s.inner.points.len())
}

/// Number of complex values, or 0 for a NULL handle.
///
/// # Safety
/// `snap` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fnlse_snapshot_len(snap: *const FnlseSnapshot) -> usize {
    snap.as_ref().map_or(0, |s| s.inner.values.len())
}

/// Simulation time, rotating-frame flag and grid description.
///
/// `points`, `lo` and `hi` must each hold `dim` entries; any of them may be NULL.
///
/// # Safety
/// `snap` must be a live handle; non-NULL outputs must be writable for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn fnlse_snapshot_info(
    snap: *const FnlseSnapshot,
    t: *mut f64,
    rotating: *mut bool,
    points: *mut usize,
    lo: *mut f64,
    hi: *mut f64,
) -> FnlseStatus {
    guard(|| {
        let s = &handle(snap, "snap")?.inner;
        let d = s.points.len();
        if let Some(t) = t.as_mut() {
            *t = s.t;
        }
        if let Some(r) = rotating.as_mut() {
            *r = s.frame == FrameKind::Rotating;
        }
        if !points.is_null() {
            ptr::copy_nonoverlapping(s.points.as_ptr(), points, d);
        }
        if !lo.is_null() {
            ptr::copy_nonoverlapping(s.lo.as_ptr(), lo, d);
        }
        if !hi.is_null() {
            ptr::copy_nonoverlapping(s.hi.as_ptr(), hi, d);
        }
        Ok(())
    })
}

/// Copies the field as interleaved (re, im) pairs in row-major order.
///
/// `len` is the capacity of `buf` in doubles and must be at least twice [`fnlse_snapshot_len`].
///
/// # Safety
/// `snap` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fnlse_snapshot_values(snap: *const FnlseSnapshot, buf: *mut f64, len: usize) -> FnlseStatus {
    guard(|| {
        let s = &handle(snap, "snap")?.inner;
        if buf.is_null() {
            return Err(invalid("buf is null"));
        }
        let need = 2 * s.values.len();
        if len < need {
            return Err(invalid(&format!("buffer holds {len} doubles, need {need}")));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for (pair, v) in out.chunks_exact_mut(2).zip(&s.values) {
            pair[0] = v.re;
            pair[1] = v.im;
        }
        Ok(())
    })
}

/// Discrete mass of the stored field.
///
/// # Safety
/// `snap` must be a live handle and `mass` writable.
#[no_mangle]
pub unsafe extern "C" fn fnlse_snapshot_mass(snap: *const FnlseSnapshot, mass: *mut f64) -> FnlseStatus {
    guard(|| {
        let s = &handle(snap, "snap")?.inner;
        let out = mass.as_mut().ok_or_else(|| invalid("mass is null"))?;
        *out = fnlse::observables::mass(&s.field()?);
        Ok(())
    })
}

/// # Safety
/// `snap` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fnlse_snapshot_free(snap: *mut FnlseSnapshot) {
    if !snap.is_null() {
        drop(Box::from_raw(snap));
    }
}
