//! C ABI for the cascade toolkit: opaque handles, integer error codes, and a
//! JSON-config entry point mirroring the CLI.
//!
//! Error codes: 0 success, 2 validation/format error, 3 numerical failure,
//! 4 null pointer or invalid handle/UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use cascade_core::analysis::c_star;
use cascade_core::config::RunConfig;
use cascade_core::oracle::fp_survival;
use cascade_core::particle::{simulate, SimulationResult};
use cascade_core::Error;

pub const CASCADE_OK: i32 = 0;
pub const CASCADE_ERR_VALIDATION: i32 = 2;
pub const CASCADE_ERR_NUMERICS: i32 = 3;
pub const CASCADE_ERR_NULL: i32 = 4;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_of(e: &Error) -> i32 {
    e.exit_code()
}

/// Opaque handle to a completed simulation.
pub struct CascadeSimulation {
    inner: SimulationResult,
}

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cascade_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last error raised on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cascade_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Computes the certification constant c*(sigma) and its minimizer.
#[no_mangle]
pub extern "C" fn cascade_c_star(sigma: f64, out_c_star: *mut f64, out_m_star: *mut f64) -> i32 {
    if out_c_star.is_null() || out_m_star.is_null() {
        set_error("null output pointer");
        return CASCADE_ERR_NULL;
    }
    match c_star(sigma) {
        Ok((c, m)) => {
            unsafe {
                *out_c_star = c;
                *out_m_star = m;
            }
            CASCADE_OK
        }
        Err(e) => {
            set_error(&e.to_string());
            code_of(&e)
        }
    }
}

/// First-passage survival probability of drifted Brownian motion started at
/// y >= 0 over horizon t.
#[no_mangle]
pub extern "C" fn cascade_fp_survival(
    y: f64,
    t: f64,
    alpha: f64,
    sigma: f64,
    out: *mut f64,
) -> i32 {
    if out.is_null() {
        set_error("null output pointer");
        return CASCADE_ERR_NULL;
    }
    if !(y >= 0.0 && t > 0.0 && sigma > 0.0) {
        set_error("need y >= 0, t > 0, sigma > 0");
        return CASCADE_ERR_VALIDATION;
    }
    unsafe { *out = fp_survival(y, t, alpha, sigma) };
    CASCADE_OK
}

/// Runs the particle simulation described by a JSON run configuration (the
/// same schema as the CLI). On success stores a handle in `out`; release it
/// with `cascade_simulation_free`.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn cascade_simulate_json(
    config_json: *const c_char,
    out: *mut *mut CascadeSimulation,
) -> i32 {
    if config_json.is_null() || out.is_null() {
        set_error("null pointer argument");
        return CASCADE_ERR_NULL;
    }
    let text = match CStr::from_ptr(config_json).to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("config is not valid UTF-8");
            return CASCADE_ERR_NULL;
        }
    };
    let run = || -> cascade_core::Result<SimulationResult> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        let grid = cfg.sim_grid()?;
        simulate(
            &cfg.model,
            &cfg.initial,
            cfg.simulation.n_banks,
            &grid,
            cfg.effective_seed()?,
            &cfg.sim_options(),
        )
    };
    match run() {
        Ok(sim) => {
            *out = Box::into_raw(Box::new(CascadeSimulation { inner: sim }));
            CASCADE_OK
        }
        Err(e) => {
            set_error(&e.to_string());
            code_of(&e)
        }
    }
}

/// Number of recorded time nodes.
///
/// # Safety
/// `sim` must be a live handle from `cascade_simulate_json`.
#[no_mangle]
pub unsafe extern "C" fn cascade_simulation_len(sim: *const CascadeSimulation) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).inner.times.len()
}

/// Copies the time, survivor-fraction and cumulative-loss series into
/// caller-provided buffers of length `len` (from `cascade_simulation_len`).
/// Any buffer pointer may be NULL to skip that series.
///
/// # Safety
/// `sim` must be a live handle; non-NULL buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cascade_simulation_series(
    sim: *const CascadeSimulation,
    times: *mut f64,
    survivor_fraction: *mut f64,
    cum_log_loss: *mut f64,
    len: usize,
) -> i32 {
    if sim.is_null() {
        set_error("null simulation handle");
        return CASCADE_ERR_NULL;
    }
    let inner = &(*sim).inner;
    if len != inner.times.len() {
        set_error("buffer length mismatch");
        return CASCADE_ERR_VALIDATION;
    }
    if !times.is_null() {
        ptr::copy_nonoverlapping(inner.times.as_ptr(), times, len);
    }
    if !survivor_fraction.is_null() {
        ptr::copy_nonoverlapping(inner.survivor_fraction.as_ptr(), survivor_fraction, len);
    }
    if !cum_log_loss.is_null() {
        ptr::copy_nonoverlapping(inner.cum_log_loss.as_ptr(), cum_log_loss, len);
    }
    CASCADE_OK
}

/// Number of cascade events in the run.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cascade_simulation_n_events(sim: *const CascadeSimulation) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).inner.cascade_events.len()
}

/// Time at which every bank had defaulted. Returns 1 and writes the time if
/// it happened, 0 otherwise (negative codes are errors).
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cascade_simulation_tau0(
    sim: *const CascadeSimulation,
    out: *mut f64,
) -> i32 {
    if sim.is_null() || out.is_null() {
        set_error("null pointer argument");
        return -CASCADE_ERR_NULL;
    }
    match (*sim).inner.tau0 {
        Some(t) => {
            *out = t;
            1
        }
        None => 0,
    }
}

/// Writes the simulation to a run directory (same layout as the CLI).
///
/// # Safety
/// `sim` must be a live handle; `dir` a valid NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn cascade_simulation_save(
    sim: *const CascadeSimulation,
    dir: *const c_char,
) -> i32 {
    if sim.is_null() || dir.is_null() {
        set_error("null pointer argument");
        return CASCADE_ERR_NULL;
    }
    let path = match CStr::from_ptr(dir).to_str() {
        Ok(p) => p,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return CASCADE_ERR_NULL;
        }
    };
    match cascade_core::io::save_simulation(Path::new(path), &(*sim).inner) {
        Ok(()) => CASCADE_OK,
        Err(e) => {
            set_error(&e.to_string());
            code_of(&e)
        }
    }
}

/// Releases a simulation handle. NULL is a no-op.
///
/// # Safety
/// `sim` must be NULL or a handle not previously freed.
#[no_mangle]
pub unsafe extern "C" fn cascade_simulation_free(sim: *mut CascadeSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
