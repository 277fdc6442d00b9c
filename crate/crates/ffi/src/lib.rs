//! C ABI over the `chbc` solver.
//!
//! A problem is built from TOML text into an opaque `ChbcProblem` handle.
//! Every call returns a `ChbcStatus`; on failure the message is available
//! from `chbc_last_error_message` on the same thread.
//!
//! Controls and fields are passed as flat row-major arrays with one row per
//! time level: `levels * n_boundary` doubles for controls and
//! `levels * n_bulk` doubles for bulk fields.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chbc::config::{default_config, parse_config, ConfigError, RunConfig};
use chbc::state::ControlTrajectory;
use chbc::time::control_inner;
use chbc::{BoundaryField, Error, Problem};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChbcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigRejected = 3,
    SolverFailure = 4,
    InvalidInput = 5,
    Internal = 6,
}

/// Opaque problem handle.
pub struct ChbcProblem {
    config: RunConfig,
    problem: Problem,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: ChbcStatus, msg: impl Into<String>) -> ChbcStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> ChbcStatus {
    let status = if e.is_solver_failure() {
        ChbcStatus::SolverFailure
    } else {
        ChbcStatus::InvalidInput
    };
    fail(status, e.to_string())
}

fn guarded(f: impl FnOnce() -> ChbcStatus) -> ChbcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(ChbcStatus::Internal, "panic inside chbc"),
    }
}

fn build(config: RunConfig, out: *mut *mut ChbcProblem) -> ChbcStatus {
    match config.build_problem() {
        Ok(problem) => {
            let h = Box::new(ChbcProblem { config, problem });
            unsafe { *out = Box::into_raw(h) };
            ChbcStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Build a problem from a NUL-terminated TOML configuration.
///
/// # Safety
/// `toml` must be a valid C string and `out` a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn chbc_problem_from_toml(toml: *const c_char, out: *mut *mut ChbcProblem) -> ChbcStatus {
    guarded(|| {
        if toml.is_null() || out.is_null() {
            return fail(ChbcStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let text = match CStr::from_ptr(toml).to_str() {
            Ok(t) => t,
            Err(_) => return fail(ChbcStatus::InvalidUtf8, "configuration is not UTF-8"),
        };
        match parse_config(text, None) {
            Ok(cfg) => build(cfg, out),
            Err(e @ ConfigError::Invalid(_)) | Err(e @ ConfigError::Parse(_)) => {
                fail(ChbcStatus::ConfigRejected, e.to_string())
            }
            Err(e) => fail(ChbcStatus::InvalidInput, e.to_string()),
        }
    })
}

/// Build the bundled default problem.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn chbc_problem_default(out: *mut *mut ChbcProblem) -> ChbcStatus {
    guarded(|| {
        if out.is_null() {
            return fail(ChbcStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        build(default_config(), out)
    })
}

/// Release a handle. Passing NULL is a no-op.
///
/// # Safety
/// `problem` must come from a `chbc_problem_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn chbc_problem_free(problem: *mut ChbcProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of bulk nodes, boundary nodes and time levels.
///
/// # Safety
/// All pointers must be valid; `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chbc_problem_dims(
    problem: *const ChbcProblem,
    n_bulk: *mut usize,
    n_boundary: *mut usize,
    levels: *mut usize,
) -> ChbcStatus {
    if problem.is_null() || n_bulk.is_null() || n_boundary.is_null() || levels.is_null() {
        return fail(ChbcStatus::NullPointer, "null argument");
    }
    let p = &(*problem).problem;
    *n_bulk = p.ops.n_bulk();
    *n_boundary = p.ops.n_boundary();
    *levels = p.grid.levels();
    ChbcStatus::Ok
}

unsafe fn read_control(h: &ChbcProblem, control: *const f64) -> ControlTrajectory {
    let p = &h.problem;
    if control.is_null() {
        return h.config.initial_control(p);
    }
    let ng = p.ops.n_boundary();
    let flat = std::slice::from_raw_parts(control, ng * p.grid.levels());
    ControlTrajectory {
        grid: p.grid,
        u: flat.chunks_exact(ng).map(|c| BoundaryField(c.to_vec())).collect(),
    }
}

/// Copy the configured control (`levels * n_boundary` doubles) into `out`.
///
/// # Safety
/// `out` must hold `levels * n_boundary` doubles.
#[no_mangle]
pub unsafe extern "C" fn chbc_initial_control(problem: *const ChbcProblem, out: *mut f64) -> ChbcStatus {
    if problem.is_null() || out.is_null() {
        return fail(ChbcStatus::NullPointer, "null argument");
    }
    let u = read_control(&*problem, ptr::null());
    let mut k = 0;
    for level in &u.u {
        for v in level.iter() {
            *out.add(k) = *v;
            k += 1;
        }
    }
    ChbcStatus::Ok
}

/// Solve the state system. `control` may be NULL to use the configured control;
/// `mu_out` and `rho_out` may be NULL, otherwise they receive
/// `levels * n_bulk` doubles each.
///
/// # Safety
/// Buffers must have the documented lengths; `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chbc_simulate(
    problem: *const ChbcProblem,
    control: *const f64,
    mu_out: *mut f64,
    rho_out: *mut f64,
) -> ChbcStatus {
    guarded(|| {
        if problem.is_null() {
            return fail(ChbcStatus::NullPointer, "null handle");
        }
        let h = &*problem;
        let u = read_control(h, control);
        match h.problem.simulate(&u) {
            Ok(st) => {
                let n = h.problem.ops.n_bulk();
                for (k, (mu, rho)) in st.mu.iter().zip(&st.rho).enumerate() {
                    if !mu_out.is_null() {
                        ptr::copy_nonoverlapping(mu.as_ptr(), mu_out.add(k * n), n);
                    }
                    if !rho_out.is_null() {
                        ptr::copy_nonoverlapping(rho.as_ptr(), rho_out.add(k * n), n);
                    }
                }
                ChbcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Evaluate the reduced cost at `control` (NULL for the configured control).
///
/// # Safety
/// `cost_out` must be valid; `control`, when not NULL, must hold `levels * n_boundary` doubles.
#[no_mangle]
pub unsafe extern "C" fn chbc_cost(problem: *const ChbcProblem, control: *const f64, cost_out: *mut f64) -> ChbcStatus {
    guarded(|| {
        if problem.is_null() || cost_out.is_null() {
            return fail(ChbcStatus::NullPointer, "null argument");
        }
        let h = &*problem;
        match h.problem.evaluate(&read_control(h, control)) {
            Ok(ev) => {
                *cost_out = ev.cost.total;
                ChbcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Cost and its `L2(Sigma)` gradient `q_G + beta_6 u`, written to
/// `grad_out` (`levels * n_boundary` doubles).
///
/// # Safety
/// Buffers must have the documented lengths; `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chbc_gradient(
    problem: *const ChbcProblem,
    control: *const f64,
    cost_out: *mut f64,
    grad_out: *mut f64,
) -> ChbcStatus {
    guarded(|| {
        if problem.is_null() || cost_out.is_null() || grad_out.is_null() {
            return fail(ChbcStatus::NullPointer, "null argument");
        }
        let h = &*problem;
        match h.problem.gradient(&read_control(h, control)) {
            Ok(ge) => {
                *cost_out = ge.cost.total;
                let ng = h.problem.ops.n_boundary();
                for (k, level) in ge.gradient.u.iter().enumerate() {
                    ptr::copy_nonoverlapping(level.as_ptr(), grad_out.add(k * ng), ng);
                }
                ChbcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// `L2(Sigma)` inner product of two controls with the solver's quadrature.
///
/// # Safety
/// `a` and `b` must hold `levels * n_boundary` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn chbc_control_inner(
    problem: *const ChbcProblem,
    a: *const f64,
    b: *const f64,
    out: *mut f64,
) -> ChbcStatus {
    if problem.is_null() || a.is_null() || b.is_null() || out.is_null() {
        return fail(ChbcStatus::NullPointer, "null argument");
    }
    let h = &*problem;
    let ua = read_control(h, a);
    let ub = read_control(h, b);
    *out = control_inner(&h.problem.ops, &h.problem.grid, &ua.u, &ub.u);
    ChbcStatus::Ok
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn chbc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
