//! C ABI for the fraclop solver.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! or returned through out-pointers and released with the matching `*_free`.
//! Every fallible call returns a [`FraclopStatus`]; the message of the last
//! failure on the calling thread is available from [`fraclop_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fraclop::control::{solve_control, ControlProblem, ControlSolution, DesignKind, PrecondKind};
use fraclop::tensor_formats::{load_canon, save_canon, CanonicalTensor};
use fraclop::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FraclopStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    /// Breakdown, loss of definiteness, NaN or an unreachable tolerance.
    NumericalFailure = 4,
    Io = 5,
    /// The solver did not reach the stopping tolerance within `max_iter`.
    NotConverged = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FraclopDesign {
    Box = 0,
    H = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FraclopPrecond {
    Laplace = 0,
    Aniso = 1,
    Direct = 2,
}

/// Opaque control problem.
pub struct FraclopProblem(ControlProblem);

/// Opaque solve result with its recovered state.
pub struct FraclopSolution {
    sol: ControlSolution,
    state: CanonicalTensor,
}

/// Opaque canonical tensor.
pub struct FraclopTensor(CanonicalTensor);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &Error) -> FraclopStatus {
    match e {
        Error::Shape(_) => FraclopStatus::ShapeMismatch,
        Error::InvalidInput(_) | Error::Parse { .. } | Error::DenseGuard { .. } => FraclopStatus::InvalidArgument,
        Error::Io(_) => FraclopStatus::Io,
        _ => FraclopStatus::NumericalFailure,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (FraclopStatus, String)>) -> FraclopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FraclopStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside fraclop");
            FraclopStatus::Panic
        }
    }
}

fn lib<T>(r: fraclop::Result<T>) -> Result<T, (FraclopStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (FraclopStatus, String) {
    (FraclopStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or a valid pointer to `T` for the duration of the call.
unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, (FraclopStatus, String)> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

/// # Safety
/// `p` must be null or a valid, exclusive pointer to `T`.
unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (FraclopStatus, String)> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fraclop_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fraclop_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reference problem on `n` points per direction in `dim` (2 or 3)
/// directions: coefficients a1, a2(, a3), `beta = gamma = 1`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn fraclop_problem_new(
    dim: usize,
    n: usize,
    alpha: f64,
    design: FraclopDesign,
    out: *mut *mut FraclopProblem,
) -> FraclopStatus {
    guard(|| {
        let out = unsafe { borrow_mut(out, "out") }?;
        let kind = match design {
            FraclopDesign::Box => DesignKind::Box,
            FraclopDesign::H => DesignKind::H,
        };
        let p = lib(ControlProblem::reference(dim, n, alpha, kind))?;
        lib(p.validate())?;
        *out = Box::into_raw(Box::new(FraclopProblem(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from [`fraclop_problem_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fraclop_problem_free(p: *mut FraclopProblem) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Sets the cost weights.
///
/// # Safety
/// `p` must be a valid problem handle.
#[no_mangle]
pub unsafe extern "C" fn fraclop_problem_set_weights(p: *mut FraclopProblem, beta: f64, gamma: f64) -> FraclopStatus {
    guard(|| {
        let p = unsafe { borrow_mut(p, "problem") }?;
        let mut next = p.0.clone();
        next.beta = beta;
        next.gamma = gamma;
        lib(next.validate())?;
        p.0 = next;
        Ok(())
    })
}

/// Chooses the preconditioner and its rank and tolerance.
///
/// # Safety
/// `p` must be a valid problem handle.
#[no_mangle]
pub unsafe extern "C" fn fraclop_problem_set_precond(
    p: *mut FraclopProblem,
    kind: FraclopPrecond,
    rank: usize,
    eps: f64,
) -> FraclopStatus {
    guard(|| {
        let p = unsafe { borrow_mut(p, "problem") }?;
        let mut next = p.0.clone();
        next.precond.kind = match kind {
            FraclopPrecond::Laplace => PrecondKind::Laplace,
            FraclopPrecond::Aniso => PrecondKind::Aniso,
            FraclopPrecond::Direct => PrecondKind::Direct,
        };
        next.precond.rank = rank;
        next.precond.eps = eps;
        lib(next.validate())?;
        p.0 = next;
        Ok(())
    })
}

/// PCG truncation tolerance, stopping tolerance, iteration limit and rank cap.
///
/// # Safety
/// `p` must be a valid problem handle.
#[no_mangle]
pub unsafe extern "C" fn fraclop_problem_set_solver(
    p: *mut FraclopProblem,
    eps: f64,
    stop_tol: f64,
    max_iter: usize,
    rank_cap: usize,
) -> FraclopStatus {
    guard(|| {
        let p = unsafe { borrow_mut(p, "problem") }?;
        let mut next = p.0.clone();
        next.pcg.eps = eps;
        next.pcg.stop_tol = stop_tol;
        next.pcg.max_iter = max_iter;
        next.pcg.rank_cap = rank_cap;
        lib(next.validate())?;
        p.0 = next;
        Ok(())
    })
}

/// Solves for the control and recovers the state. Returns
/// [`FraclopStatus::NotConverged`] with a valid `*out` when the iteration
/// limit was hit first.
///
/// # Safety
/// `p` must be a valid problem handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fraclop_solve(p: *const FraclopProblem, out: *mut *mut FraclopSolution) -> FraclopStatus {
    let mut converged = true;
    let status = guard(|| {
        let p = unsafe { borrow(p, "problem") }?;
        let out = unsafe { borrow_mut(out, "out") }?;
        let sol = lib(solve_control(&p.0))?;
        let state = lib(sol.assembly.state(&p.0, sol.control()))?;
        converged = sol.report.converged;
        if !converged {
            set_error(format!("no convergence within {} iterations", sol.report.iterations));
        }
        *out = Box::into_raw(Box::new(FraclopSolution { sol, state }));
        Ok(())
    });
    if status == FraclopStatus::Ok && !converged {
        FraclopStatus::NotConverged
    } else {
        status
    }
}

/// # Safety
/// `s` must be null or a handle from [`fraclop_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fraclop_solution_free(s: *mut FraclopSolution) {
    if !s.is_null() {
        drop(unsafe { Box::from_raw(s) });
    }
}

/// Number of PCG iterations, 0 for a null handle.
///
/// # Safety
/// `s` must be null or a valid solution handle.
#[no_mangle]
pub unsafe extern "C" fn fraclop_solution_iterations(s: *const FraclopSolution) -> usize {
    unsafe { s.as_ref() }.map_or(0, |s| s.sol.report.iterations)
}

/// Final relative residual, NaN for a null handle.
///
/// # Safety
/// `s` must be null or a valid solution handle.
#[no_mangle]
pub unsafe extern "C" fn fraclop_solution_residual(s: *const FraclopSolution) -> f64 {
    unsafe { s.as_ref() }.map_or(f64::NAN, |s| s.sol.report.final_rel_residual())
}

/// Largest rank of any PCG iterate, 0 for a null handle.
///
/// # Safety
/// `s` must be null or a valid solution handle.
#[no_mangle]
pub unsafe extern "C" fn fraclop_solution_max_rank(s: *const FraclopSolution) -> usize {
    unsafe { s.as_ref() }.map_or(0, |s| s.sol.report.max_rank())
}

/// Copy of the control as a new tensor handle.
///
/// # Safety
/// `s` must be a valid solution handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fraclop_solution_control(
    s: *const FraclopSolution,
    out: *mut *mut FraclopTensor,
) -> FraclopStatus {
    guard(|| {
        let s = unsafe { borrow(s, "solution") }?;
        let out = unsafe { borrow_mut(out, "out") }?;
        *out = Box::into_raw(Box::new(FraclopTensor(s.sol.control().clone())));
        Ok(())
    })
}

/// Copy of the state as a new tensor handle.
///
/// # Safety
/// `s` must be a valid solution handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fraclop_solution_state(
    s: *const FraclopSolution,
    out: *mut *mut FraclopTensor,
) -> FraclopStatus {
    guard(|| {
        let s = unsafe { borrow(s, "solution") }?;
        let out = unsafe { borrow_mut(out, "out") }?;
        *out = Box::into_raw(Box::new(FraclopTensor(s.state.clone())));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a tensor handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fraclop_tensor_free(t: *mut FraclopTensor) {
    if !t.is_null() {
        drop(unsafe { Box::from_raw(t) });
    }
}

/// Number of modes, 0 for a null handle.
///
/// # Safety
/// `t` must be null or a valid tensor handle.
#[no_mangle]
pub unsafe extern "C" fn fraclop_tensor_ndim(t: *const FraclopTensor) -> usize {
    unsafe { t.as_ref() }.map_or(0, |t| t.0.shape().len())
}

/// Canonical rank, 0 for a null handle.
///
/// # Safety
/// `t` must be null or a valid tensor handle.
#[no_mangle]
pub unsafe extern "C" fn fraclop_tensor_rank(t: *const FraclopTensor) -> usize {
    unsafe { t.as_ref() }.map_or(0, |t| t.0.rank())
}

/// Writes the mode sizes into `shape[0..len]`; `len` must equal the number
/// of modes.
///
/// # Safety
/// `t` must be a valid tensor handle and `shape` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fraclop_tensor_shape(t: *const FraclopTensor, shape: *mut usize, len: usize) -> FraclopStatus {
    guard(|| {
        let t = unsafe { borrow(t, "tensor") }?;
        if shape.is_null() {
            return Err(null("shape"));
        }
        let s = t.0.shape();
        if len != s.len() {
            return Err((FraclopStatus::ShapeMismatch, format!("tensor has {} modes, buffer holds {len}", s.len())));
        }
        unsafe { ptr::copy_nonoverlapping(s.as_ptr(), shape, len) };
        Ok(())
    })
}

/// Entry at the multi-index `idx[0..len]`.
///
/// # Safety
/// `t` must be a valid tensor handle, `idx` valid for `len` reads and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fraclop_tensor_entry(
    t: *const FraclopTensor,
    idx: *const usize,
    len: usize,
    out: *mut f64,
) -> FraclopStatus {
    guard(|| {
        let t = unsafe { borrow(t, "tensor") }?;
        let out = unsafe { borrow_mut(out, "out") }?;
        if idx.is_null() {
            return Err(null("idx"));
        }
        let idx = unsafe { std::slice::from_raw_parts(idx, len) };
        let shape = t.0.shape();
        if idx.len() != shape.len() || idx.iter().zip(shape).any(|(i, n)| i >= n) {
            return Err((FraclopStatus::ShapeMismatch, format!("index {idx:?} outside shape {shape:?}")));
        }
        *out = t.0.entry(idx);
        Ok(())
    })
}

fn path_arg<'a>(path: *const c_char) -> Result<&'a str, (FraclopStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    unsafe { CStr::from_ptr(path) }
        .to_str()
        .map_err(|_| (FraclopStatus::InvalidArgument, "path is not UTF-8".to_string()))
}

/// Writes the tensor in the CANON text format.
///
/// # Safety
/// `t` must be a valid tensor handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fraclop_tensor_save(t: *const FraclopTensor, path: *const c_char) -> FraclopStatus {
    guard(|| {
        let t = unsafe { borrow(t, "tensor") }?;
        lib(save_canon(path_arg(path)?, &t.0))
    })
}

/// Reads a CANON file into a new tensor handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fraclop_tensor_load(path: *const c_char, out: *mut *mut FraclopTensor) -> FraclopStatus {
    guard(|| {
        let out = unsafe { borrow_mut(out, "out") }?;
        let t = lib(load_canon(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(FraclopTensor(t)));
        Ok(())
    })
}
