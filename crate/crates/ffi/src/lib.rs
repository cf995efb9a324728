//! C interface to the navier-wall toolkit.
//!
//! Every function returns an `NwStatus`. On failure a message is kept per
//! thread and can be read with `nw_last_error`. Objects are opaque handles
//! released with their `*_free` function; freeing a null handle is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use navier_wall::cell::{effective_matrix, solve_cell_longitudinal, solve_cell_transverse};
use navier_wall::cli::{wall_law, RunConfig, Settings};
use navier_wall::expr::{parse_expr, Expr};
use navier_wall::fields::Forcing;
use navier_wall::grid::{build_domain_grid, DomainSpec, Profile};
use navier_wall::stokes::SolverConfig;
use navier_wall::walllaw::{g0_energy, solve_limit, tangential_traction};
use navier_wall::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NwStatus {
    Ok = 0,
    InvalidArgument = 1,
    NonConvergence = 2,
    Io = 3,
    Parse = 4,
    Evaluation = 5,
    NullPointer = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> NwStatus {
    match e {
        Error::NonConvergence { .. } => NwStatus::NonConvergence,
        Error::Io(_) => NwStatus::Io,
        Error::Parse { .. } => NwStatus::Parse,
        Error::Evaluation(_) => NwStatus::Evaluation,
        _ => NwStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), NwStatus>) -> NwStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NwStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            NwStatus::Panic
        }
    }
}

fn fail(e: Error) -> NwStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> NwStatus {
    set_error(format!("{what} is null"));
    NwStatus::NullPointer
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, NwStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        NwStatus::InvalidArgument
    })
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn nw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Parsed expression in `x` and `y`.
pub struct NwExpr {
    expr: Expr,
}

/// Parses `text`. On a parse error `*error_offset` (if not null) receives
/// the byte offset of the problem.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` and `error_offset` must be
/// valid for writes or null.
#[no_mangle]
pub unsafe extern "C" fn nw_expr_parse(text_ptr: *const c_char, out: *mut *mut NwExpr, error_offset: *mut usize) -> NwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let s = text(text_ptr, "text")?;
        match parse_expr(s) {
            Ok(expr) => {
                *out = Box::into_raw(Box::new(NwExpr { expr }));
                Ok(())
            }
            Err(e) => {
                if let (Error::Parse { offset, .. }, false) = (&e, error_offset.is_null()) {
                    *error_offset = *offset;
                }
                Err(fail(e))
            }
        }
    })
}

/// # Safety
/// `expr` must come from `nw_expr_parse`; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_expr_eval(expr: *const NwExpr, x: f64, y: f64, out: *mut f64) -> NwStatus {
    guard(|| {
        if expr.is_null() {
            return Err(null("expr"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = (*expr).expr.evaluate(x, y).map_err(fail)?;
        Ok(())
    })
}

/// Writes the canonical text of `expr` into `buf` (NUL-terminated). `*len`
/// receives the required size including the terminator.
///
/// # Safety
/// `expr` must come from `nw_expr_parse`; `buf` must hold `cap` bytes or be
/// null with `cap = 0`; `len` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_expr_to_string(expr: *const NwExpr, buf: *mut c_char, cap: usize, len: *mut usize) -> NwStatus {
    guard(|| {
        if expr.is_null() {
            return Err(null("expr"));
        }
        if len.is_null() {
            return Err(null("len"));
        }
        let s = (*expr).expr.to_string();
        *len = s.len() + 1;
        if cap < s.len() + 1 || buf.is_null() {
            set_error(format!("buffer needs {} bytes", s.len() + 1));
            return Err(NwStatus::BufferTooSmall);
        }
        std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
        *buf.add(s.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `expr` must come from `nw_expr_parse` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nw_expr_free(expr: *mut NwExpr) {
    if !expr.is_null() {
        drop(Box::from_raw(expr));
    }
}

/// Cell coefficients and the effective matrix `K = nu diag(c1, c2)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NwCellCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub k11: f64,
    pub k12: f64,
    pub k21: f64,
    pub k22: f64,
}

/// Solves both cell problems for `profile` (`flat:H`, `bump:A`, `tent:A`
/// or an expression in x on the unit cell).
///
/// # Safety
/// `profile` must be NUL-terminated; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_cell_coefficients(
    profile: *const c_char,
    nx: usize,
    ny: usize,
    nu: f64,
    out: *mut NwCellCoefficients,
) -> NwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let h = Profile::parse(text(profile, "profile")?).map_err(fail)?;
        let cfg = SolverConfig::default();
        let long = solve_cell_longitudinal(&h, nx, ny, &cfg).map_err(fail)?;
        let trans = solve_cell_transverse(&h, nx, ny).map_err(fail)?;
        let k = effective_matrix(&long, &trans, nu).map_err(fail)?;
        *out = NwCellCoefficients {
            c1: k.c1,
            c2: k.c2,
            k11: k.k[0][0],
            k12: k.k[0][1],
            k21: k.k[1][0],
            k22: k.k[1][1],
        };
        Ok(())
    })
}

/// Solved limit problem.
pub struct NwLimit {
    g0: f64,
    x: Vec<f64>,
    trace: Vec<f64>,
    traction: Vec<f64>,
    divergence_residual: f64,
}

/// Solves the limit problem described by flat `key = value` configuration
/// text (same keys as the command line configuration file).
///
/// # Safety
/// `config` must be NUL-terminated; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_limit_solve(config: *const c_char, out: *mut *mut NwLimit) -> NwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let cfg = RunConfig::parse(text(config, "config")?).map_err(fail)?;
        let s = Settings::from_config(&cfg).map_err(fail)?;
        let grid = build_domain_grid(&DomainSpec::new(s.lx, s.lateral).map_err(fail)?, s.nx, s.ny, s.grading)
            .map_err(fail)?;
        let spec = wall_law(&s).map_err(fail)?;
        let f = Forcing::parse(&s.f1, &s.f2).and_then(|f| f.sample(&grid)).map_err(fail)?;
        let (u, stats) = solve_limit(&f, s.nu, &spec, s.model, &grid, &s.solver).map_err(fail)?;
        let g0 = g0_energy(&u, s.nu, &spec, &grid).map_err(fail)?;
        let traction = tangential_traction(&u, s.nu, &grid).map_err(fail)?;
        *out = Box::into_raw(Box::new(NwLimit {
            g0,
            x: grid.x_faces().to_vec(),
            trace: u.walls.bottom,
            traction,
            divergence_residual: stats.divergence_residual,
        }));
        Ok(())
    })
}

/// Number of bottom trace nodes.
///
/// # Safety
/// `limit` must come from `nw_limit_solve` or be null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn nw_limit_len(limit: *const NwLimit) -> usize {
    if limit.is_null() {
        0
    } else {
        (*limit).x.len()
    }
}

/// Limit energy `G0`.
///
/// # Safety
/// `limit` must come from `nw_limit_solve`; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_limit_g0(limit: *const NwLimit, out: *mut f64) -> NwStatus {
    guard(|| {
        if limit.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        *out = (*limit).g0;
        Ok(())
    })
}

/// `max |div u| / (1 + max |u|)` of the solution.
///
/// # Safety
/// `limit` must come from `nw_limit_solve`; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_limit_divergence_residual(limit: *const NwLimit, out: *mut f64) -> NwStatus {
    guard(|| {
        if limit.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        *out = (*limit).divergence_residual;
        Ok(())
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, cap: usize) -> Result<(), NwStatus> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if cap < src.len() {
        set_error(format!("buffer holds {cap} values, need {}", src.len()));
        return Err(NwStatus::BufferTooSmall);
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copies the node coordinates into `buf` (at least `nw_limit_len` values).
///
/// # Safety
/// `limit` must come from `nw_limit_solve`; `buf` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn nw_limit_x(limit: *const NwLimit, buf: *mut f64, cap: usize) -> NwStatus {
    guard(|| {
        if limit.is_null() {
            return Err(null("limit"));
        }
        copy_out(&(*limit).x, buf, cap)
    })
}

/// Copies the bottom velocity trace into `buf`.
///
/// # Safety
/// `limit` must come from `nw_limit_solve`; `buf` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn nw_limit_trace(limit: *const NwLimit, buf: *mut f64, cap: usize) -> NwStatus {
    guard(|| {
        if limit.is_null() {
            return Err(null("limit"));
        }
        copy_out(&(*limit).trace, buf, cap)
    })
}

/// Copies the bottom tangential traction into `buf`.
///
/// # Safety
/// `limit` must come from `nw_limit_solve`; `buf` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn nw_limit_traction(limit: *const NwLimit, buf: *mut f64, cap: usize) -> NwStatus {
    guard(|| {
        if limit.is_null() {
            return Err(null("limit"));
        }
        copy_out(&(*limit).traction, buf, cap)
    })
}

/// # Safety
/// `limit` must come from `nw_limit_solve` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nw_limit_free(limit: *mut NwLimit) {
    if !limit.is_null() {
        drop(Box::from_raw(limit));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_is_cleared_on_success() {
        let mut e = std::ptr::null_mut();
        let bad = CString::new("1+").unwrap();
        assert_eq!(unsafe { nw_expr_parse(bad.as_ptr(), &mut e, std::ptr::null_mut()) }, NwStatus::Parse);
        assert!(!nw_last_error().is_null());
        let good = CString::new("x").unwrap();
        assert_eq!(unsafe { nw_expr_parse(good.as_ptr(), &mut e, std::ptr::null_mut()) }, NwStatus::Ok);
        assert!(nw_last_error().is_null());
        unsafe { nw_expr_free(e) };
    }
}
