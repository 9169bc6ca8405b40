//! C ABI for `medbias`.
//!
//! Every function returns a [`MedbiasStatus`] and writes results through
//! out-pointers. On failure the message is available from
//! [`medbias_last_error`] on the same thread until the next call.
//! Objectives are opaque handles released with [`medbias_objective_free`];
//! strings returned by the library are released with [`medbias_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use medbias::bounds::{convex_bound, z_exact_medbias};
use medbias::partialling::{fwl_estimate, RegressionData};
use medbias::simlab::{derive_seed, hulc_batches, run_experiment_on, write_report, Engine, ExperimentConfig, OutputFormat};
use medbias::{mc_med_bias, med_bias, Bracket, Error, EstimatorDraws, ObjectiveFamily, ObjectiveKind, SignProbabilities};
use nalgebra::DMatrix;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MedbiasStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NonConvex = 3,
    NoBracketedRoot = 4,
    NoConvergence = 5,
    Collinear = 6,
    IdentityViolation = 7,
    Identifiability = 8,
    Degenerate = 9,
    Config = 10,
    Io = 11,
    Panic = 12,
}

impl From<&Error> for MedbiasStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Empty(_) => MedbiasStatus::InvalidArgument,
            Error::NonConvex { .. } => MedbiasStatus::NonConvex,
            Error::NoBracketedRoot { .. } => MedbiasStatus::NoBracketedRoot,
            Error::NoConvergence { .. } => MedbiasStatus::NoConvergence,
            Error::Collinear { .. } => MedbiasStatus::Collinear,
            Error::Identity { .. } => MedbiasStatus::IdentityViolation,
            Error::Identifiability(_) => MedbiasStatus::Identifiability,
            Error::Degenerate(_) => MedbiasStatus::Degenerate,
            Error::Config(_) | Error::Json(_) => MedbiasStatus::Config,
            Error::Io(_) | Error::Csv(_) => MedbiasStatus::Io,
        }
    }
}

/// Monte-Carlo median-bias estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MedbiasEstimate {
    pub point: f64,
    pub std_err: f64,
    pub reps: u64,
    pub p_le: f64,
    pub p_ge: f64,
}

/// Opaque convex (or biweight) location objective over a fixed sample.
pub struct MedbiasObjective {
    inner: ObjectiveFamily,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard<F>(f: F) -> MedbiasStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            MedbiasStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("null pointer: {what}"));
            MedbiasStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&e.to_string());
            MedbiasStatus::from(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            MedbiasStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn str_in<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

/// Message of the last failure on this thread, or "" after a success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn medbias_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// (1/2 − min{p_le, p_ge})₊.
///
/// # Safety
/// `out_value` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn medbias_med_bias(p_le: f64, p_ge: f64, out_value: *mut f64) -> MedbiasStatus {
    guard(|| {
        *out(out_value, "out_value")? = med_bias(p_le, p_ge)?;
        Ok(())
    })
}

/// Plug-in median bias of `len` estimator draws against `target`.
///
/// # Safety
/// `values` must point to `len` doubles; `out_estimate` must be valid.
#[no_mangle]
pub unsafe extern "C" fn medbias_mc_med_bias(
    values: *const f64,
    len: usize,
    target: f64,
    out_estimate: *mut MedbiasEstimate,
) -> MedbiasStatus {
    guard(|| {
        let v = slice_in(values, len, "values")?;
        let e = mc_med_bias(&EstimatorDraws::new(v.to_vec(), target, 0))?;
        *out(out_estimate, "out_estimate")? = MedbiasEstimate {
            point: e.point,
            std_err: e.std_err,
            reps: e.reps as u64,
            p_le: e.p_le,
            p_ge: e.p_ge,
        };
        Ok(())
    })
}

/// Bound from the strict-sign probabilities of the score at the target.
///
/// # Safety
/// `out_value` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn medbias_convex_bound(
    p_neg: f64,
    p_zero: f64,
    p_pos: f64,
    out_value: *mut f64,
) -> MedbiasStatus {
    guard(|| {
        let sp = SignProbabilities::new(p_neg, p_zero, p_pos)?;
        *out(out_value, "out_value")? = convex_bound(&sp);
        Ok(())
    })
}

/// Exact median bias of a smooth Z-estimator from P(score ≥ 0), P(score ≤ 0).
///
/// # Safety
/// `out_value` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn medbias_z_exact(p_weak_ge: f64, p_weak_le: f64, out_value: *mut f64) -> MedbiasStatus {
    guard(|| {
        *out(out_value, "out_value")? = z_exact_medbias(p_weak_ge, p_weak_le)?;
        Ok(())
    })
}

/// Builds an objective from a JSON kind such as `{"kind":"lp","p":1.5}`
/// and `len` observations. The data are copied.
///
/// # Safety
/// `kind_json` must be a NUL-terminated string, `data` must point to `len`
/// doubles and `out_handle` must be valid.
#[no_mangle]
pub unsafe extern "C" fn medbias_objective_new(
    kind_json: *const c_char,
    data: *const f64,
    len: usize,
    out_handle: *mut *mut MedbiasObjective,
) -> MedbiasStatus {
    guard(|| {
        let handle = out(out_handle, "out_handle")?;
        *handle = ptr::null_mut();
        let kind: ObjectiveKind =
            serde_json::from_str(str_in(kind_json, "kind_json")?).map_err(|e| Error::Config(e.to_string()))?;
        let inner = ObjectiveFamily::new(kind, slice_in(data, len, "data")?.to_vec())?;
        *handle = Box::into_raw(Box::new(MedbiasObjective { inner }));
        Ok(())
    })
}

/// Releases a handle from [`medbias_objective_new`]. Null is ignored.
///
/// # Safety
/// `handle` must come from [`medbias_objective_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn medbias_objective_free(handle: *mut MedbiasObjective) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

unsafe fn objective<'a>(h: *const MedbiasObjective) -> Result<&'a ObjectiveFamily, Failure> {
    h.as_ref().map(|o| &o.inner).ok_or(Failure::Null("handle"))
}

/// M_n(θ).
///
/// # Safety
/// `handle` must be live; `out_value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn medbias_objective_eval(
    handle: *const MedbiasObjective,
    theta: f64,
    out_value: *mut f64,
) -> MedbiasStatus {
    guard(|| {
        *out(out_value, "out_value")? = objective(handle)?.eval(theta);
        Ok(())
    })
}

/// Left and right derivatives of M_n at θ.
///
/// # Safety
/// `handle` must be live; both out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn medbias_objective_subgradient(
    handle: *const MedbiasObjective,
    theta: f64,
    out_left: *mut f64,
    out_right: *mut f64,
) -> MedbiasStatus {
    guard(|| {
        let g = objective(handle)?.dot_m(theta);
        *out(out_left, "out_left")? = g.left;
        *out(out_right, "out_right")? = g.right;
        Ok(())
    })
}

/// Minimizer of a convex objective on [lo, hi].
///
/// # Safety
/// `handle` must be live; `out_theta` must be valid.
#[no_mangle]
pub unsafe extern "C" fn medbias_objective_minimize(
    handle: *const MedbiasObjective,
    lo: f64,
    hi: f64,
    out_theta: *mut f64,
) -> MedbiasStatus {
    guard(|| {
        let obj = objective(handle)?;
        *out(out_theta, "out_theta")? = medbias::minimize_convex(obj, &Bracket::new(lo, hi)?)?;
        Ok(())
    })
}

/// Root of the estimating equation Ṁ_n(θ) = 0 on [lo, hi].
///
/// # Safety
/// `handle` must be live; `out_theta` must be valid.
#[no_mangle]
pub unsafe extern "C" fn medbias_objective_solve_z(
    handle: *const MedbiasObjective,
    lo: f64,
    hi: f64,
    out_theta: *mut f64,
) -> MedbiasStatus {
    guard(|| {
        let obj = objective(handle)?;
        *out(out_theta, "out_theta")? = medbias::solve_z(obj, &Bracket::new(lo, hi)?)?;
        Ok(())
    })
}

/// Coefficient of t in the least-squares regression of y on (t, x), with
/// `x` an n×d row-major matrix.
///
/// # Safety
/// `y` and `t` must point to `n` doubles, `x` to `n*d` doubles, and
/// `out_theta` must be valid.
#[no_mangle]
pub unsafe extern "C" fn medbias_fwl(
    y: *const f64,
    t: *const f64,
    x: *const f64,
    n: usize,
    d: usize,
    out_theta: *mut f64,
) -> MedbiasStatus {
    guard(|| {
        let cells = n
            .checked_mul(d)
            .ok_or_else(|| Error::InvalidArgument("n*d overflows".into()))?;
        let y = slice_in(y, n, "y")?.to_vec();
        let t = slice_in(t, n, "t")?.to_vec();
        let x = DMatrix::from_row_slice(n, d, slice_in(x, cells, "x")?);
        let fit = fwl_estimate(&RegressionData::new(y, t, x)?)?;
        *out(out_theta, "out_theta")? = fit.theta_hat;
        Ok(())
    })
}

/// Replication seed for (master, index, label).
///
/// # Safety
/// `label` must be a NUL-terminated UTF-8 string; `out_seed` must be valid.
#[no_mangle]
pub unsafe extern "C" fn medbias_derive_seed(
    master_seed: u64,
    index: u64,
    label: *const c_char,
    out_seed: *mut u64,
) -> MedbiasStatus {
    guard(|| {
        *out(out_seed, "out_seed")? = derive_seed(master_seed, index, str_in(label, "label")?);
        Ok(())
    })
}

/// Number of batches ⌈log₂(2/α)⌉ of the min/max interval.
///
/// # Safety
/// `out_batches` must be valid.
#[no_mangle]
pub unsafe extern "C" fn medbias_hulc_batches(alpha: f64, out_batches: *mut usize) -> MedbiasStatus {
    guard(|| {
        *out(out_batches, "out_batches")? = hulc_batches(alpha)?;
        Ok(())
    })
}

/// Runs a JSON experiment config with `workers` threads (0: one per core)
/// and returns the CSV report (or JSON when `json_output` is nonzero) in
/// `*out_report`, to be released with [`medbias_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out_report` must be valid.
#[no_mangle]
pub unsafe extern "C" fn medbias_run_experiment(
    config_json: *const c_char,
    workers: usize,
    json_output: i32,
    out_report: *mut *mut c_char,
) -> MedbiasStatus {
    guard(|| {
        let slot = out(out_report, "out_report")?;
        *slot = ptr::null_mut();
        let cfg = ExperimentConfig::from_json_str(str_in(config_json, "config_json")?)?;
        let workers = if workers == 0 {
            medbias::simlab::resolve_workers(None, cfg.workers)?
        } else {
            workers
        };
        let rows = run_experiment_on(&cfg, &Engine::new(workers)?)?;
        let format = if json_output != 0 { OutputFormat::Json } else { OutputFormat::Csv };
        let mut buf = Vec::new();
        write_report(&cfg, &rows, format, &mut buf)?;
        let text = CString::new(buf).map_err(|_| Error::InvalidArgument("report contains NUL".into()))?;
        *slot = text.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn medbias_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
