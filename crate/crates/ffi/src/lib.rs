//! C ABI for the delaysgd simulation library.
//!
//! Every function returns a [`DsgdStatus`]; on failure a message for the
//! calling thread is available from [`dsgd_last_error_message`]. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use delaysgd::analysis::{gradient_mapping, neighborhood_radius};
use delaysgd::config::{emit, parse_config, Experiment};
use delaysgd::engine::{run, Trajectory};
use delaysgd::experiment::run_built;
use delaysgd::objectives::{ObjectiveSuite, SmoothFunction};
use delaysgd::sets::FeasibleSet;
use delaysgd::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsgdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Infeasible = 5,
    Numerical = 6,
    Invariant = 7,
    Io = 8,
    OutOfRange = 9,
    DimensionMismatch = 10,
    Panic = 11,
}

/// Per-record quantities of a trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsgdMetric {
    GradMapSq = 0,
    RunningMeanGradMapSq = 1,
    /// Needs a suite with a known minimizer.
    DistSq = 2,
    /// Suboptimality of the step-weighted average iterate.
    Suboptimality = 3,
    StepSize = 4,
}

/// Constants of a built experiment. `g` is NaN when no certificate exists.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsgdConstants {
    pub n: usize,
    pub d: usize,
    pub l: f64,
    pub mu: f64,
    pub g: f64,
    pub c: f64,
    pub kappa: f64,
    pub horizon: u64,
}

/// A validated experiment.
pub struct DsgdExperiment {
    inner: Experiment,
}

/// One simulated run.
pub struct DsgdTrajectory {
    inner: Trajectory,
    suite: Arc<ObjectiveSuite>,
    /// Set when the run stopped early; the records are then partial.
    failed: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DsgdStatus, msg: impl Into<String>) -> DsgdStatus {
    set_error(msg.into());
    status
}

fn status_of(err: &Error) -> DsgdStatus {
    match err {
        Error::DimensionMismatch { .. } => DsgdStatus::DimensionMismatch,
        Error::NonFinite { .. } | Error::Numerical { .. } => DsgdStatus::Numerical,
        Error::InvalidParameter(_) | Error::InvalidSchedule(_) => DsgdStatus::InvalidArgument,
        Error::Infeasible { .. } => DsgdStatus::Infeasible,
        Error::Invariant(_) => DsgdStatus::Invariant,
        Error::Config(_) => DsgdStatus::Config,
        Error::Io { .. } | Error::Csv { .. } => DsgdStatus::Io,
    }
}

fn from_error(err: Error) -> DsgdStatus {
    fail(status_of(&err), err.to_string())
}

fn guard(body: impl FnOnce() -> DsgdStatus) -> DsgdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => {
            if status == DsgdStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            status
        }
        Err(_) => fail(DsgdStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, DsgdStatus> {
    if p.is_null() {
        return Err(fail(DsgdStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DsgdStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($p:expr, $what:expr) => {
        if $p.is_null() {
            return fail(DsgdStatus::NullPointer, concat!($what, " is null"));
        }
    };
}

/// Message describing the last failure on this thread, or NULL after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn dsgd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dsgd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates an experiment document, certifying `G` when the
/// document does not declare it.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsgd_experiment_from_json(json: *const c_char, out: *mut *mut DsgdExperiment) -> DsgdStatus {
    guard(|| {
        non_null!(out, "out");
        *out = ptr::null_mut();
        let text = try_status!(str_arg(json, "json"));
        let exp = match parse_config(text).and_then(|spec| spec.build()) {
            Ok(exp) => exp,
            Err(e) => return from_error(e),
        };
        *out = Box::into_raw(Box::new(DsgdExperiment { inner: exp }));
        DsgdStatus::Ok
    })
}

/// # Safety
/// `exp` must be NULL or a handle from [`dsgd_experiment_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsgd_experiment_free(exp: *mut DsgdExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsgd_experiment_constants(exp: *const DsgdExperiment, out: *mut DsgdConstants) -> DsgdStatus {
    guard(|| {
        non_null!(exp, "experiment");
        non_null!(out, "out");
        let e = &(*exp).inner;
        *out = DsgdConstants {
            n: e.run.suite.agents(),
            d: e.run.suite.dim(),
            l: e.run.suite.smoothness(),
            mu: e.run.suite.strong_convexity(),
            g: e.second_moment_g.unwrap_or(f64::NAN),
            c: e.run.delay.declared_c(),
            kappa: e.run.delay.kappa().value(),
            horizon: e.run.horizon,
        };
        DsgdStatus::Ok
    })
}

/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsgd_experiment_seed_count(exp: *const DsgdExperiment, out: *mut usize) -> DsgdStatus {
    guard(|| {
        non_null!(exp, "experiment");
        non_null!(out, "out");
        *out = (*exp).inner.seeds.len();
        DsgdStatus::Ok
    })
}

/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsgd_experiment_seed(exp: *const DsgdExperiment, index: usize, out: *mut u64) -> DsgdStatus {
    guard(|| {
        non_null!(exp, "experiment");
        non_null!(out, "out");
        let seeds = &(*exp).inner.seeds;
        match seeds.get(index) {
            Some(s) => {
                *out = *s;
                DsgdStatus::Ok
            }
            None => fail(DsgdStatus::OutOfRange, format!("seed index {index} out of range")),
        }
    })
}

/// The normalized experiment document. Free it with [`dsgd_string_free`].
///
/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsgd_experiment_normalized_json(exp: *const DsgdExperiment, out: *mut *mut c_char) -> DsgdStatus {
    guard(|| {
        non_null!(exp, "experiment");
        non_null!(out, "out");
        let text = emit(&(*exp).inner.spec);
        *out = CString::new(text).expect("JSON has no NUL bytes").into_raw();
        DsgdStatus::Ok
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsgd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs the experiment template with `seed`. When the run fails midway the
/// status reports why and `*out` still receives the partial trajectory.
///
/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsgd_experiment_run_seed(exp: *const DsgdExperiment, seed: u64, out: *mut *mut DsgdTrajectory) -> DsgdStatus {
    guard(|| {
        non_null!(exp, "experiment");
        non_null!(out, "out");
        *out = ptr::null_mut();
        let e = &(*exp).inner;
        let suite = e.run.suite.clone();
        let (traj, status) = match run(&e.run.with_seed(seed)) {
            Ok(t) => (t, DsgdStatus::Ok),
            Err(f) => {
                let status = status_of(&f.error);
                set_error(f.to_string());
                (f.partial, status)
            }
        };
        let failed = status != DsgdStatus::Ok;
        *out = Box::into_raw(Box::new(DsgdTrajectory { inner: traj, suite, failed }));
        if failed {
            // guard() only clears the message on success
            return status;
        }
        DsgdStatus::Ok
    })
}

/// Runs every seed and writes the output files. `output_dir` may be NULL to
/// use the directory named in the document. `*passed` is 1 when the fit
/// assertion and all invariants hold.
///
/// # Safety
/// `exp` must be a live handle; `output_dir` NULL or NUL-terminated; `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn dsgd_experiment_run(exp: *const DsgdExperiment, output_dir: *const c_char, passed: *mut i32) -> DsgdStatus {
    guard(|| {
        non_null!(exp, "experiment");
        non_null!(passed, "passed");
        let mut e = (*exp).inner.clone();
        if !output_dir.is_null() {
            e.spec.output_dir = PathBuf::from(try_status!(str_arg(output_dir, "output_dir")));
        }
        match run_built(&e) {
            Ok(outcome) => {
                *passed = i32::from(outcome.passed());
                DsgdStatus::Ok
            }
            Err(err) => from_error(err),
        }
    })
}

/// # Safety
/// `traj` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dsgd_trajectory_free(traj: *mut DsgdTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of records, the dimension, the number of agents, and whether the
/// run stopped early (1) or completed (0).
///
/// # Safety
/// `traj` must be a live handle; every output pointer must be writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn dsgd_trajectory_shape(
    traj: *const DsgdTrajectory,
    records: *mut usize,
    dim: *mut usize,
    agents: *mut usize,
    partial: *mut i32,
) -> DsgdStatus {
    guard(|| {
        non_null!(traj, "trajectory");
        let t = &*traj;
        if !records.is_null() {
            *records = t.inner.records.len();
        }
        if !dim.is_null() {
            *dim = t.suite.dim();
        }
        if !agents.is_null() {
            *agents = t.inner.agents;
        }
        if !partial.is_null() {
            *partial = i32::from(t.failed);
        }
        DsgdStatus::Ok
    })
}

unsafe fn record_at<'a>(traj: *const DsgdTrajectory, index: usize) -> Result<&'a delaysgd::engine::StepRecord, DsgdStatus> {
    if traj.is_null() {
        return Err(fail(DsgdStatus::NullPointer, "trajectory is null"));
    }
    let records = &(*traj).inner.records;
    records
        .get(index)
        .ok_or_else(|| fail(DsgdStatus::OutOfRange, format!("record index {index} out of range")))
}

/// Time index of record `index`.
///
/// # Safety
/// `traj` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsgd_trajectory_time(traj: *const DsgdTrajectory, index: usize, out: *mut u64) -> DsgdStatus {
    guard(|| {
        non_null!(out, "out");
        *out = try_status!(record_at(traj, index)).t;
        DsgdStatus::Ok
    })
}

/// Copies the iterate of record `index` into `buf`, which holds `len = d` doubles.
///
/// # Safety
/// `traj` must be a live handle; `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dsgd_trajectory_iterate(traj: *const DsgdTrajectory, index: usize, buf: *mut f64, len: usize) -> DsgdStatus {
    guard(|| {
        non_null!(buf, "buf");
        let rec = try_status!(record_at(traj, index));
        if len != rec.x.len() {
            return fail(DsgdStatus::DimensionMismatch, format!("buffer holds {len} values, iterate has {}", rec.x.len()));
        }
        ptr::copy_nonoverlapping(rec.x.as_ptr(), buf, len);
        DsgdStatus::Ok
    })
}

/// Copies `tau_i(t)` for every agent into `buf` (`len` = number of agents).
/// Agents not yet heard from report -1. The final record has no stamps.
///
/// # Safety
/// `traj` must be a live handle; `buf` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn dsgd_trajectory_stamps(traj: *const DsgdTrajectory, index: usize, buf: *mut i64, len: usize) -> DsgdStatus {
    guard(|| {
        non_null!(buf, "buf");
        let rec = try_status!(record_at(traj, index));
        if rec.stamps.is_empty() {
            return fail(DsgdStatus::OutOfRange, format!("record {index} is the final iterate and has no stamps"));
        }
        if len != rec.stamps.len() {
            return fail(DsgdStatus::DimensionMismatch, format!("buffer holds {len} values, there are {} agents", rec.stamps.len()));
        }
        ptr::copy_nonoverlapping(rec.stamps.as_ptr(), buf, len);
        DsgdStatus::Ok
    })
}

/// One metric of record `index`.
///
/// # Safety
/// `traj` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsgd_trajectory_metric(traj: *const DsgdTrajectory, index: usize, metric: DsgdMetric, out: *mut f64) -> DsgdStatus {
    guard(|| {
        non_null!(out, "out");
        let rec = try_status!(record_at(traj, index));
        let suite = &(*traj).suite;
        let need_optimum = || suite.optimum().ok_or_else(|| fail(DsgdStatus::InvalidArgument, "the suite has no known minimizer"));
        *out = match metric {
            DsgdMetric::GradMapSq => rec.grad_map_sq,
            DsgdMetric::RunningMeanGradMapSq => rec.grad_map_sq_running_mean,
            DsgdMetric::StepSize => rec.eta,
            DsgdMetric::DistSq => (&rec.x - &try_status!(need_optimum()).x_star).norm_squared(),
            DsgdMetric::Suboptimality => {
                let f_star = try_status!(need_optimum()).f_star;
                SmoothFunction::value(suite.as_ref(), &rec.weighted_average) - f_star
            }
        };
        DsgdStatus::Ok
    })
}

unsafe fn parse_set(set_json: *const c_char) -> Result<FeasibleSet, DsgdStatus> {
    let text = str_arg(set_json, "set_json")?;
    serde_json::from_str(text).map_err(|e| fail(DsgdStatus::Config, format!("set: {e}")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], DsgdStatus> {
    if p.is_null() {
        return Err(fail(DsgdStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Euclidean projection of `y` onto the set described by `set_json`
/// (the same document form as an experiment's `set`).
///
/// # Safety
/// `set_json` NUL-terminated; `y` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dsgd_project(set_json: *const c_char, y: *const f64, len: usize, out: *mut f64) -> DsgdStatus {
    guard(|| {
        non_null!(out, "out");
        let set = try_status!(parse_set(set_json));
        let y = nalgebra::DVector::from_column_slice(try_status!(slice_arg(y, len, "y")));
        match set.project(&y) {
            Ok(p) => {
                ptr::copy_nonoverlapping(p.as_ptr(), out, len);
                DsgdStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// `(x - P_S[x - eta v]) / eta` for the set described by `set_json`.
///
/// # Safety
/// `set_json` NUL-terminated; `x`, `v` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dsgd_gradient_mapping(
    set_json: *const c_char,
    x: *const f64,
    v: *const f64,
    len: usize,
    eta: f64,
    out: *mut f64,
) -> DsgdStatus {
    guard(|| {
        non_null!(out, "out");
        let set = try_status!(parse_set(set_json));
        let x = nalgebra::DVector::from_column_slice(try_status!(slice_arg(x, len, "x")));
        let v = nalgebra::DVector::from_column_slice(try_status!(slice_arg(v, len, "v")));
        match gradient_mapping(&set, &x, &v, eta) {
            Ok(h) => {
                ptr::copy_nonoverlapping(h.as_ptr(), out, len);
                DsgdStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Constant-step neighborhood radius. With `has_q == 0` the bias term is
/// omitted (the diminishing-bias variant).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dsgd_neighborhood_radius(
    n: usize,
    g: f64,
    c: f64,
    l: f64,
    mu: f64,
    eta: f64,
    has_q: i32,
    q: f64,
    out: *mut f64,
) -> DsgdStatus {
    guard(|| {
        non_null!(out, "out");
        let q = (has_q != 0).then_some(q);
        match neighborhood_radius(n, g, c, l, mu, eta, q) {
            Ok(r) => {
                *out = r;
                DsgdStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn success_clears_the_last_error() {
        assert_eq!(fail(DsgdStatus::Io, "boom"), DsgdStatus::Io);
        assert!(!dsgd_last_error_message().is_null());
        assert_eq!(guard(|| DsgdStatus::Ok), DsgdStatus::Ok);
        assert!(dsgd_last_error_message().is_null());
    }

    #[test]
    fn panics_become_status_codes() {
        assert_eq!(guard(|| panic!("unexpected")), DsgdStatus::Panic);
        let msg = unsafe { CStr::from_ptr(dsgd_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }

    #[test]
    fn error_kinds_map_to_codes() {
        assert_eq!(status_of(&Error::Config("x".into())), DsgdStatus::Config);
        assert_eq!(status_of(&Error::DimensionMismatch { expected: 1, got: 2 }), DsgdStatus::DimensionMismatch);
        assert_eq!(status_of(&Error::Invariant("x".into())), DsgdStatus::Invariant);
    }
}
