//! C ABI over the `phasebal` library.
//!
//! Problems live behind an opaque `PbProblem` handle. Every fallible function
//! returns a `PbStatus`; on failure `pb_last_error_message` describes the error
//! on the calling thread. Phases cross the boundary as bytes 1, 2 or 3, one per
//! reconfigurable user in feeder order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use phasebal::harness::report::to_json;
use phasebal::harness::{cmd_optimize, Method, RunConfig};
use phasebal::{Error, Metric, PhaseAssignment, Problem, Space};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Unsupported = 6,
    Divergence = 7,
    CapExceeded = 8,
    Infeasible = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbMetric {
    Pvur = 0,
    PvurStar = 1,
    IU = 2,
    PU = 3,
    PUStar = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbMethod {
    Ga = 0,
    Miqp = 1,
    Oracle = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbSpace {
    ExactPf = 0,
    Ld3f = 1,
}

/// Opaque problem handle.
pub struct PbProblem {
    problem: Problem,
    config: RunConfig,
}

impl From<PbMetric> for Metric {
    fn from(m: PbMetric) -> Metric {
        match m {
            PbMetric::Pvur => Metric::Pvur,
            PbMetric::PvurStar => Metric::PvurStar,
            PbMetric::IU => Metric::IU,
            PbMetric::PU => Metric::PU,
            PbMetric::PUStar => Metric::PUStar,
        }
    }
}

impl From<PbMethod> for Method {
    fn from(m: PbMethod) -> Method {
        match m {
            PbMethod::Ga => Method::Ga,
            PbMethod::Miqp => Method::Miqp,
            PbMethod::Oracle => Method::Oracle,
        }
    }
}

impl From<PbSpace> for Space {
    fn from(s: PbSpace) -> Space {
        match s {
            PbSpace::ExactPf => Space::ExactPf,
            PbSpace::Ld3f => Space::Ld3f,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match &e {
            Error::Io { .. } => PbStatus::Io,
            Error::Parse(_) | Error::Profile(_) => PbStatus::Parse,
            Error::Validation(_) | Error::LengthMismatch { .. } | Error::Metric(_) => PbStatus::Validation,
            Error::Unsupported(_) => PbStatus::Unsupported,
            Error::Divergence(_) => PbStatus::Divergence,
            Error::CapExceeded { .. } => PbStatus::CapExceeded,
            Error::Infeasible { .. } => PbStatus::Infeasible,
        };
        Failure(code, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PbStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PbStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            PbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(PbStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a>(h: *const PbProblem) -> Result<&'a PbProblem, Failure> {
    h.as_ref().ok_or_else(|| null("problem"))
}

unsafe fn assignment_arg(phases: *const u8, len: usize, h: &PbProblem) -> Result<PhaseAssignment, Failure> {
    if phases.is_null() {
        return Err(null("phases"));
    }
    let n = h.problem.original().len();
    if len != n {
        return Err(Failure(PbStatus::InvalidArgument, format!("expected {n} phases, got {len}")));
    }
    Ok(PhaseAssignment::from_numbers(std::slice::from_raw_parts(phases, len))?)
}

fn delta(d: i64) -> Option<usize> {
    usize::try_from(d).ok()
}

fn build(config: RunConfig) -> Result<Box<PbProblem>, Failure> {
    let problem = config.problem()?;
    Ok(Box::new(PbProblem { problem, config }))
}

unsafe fn store(out: *mut *mut PbProblem, config: RunConfig) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(build(config)?);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a successful call.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn pb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a problem from a bundled fixture (`"a"`, `"b"` or `"c"`).
/// A negative `delta_max` means every reconfigurable user may switch.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pb_problem_from_fixture(
    name: *const c_char,
    objective: PbMetric,
    delta_max: i64,
    out: *mut *mut PbProblem,
) -> PbStatus {
    guard(|| {
        let cfg = RunConfig {
            fixture: Some(str_arg(name, "name")?.to_string()),
            objective: Some(objective.into()),
            delta_max: delta(delta_max),
            ..RunConfig::default()
        };
        store(out, cfg)
    })
}

/// Builds a problem from a feeder JSON file and a load profile CSV file.
///
/// # Safety
/// Both paths must be NUL-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pb_problem_from_files(
    feeder_path: *const c_char,
    profiles_path: *const c_char,
    objective: PbMetric,
    delta_max: i64,
    out: *mut *mut PbProblem,
) -> PbStatus {
    guard(|| {
        let cfg = RunConfig {
            feeder: Some(str_arg(feeder_path, "feeder_path")?.into()),
            profiles: Some(str_arg(profiles_path, "profiles_path")?.into()),
            objective: Some(objective.into()),
            delta_max: delta(delta_max),
            ..RunConfig::default()
        };
        store(out, cfg)
    })
}

/// Builds a problem from a TOML run configuration (the CLI's `--config` format).
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pb_problem_from_config(toml: *const c_char, out: *mut *mut PbProblem) -> PbStatus {
    guard(|| {
        let cfg = RunConfig::from_toml(str_arg(toml, "toml")?)?;
        store(out, cfg)
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `problem` must come from a `pb_problem_from_*` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pb_problem_free(problem: *mut PbProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of reconfigurable users, i.e. the length of every phase array.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pb_problem_num_users(problem: *const PbProblem, out: *mut usize) -> PbStatus {
    guard(|| {
        let h = handle(problem)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = h.problem.original().len();
        Ok(())
    })
}

/// Writes the as-found phases into `phases_out[0..len]`.
///
/// # Safety
/// `phases_out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pb_problem_original(problem: *const PbProblem, phases_out: *mut u8, len: usize) -> PbStatus {
    guard(|| {
        let h = handle(problem)?;
        write_phases(&h.problem.original(), phases_out, len)
    })
}

unsafe fn write_phases(a: &PhaseAssignment, out: *mut u8, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("phases_out"));
    }
    let nums = a.numbers();
    if len < nums.len() {
        return Err(Failure(PbStatus::BufferTooSmall, format!("need {} bytes, got {len}", nums.len())));
    }
    ptr::copy_nonoverlapping(nums.as_ptr(), out, nums.len());
    Ok(())
}

/// Scores an assignment. `objective_out` receives NaN when the metric is undefined
/// or the power flow diverged; `feasible_out` is false on any operational violation.
/// Either output pointer may be NULL.
///
/// # Safety
/// `phases` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn pb_evaluate(
    problem: *const PbProblem,
    phases: *const u8,
    len: usize,
    space: PbSpace,
    objective_out: *mut f64,
    feasible_out: *mut bool,
) -> PbStatus {
    guard(|| {
        let h = handle(problem)?;
        let a = assignment_arg(phases, len, h)?;
        let feasible = h.problem.binary_violation(&a)?.is_none();
        let e = h.problem.evaluate(&a, space.into())?;
        if let Some(o) = objective_out.as_mut() {
            *o = e.objective;
        }
        if let Some(f) = feasible_out.as_mut() {
            *f = feasible && e.feasible();
        }
        Ok(())
    })
}

fn optimize(h: &PbProblem, method: PbMethod, seed: u64) -> Result<phasebal::harness::RunReport, Failure> {
    let cfg = RunConfig { method: Some(method.into()), seed: Some(seed), ..h.config.clone() };
    Ok(cmd_optimize(&h.problem, &cfg)?)
}

/// Runs an optimizer and writes the best phases found. `objective_out` (nullable)
/// receives the objective in the space the method searched.
///
/// # Safety
/// `phases_out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pb_optimize(
    problem: *const PbProblem,
    method: PbMethod,
    seed: u64,
    phases_out: *mut u8,
    len: usize,
    objective_out: *mut f64,
) -> PbStatus {
    guard(|| {
        let h = handle(problem)?;
        let r = optimize(h, method, seed)?;
        write_phases(&r.assignment, phases_out, len)?;
        if let Some(o) = objective_out.as_mut() {
            *o = r.objective;
        }
        Ok(())
    })
}

/// Runs an optimizer and returns the full run report as JSON in `*json_out`.
/// Release the string with `pb_string_free`.
///
/// # Safety
/// `json_out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pb_optimize_json(
    problem: *const PbProblem,
    method: PbMethod,
    seed: u64,
    json_out: *mut *mut c_char,
) -> PbStatus {
    guard(|| {
        let h = handle(problem)?;
        if json_out.is_null() {
            return Err(null("json_out"));
        }
        let json = to_json(&optimize(h, method, seed)?)?;
        *json_out = CString::new(json).map_err(|e| Failure(PbStatus::Panic, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
