//! C ABI over the adaptlab library.
//!
//! Scenarios and trajectories are opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns an
//! [`AdaptlabStatus`]; the message of the most recent failure on the calling
//! thread is available from [`adaptlab_last_error`]. Panics never cross the
//! boundary; they surface as `ADAPTLAB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;

use adaptlab::clf_synthesis::synthesize_p;
use adaptlab::experiments::runner::trajectory_csv;
use adaptlab::experiments::{builtin_config, ScenarioConfig};
use adaptlab::simulation::{simulate, Scenario, Termination, Trajectory};
use adaptlab::Error;

/// Result codes shared by every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Dimension = 5,
    NonFinite = 6,
    Numeric = 7,
    Io = 8,
    BufferTooSmall = 9,
    OutOfRange = 10,
    Panic = 99,
}

/// How a simulation ended.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptlabTermination {
    Horizon = 0,
    NonFinite = 1,
    Converged = 2,
}

/// A validated closed-loop scenario.
pub struct AdaptlabScenario {
    inner: Scenario,
}

/// A simulated trajectory together with the scenario that produced it.
pub struct AdaptlabTrajectory {
    scenario: Scenario,
    traj: Trajectory,
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

fn status_of(e: &Error) -> AdaptlabStatus {
    match e {
        Error::Parse(_) => AdaptlabStatus::Parse,
        Error::Validation { .. } => AdaptlabStatus::Validation,
        Error::Dimension { .. } => AdaptlabStatus::Dimension,
        Error::Io(_) => AdaptlabStatus::Io,
        e if e.is_numeric_failure() => AdaptlabStatus::NonFinite,
        _ => AdaptlabStatus::Numeric,
    }
}

fn fail(status: AdaptlabStatus, msg: impl Into<String>) -> AdaptlabStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> AdaptlabStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `body`, converting panics into `Panic` and recording the outcome.
fn guard(body: impl FnOnce() -> AdaptlabStatus) -> AdaptlabStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(AdaptlabStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, AdaptlabStatus> {
    if s.is_null() {
        return Err(fail(AdaptlabStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(AdaptlabStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn finish_scenario(cfg: adaptlab::Result<ScenarioConfig>, out: *mut *mut AdaptlabScenario) -> AdaptlabStatus {
    match cfg.and_then(|c| c.build()) {
        Ok(inner) => {
            let handle = Box::new(AdaptlabScenario { inner });
            unsafe { *out = Box::into_raw(handle) };
            AdaptlabStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next adaptlab call on the same thread.
#[no_mangle]
pub extern "C" fn adaptlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn adaptlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a TOML scenario.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_scenario_from_toml(
    toml: *const c_char,
    out: *mut *mut AdaptlabScenario,
) -> AdaptlabStatus {
    guard(|| {
        if out.is_null() {
            return fail(AdaptlabStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        match read_str(toml) {
            Ok(text) => finish_scenario(ScenarioConfig::from_toml_str(text), out),
            Err(s) => s,
        }
    })
}

/// Loads one of the shipped scenarios (`s0`, `s1`, `s1_momentum`, `s2`,
/// `s3`, `probe_cos`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_scenario_builtin(
    name: *const c_char,
    out: *mut *mut AdaptlabScenario,
) -> AdaptlabStatus {
    guard(|| {
        if out.is_null() {
            return fail(AdaptlabStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        match read_str(name) {
            Ok(n) => finish_scenario(builtin_config(n), out),
            Err(s) => s,
        }
    })
}

/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_scenario_free(scenario: *mut AdaptlabScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// State, input and parameter dimensions of a scenario.
///
/// # Safety
/// All pointers must be valid; `scenario` must be live.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_scenario_dims(
    scenario: *const AdaptlabScenario,
    n: *mut usize,
    m: *mut usize,
    p: *mut usize,
) -> AdaptlabStatus {
    guard(|| {
        if scenario.is_null() || n.is_null() || m.is_null() || p.is_null() {
            return fail(AdaptlabStatus::NullPointer, "null argument");
        }
        let s = &(*scenario).inner;
        *n = s.n();
        *m = s.m();
        *p = s.p();
        AdaptlabStatus::Ok
    })
}

/// Integrates the scenario. A run that stops on a numerical failure still
/// yields a trajectory (status `Ok`); check its termination.
///
/// # Safety
/// `scenario` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_simulate(
    scenario: *const AdaptlabScenario,
    out: *mut *mut AdaptlabTrajectory,
) -> AdaptlabStatus {
    guard(|| {
        if scenario.is_null() || out.is_null() {
            return fail(AdaptlabStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let s = &(*scenario).inner;
        match simulate(s) {
            Ok(traj) => {
                if let Some(msg) = &traj.failure {
                    set_error(msg.clone());
                }
                *out = Box::into_raw(Box::new(AdaptlabTrajectory {
                    scenario: s.clone(),
                    traj,
                }));
                AdaptlabStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `trajectory` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_trajectory_free(trajectory: *mut AdaptlabTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of samples (0 for NULL).
///
/// # Safety
/// `trajectory` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_trajectory_len(trajectory: *const AdaptlabTrajectory) -> usize {
    trajectory.as_ref().map_or(0, |t| t.traj.len())
}

/// # Safety
/// `trajectory` must be live.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_trajectory_termination(
    trajectory: *const AdaptlabTrajectory,
    out: *mut AdaptlabTermination,
) -> AdaptlabStatus {
    guard(|| {
        let (Some(t), false) = (trajectory.as_ref(), out.is_null()) else {
            return fail(AdaptlabStatus::NullPointer, "null argument");
        };
        *out = match t.traj.terminated {
            Termination::Horizon => AdaptlabTermination::Horizon,
            Termination::NonFinite => AdaptlabTermination::NonFinite,
            Termination::Converged => AdaptlabTermination::Converged,
        };
        AdaptlabStatus::Ok
    })
}

#[derive(Clone, Copy)]
enum Series {
    Time,
    Value,
    Q,
}

unsafe fn copy_series(
    trajectory: *const AdaptlabTrajectory,
    which: Series,
    buf: *mut f64,
    len: usize,
) -> AdaptlabStatus {
    guard(|| {
        let Some(t) = trajectory.as_ref() else {
            return fail(AdaptlabStatus::NullPointer, "null trajectory");
        };
        let data = match which {
            Series::Time => t.traj.times.clone(),
            Series::Value => t.traj.values(),
            Series::Q => t.traj.q_values(),
        };
        if len < data.len() {
            return fail(
                AdaptlabStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", data.len()),
            );
        }
        if buf.is_null() {
            return fail(AdaptlabStatus::NullPointer, "null buffer");
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        AdaptlabStatus::Ok
    })
}

/// Copies the sample times into `buf` (capacity `len`).
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_trajectory_times(
    trajectory: *const AdaptlabTrajectory,
    buf: *mut f64,
    len: usize,
) -> AdaptlabStatus {
    copy_series(trajectory, Series::Time, buf, len)
}

/// Copies `V` at every sample into `buf`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_trajectory_values(
    trajectory: *const AdaptlabTrajectory,
    buf: *mut f64,
    len: usize,
) -> AdaptlabStatus {
    copy_series(trajectory, Series::Value, buf, len)
}

/// Copies the Lyapunov monitor at every sample into `buf`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_trajectory_monitor(
    trajectory: *const AdaptlabTrajectory,
    buf: *mut f64,
    len: usize,
) -> AdaptlabStatus {
    copy_series(trajectory, Series::Q, buf, len)
}

/// Copies `x` and `theta_hat` of sample `index` into `x` (length `n`) and
/// `theta_hat` (length `p`). Either output may be NULL to skip it.
///
/// # Safety
/// Non-NULL buffers must hold `n` and `p` doubles respectively.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_trajectory_sample(
    trajectory: *const AdaptlabTrajectory,
    index: usize,
    x: *mut f64,
    n: usize,
    theta_hat: *mut f64,
    p: usize,
) -> AdaptlabStatus {
    guard(|| {
        let Some(t) = trajectory.as_ref() else {
            return fail(AdaptlabStatus::NullPointer, "null trajectory");
        };
        let Some(s) = t.traj.samples.get(index) else {
            return fail(AdaptlabStatus::OutOfRange, format!("sample {index} of {}", t.traj.len()));
        };
        if !x.is_null() {
            if n != s.state.x.len() {
                return fail(AdaptlabStatus::Dimension, format!("x has {} entries", s.state.x.len()));
            }
            ptr::copy_nonoverlapping(s.state.x.as_ptr(), x, n);
        }
        let th = &s.state.est.theta_hat;
        if !theta_hat.is_null() {
            if p != th.len() {
                return fail(AdaptlabStatus::Dimension, format!("theta_hat has {} entries", th.len()));
            }
            ptr::copy_nonoverlapping(th.as_ptr(), theta_hat, p);
        }
        AdaptlabStatus::Ok
    })
}

/// Writes the trajectory CSV (every `stride`-th row plus the last) into
/// `buf` as a NUL-terminated string. `needed` receives the size including
/// the terminator; pass `cap = 0` to query it.
///
/// # Safety
/// `buf` must hold `cap` bytes when `cap > 0`; `needed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_trajectory_csv(
    trajectory: *const AdaptlabTrajectory,
    stride: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> AdaptlabStatus {
    guard(|| {
        let (Some(t), false) = (trajectory.as_ref(), needed.is_null()) else {
            return fail(AdaptlabStatus::NullPointer, "null argument");
        };
        let text = match trajectory_csv(&t.scenario, &t.traj, stride.max(1)) {
            Ok(s) => s,
            Err(e) => return from_error(e),
        };
        *needed = text.len() + 1;
        if cap < text.len() + 1 {
            return fail(AdaptlabStatus::BufferTooSmall, format!("{} bytes needed", text.len() + 1));
        }
        if buf.is_null() {
            return fail(AdaptlabStatus::NullPointer, "null buffer");
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast(), buf, text.len());
        *buf.add(text.len()) = 0;
        AdaptlabStatus::Ok
    })
}

/// Synthesizes `P` for the pair `(A, B)` (row-major, `n x n` and `n x m`)
/// and decay rate `lambda`. Writes `P` (row-major, `n x n`) and the
/// certificate's maximal projected eigenvalue.
///
/// # Safety
/// `a`, `b`, `p_out` must hold `n*n`, `n*m`, `n*n` doubles; `residual_out`
/// may be NULL.
#[no_mangle]
pub unsafe extern "C" fn adaptlab_synthesize_p(
    a: *const f64,
    b: *const f64,
    n: usize,
    m: usize,
    lambda: f64,
    seed: u64,
    p_out: *mut f64,
    residual_out: *mut f64,
) -> AdaptlabStatus {
    guard(|| {
        if a.is_null() || b.is_null() || p_out.is_null() {
            return fail(AdaptlabStatus::NullPointer, "null argument");
        }
        if n == 0 || m == 0 {
            return fail(AdaptlabStatus::Dimension, "n and m must be positive");
        }
        let am = DMatrix::from_row_slice(n, n, std::slice::from_raw_parts(a, n * n));
        let bm = DMatrix::from_row_slice(n, m, std::slice::from_raw_parts(b, n * m));
        match synthesize_p(&am, &bm, lambda, seed) {
            Ok(cert) => {
                let out = std::slice::from_raw_parts_mut(p_out, n * n);
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = cert.p[(i, j)];
                    }
                }
                if !residual_out.is_null() {
                    *residual_out = cert.max_eig_residual;
                }
                AdaptlabStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
