//! C ABI for the `mcckf` library.
//!
//! Objects are handed out as opaque pointers and released with the matching
//! `*_free` function. Every entry point returns an [`MccStatus`]; on failure
//! the message is available from [`mcc_last_error`] on the same thread.
//! Panics are caught at the boundary and reported as `MCC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mcckf::bench::{run_experiment_with, ExecOptions, ExperimentConfig};
use mcckf::filters::{Filter, FilterSpec, PreparedModel};
use mcckf::model::{satellite_model_with, LtiModel, Pi0Choice};
use mcckf::sim::{load_trajectory, save_trajectory, simulate, ShotNoiseSpec, Trajectory};
use mcckf::{Error, Mat};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MccStatus {
    Ok = 0,
    /// Null pointer, bad length, invalid UTF-8 or an out-of-range argument.
    InvalidArgument = 1,
    /// Unknown filter name, bad strategy or malformed JSON.
    Config = 2,
    InvalidModel = 3,
    /// Factorization or inversion failed, or a non-finite value appeared.
    Numerical = 4,
    /// Measurement or trajectory data does not fit the model.
    Data = 5,
    Io = 6,
    Panic = 7,
}

impl From<&Error> for MccStatus {
    fn from(e: &Error) -> Self {
        match e.root() {
            Error::InvalidArgument(_) => MccStatus::InvalidArgument,
            Error::Config(_) | Error::Json { .. } => MccStatus::Config,
            Error::InvalidModel(_) => MccStatus::InvalidModel,
            Error::Shape { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::Asymmetric { .. }
            | Error::Singular { .. }
            | Error::NonFinite(_) => MccStatus::Numerical,
            Error::Data(_) => MccStatus::Data,
            Error::Io { .. } => MccStatus::Io,
            Error::Step { .. } | Error::Run { .. } => unreachable!("root() strips wrappers"),
        }
    }
}

pub struct MccModel(LtiModel);

pub struct MccTrajectory(Trajectory);

pub struct MccFilter(Filter);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(MccStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(MccStatus::from(&e), e.to_string())
    }
}

fn bad_arg(msg: impl Into<String>) -> Failure {
    Failure(MccStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MccStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MccStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            MccStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| bad_arg(format!("{what} is null")))
}

unsafe fn obj_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| bad_arg(format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(bad_arg(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| bad_arg(format!("{what} is not valid UTF-8")))
}

unsafe fn out_ptr<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(bad_arg("output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(bad_arg("output buffer is null"));
    }
    if len != src.len() {
        return Err(bad_arg(format!(
            "output buffer holds {len} values, expected {}",
            src.len()
        )));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mcc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mcc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds the four-state satellite model. With `zero_pi0` set the filters start
/// from a known initial state instead of the default prior.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn mcc_model_satellite(
    q4: f64,
    zero_pi0: bool,
    out: *mut *mut MccModel,
) -> MccStatus {
    guard(|| {
        let pi0 = if zero_pi0 {
            Pi0Choice::Zero
        } else {
            Pi0Choice::Paper
        };
        out_ptr(out, MccModel(satellite_model_with(q4, pi0)?))
    })
}

/// Parses a model from JSON with keys `F`, `G`, `H`, `Q`, `R`, `x0_mean`
/// and `Pi0`.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcc_model_from_json(
    json: *const c_char,
    out: *mut *mut MccModel,
) -> MccStatus {
    guard(|| {
        let json = text(json, "json")?;
        let model: LtiModel = serde_json::from_str(json).map_err(|source| Error::Json {
            context: "model".into(),
            source,
        })?;
        model.validate()?;
        out_ptr(out, MccModel(model))
    })
}

/// # Safety
/// `model` must be a valid handle or null.
#[no_mangle]
pub unsafe extern "C" fn mcc_model_dims(
    model: *const MccModel,
    state_dim: *mut usize,
    meas_dim: *mut usize,
) -> MccStatus {
    guard(|| {
        let m = &obj(model, "model")?.0;
        if state_dim.is_null() || meas_dim.is_null() {
            return Err(bad_arg("output pointer is null"));
        }
        *state_dim = m.state_dim();
        *meas_dim = m.meas_dim();
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mcc_model_free(model: *mut MccModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulates `n_steps` transitions with a fixed seed. When `shot_noise` is
/// set, the default impulsive noise is added to the measurements.
///
/// # Safety
/// `model` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcc_trajectory_simulate(
    model: *const MccModel,
    n_steps: usize,
    shot_noise: bool,
    seed: u64,
    out: *mut *mut MccTrajectory,
) -> MccStatus {
    guard(|| {
        let m = &obj(model, "model")?.0;
        let shot = shot_noise.then(ShotNoiseSpec::default);
        out_ptr(
            out,
            MccTrajectory(simulate(m, n_steps, shot.as_ref(), seed)?),
        )
    })
}

/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mcc_trajectory_load(
    path: *const c_char,
    out: *mut *mut MccTrajectory,
) -> MccStatus {
    guard(|| {
        let path = PathBuf::from(text(path, "path")?);
        out_ptr(out, MccTrajectory(load_trajectory(&path)?))
    })
}

/// # Safety
/// `traj` must be a valid handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mcc_trajectory_save(
    traj: *const MccTrajectory,
    path: *const c_char,
) -> MccStatus {
    guard(|| {
        let t = &obj(traj, "trajectory")?.0;
        let path = PathBuf::from(text(path, "path")?);
        Ok(save_trajectory(t, &path)?)
    })
}

/// Number of time instants, `N + 1`.
///
/// # Safety
/// `traj` must be a valid handle and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn mcc_trajectory_len(
    traj: *const MccTrajectory,
    len: *mut usize,
) -> MccStatus {
    guard(|| {
        let t = &obj(traj, "trajectory")?.0;
        *obj_mut(len, "len")? = t.measurements.len();
        Ok(())
    })
}

/// Copies `y_k` into `buf`, which must hold exactly the measurement dimension.
///
/// # Safety
/// `traj` must be a valid handle and `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mcc_trajectory_measurement(
    traj: *const MccTrajectory,
    k: usize,
    buf: *mut f64,
    len: usize,
) -> MccStatus {
    guard(|| {
        let t = &obj(traj, "trajectory")?.0;
        let y = t
            .measurements
            .get(k)
            .ok_or_else(|| bad_arg(format!("instant {k} out of range")))?;
        copy_out(y, buf, len)
    })
}

/// Copies `x_k` into `buf`, which must hold exactly the state dimension.
///
/// # Safety
/// `traj` must be a valid handle and `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mcc_trajectory_state(
    traj: *const MccTrajectory,
    k: usize,
    buf: *mut f64,
    len: usize,
) -> MccStatus {
    guard(|| {
        let t = &obj(traj, "trajectory")?.0;
        let x = t
            .states
            .get(k)
            .ok_or_else(|| bad_arg(format!("instant {k} out of range")))?;
        copy_out(x, buf, len)
    })
}

/// # Safety
/// `traj` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mcc_trajectory_free(traj: *mut MccTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Creates a filter from a JSON spec such as
/// `{"name": "alg1", "strategy": "constant", "lambda": 0.6}`.
/// The model is copied; the handle may be freed afterwards.
///
/// # Safety
/// `model` must be a valid handle, `spec_json` nul-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mcc_filter_new(
    model: *const MccModel,
    spec_json: *const c_char,
    out: *mut *mut MccFilter,
) -> MccStatus {
    guard(|| {
        let m = &obj(model, "model")?.0;
        let spec: FilterSpec =
            serde_json::from_str(text(spec_json, "spec_json")?).map_err(|source| Error::Json {
                context: "filter spec".into(),
                source,
            })?;
        let filter = Filter::new(spec, PreparedModel::new(m)?)?;
        out_ptr(out, MccFilter(filter))
    })
}

/// Processes one measurement. On success the kernel weight used at this step
/// is written to `lambda` when it is not null.
///
/// # Safety
/// `filter` must be a valid handle and `y` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mcc_filter_step(
    filter: *mut MccFilter,
    y: *const f64,
    len: usize,
    lambda: *mut f64,
) -> MccStatus {
    guard(|| {
        let f = &mut obj_mut(filter, "filter")?.0;
        if y.is_null() {
            return Err(bad_arg("y is null"));
        }
        let y = Mat::column(std::slice::from_raw_parts(y, len));
        let l = f.advance(&y)?;
        if let Some(out) = lambda.as_mut() {
            *out = l;
        }
        Ok(())
    })
}

/// Copies the current one-step prediction into `buf`.
///
/// # Safety
/// `filter` must be a valid handle and `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mcc_filter_prediction(
    filter: *const MccFilter,
    buf: *mut f64,
    len: usize,
) -> MccStatus {
    guard(|| {
        let f = &obj(filter, "filter")?.0;
        copy_out(f.prediction().as_slice(), buf, len)
    })
}

/// Displacement rank of a Chandrasekhar filter; -1 for Riccati filters.
///
/// # Safety
/// `filter` must be a valid handle and `alpha` writable.
#[no_mangle]
pub unsafe extern "C" fn mcc_filter_alpha(filter: *const MccFilter, alpha: *mut i64) -> MccStatus {
    guard(|| {
        let f = &obj(filter, "filter")?.0;
        *obj_mut(alpha, "alpha")? = f.alpha().map_or(-1, |a| a as i64);
        Ok(())
    })
}

/// # Safety
/// `filter` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mcc_filter_free(filter: *mut MccFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Runs a Monte Carlo experiment described by `config_json` and returns the
/// report as JSON in `report`, to be released with [`mcc_string_free`].
/// `threads` above 1 parallelizes the accuracy pass.
///
/// # Safety
/// `config_json` must be nul-terminated and `report` writable.
#[no_mangle]
pub unsafe extern "C" fn mcc_run_experiment_json(
    config_json: *const c_char,
    threads: usize,
    report: *mut *mut c_char,
) -> MccStatus {
    guard(|| {
        if report.is_null() {
            return Err(bad_arg("report is null"));
        }
        let cfg: ExperimentConfig = serde_json::from_str(text(config_json, "config_json")?)
            .map_err(|source| Error::Json {
                context: "experiment config".into(),
                source,
            })?;
        let r = run_experiment_with(&cfg, ExecOptions { threads })?;
        let json = serde_json::to_string(&r).expect("report serializes");
        *report = CString::new(json).expect("JSON has no nul").into_raw();
        Ok(())
    })
}
