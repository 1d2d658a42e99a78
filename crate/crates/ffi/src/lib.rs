//! C ABI over `pathlse`.
//!
//! Every fallible function returns a [`PathlseStatus`]. On failure a
//! description is kept per thread and can be read with
//! [`pathlse_last_error_message`]. Handles are opaque and must be released
//! with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use pathlse::estimator::{compute_stats, pathwise_lse, theoretical_lse, CaseTag};
use pathlse::fbm::TimeGrid;
use pathlse::model::SpectralModel;
use pathlse::simulate::{ModeTrajectorySet, SimOptions, Simulator};
use pathlse::special::{compensation_delta, delta_prime, delta_second, lower_incomplete_gamma, DeltaParams};
use pathlse::{Error, ErrorKind};

/// Default bound on `μ·h` for internal refinement in [`pathlse_simulate`].
pub const PATHLSE_DEFAULT_MAX_MU_DT: f64 = 0.02;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathlseStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Numeric = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathlseCase {
    Unique = 0,
    None = 1,
    TwoRootsGreater = 2,
    ConstantMap = 3,
}

impl From<CaseTag> for PathlseCase {
    fn from(c: CaseTag) -> Self {
        match c {
            CaseTag::Unique => PathlseCase::Unique,
            CaseTag::None => PathlseCase::None,
            CaseTag::TwoRootsGreater => PathlseCase::TwoRootsGreater,
            CaseTag::ConstantMap => PathlseCase::ConstantMap,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PathlseEstimate {
    pub value: f64,
    pub case_tag: PathlseCase,
    pub iterations: usize,
    pub residual: f64,
    pub r_at_zero: f64,
}

/// Opaque spectral model.
pub struct PathlseModel(SpectralModel);

/// Opaque set of mode trajectories on a uniform grid.
pub struct PathlseTrajectories(ModeTrajectorySet);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(e: Error) -> PathlseStatus {
    let status = match e.kind() {
        ErrorKind::Validation => PathlseStatus::Validation,
        ErrorKind::Numeric => PathlseStatus::Numeric,
    };
    set_error(e.to_string());
    status
}

fn null(what: &str) -> PathlseStatus {
    set_error(format!("null pointer: {what}"));
    PathlseStatus::NullPointer
}

fn guard<F: FnOnce() -> PathlseStatus>(f: F) -> PathlseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == PathlseStatus::Ok {
                set_error(String::new());
            }
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            PathlseStatus::Panic
        }
    }
}

unsafe fn opt_slice<'a>(data: *const f64, len: usize) -> Option<&'a [f64]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(data, len))
    }
}

/// Message for the most recent failure on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn pathlse_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pathlse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Δ, Δ′ and Δ″ at `(mu, hurst, horizon)`. Any output pointer may be null.
///
/// # Safety
/// Non-null output pointers must be valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn pathlse_delta(
    mu: f64,
    hurst: f64,
    horizon: f64,
    out_delta: *mut f64,
    out_prime: *mut f64,
    out_second: *mut f64,
) -> PathlseStatus {
    guard(|| match DeltaParams::new(mu, hurst, horizon) {
        Ok(p) => {
            if !out_delta.is_null() {
                *out_delta = compensation_delta(&p);
            }
            if !out_prime.is_null() {
                *out_prime = delta_prime(&p);
            }
            if !out_second.is_null() {
                *out_second = delta_second(&p);
            }
            PathlseStatus::Ok
        }
        Err(e) => fail(e),
    })
}

/// Lower incomplete gamma function γ(h, x).
///
/// # Safety
/// `out` must be valid for a write of one `double`.
#[no_mangle]
pub unsafe extern "C" fn pathlse_lower_incomplete_gamma(h: f64, x: f64, out: *mut f64) -> PathlseStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        match lower_incomplete_gamma(h, x) {
            Ok(v) => {
                *out = v;
                PathlseStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn emit_model(result: pathlse::Result<SpectralModel>, out: *mut *mut PathlseModel) -> PathlseStatus {
    match result {
        Ok(m) => {
            *out = Box::into_raw(Box::new(PathlseModel(m)));
            PathlseStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// One-dimensional heat operator on (0, 1), `n` modes. `initial` may be null
/// when `n_initial` is 0.
///
/// # Safety
/// `initial` must point to `n_initial` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pathlse_model_heat1d(
    n: usize,
    lambda1: f64,
    lambda2: f64,
    hurst: f64,
    horizon: f64,
    initial: *const f64,
    n_initial: usize,
    out: *mut *mut PathlseModel,
) -> PathlseStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let Some(ic) = opt_slice(initial, n_initial) else {
            return null("initial");
        };
        emit_model(SpectralModel::heat1d(n, lambda1, lambda2, hurst, horizon, ic), out)
    })
}

/// Two-dimensional heat operator on the unit square, the `n` lowest modes.
///
/// # Safety
/// As for [`pathlse_model_heat1d`].
#[no_mangle]
pub unsafe extern "C" fn pathlse_model_heat2d(
    n: usize,
    lambda1: f64,
    lambda2: f64,
    hurst: f64,
    horizon: f64,
    initial: *const f64,
    n_initial: usize,
    out: *mut *mut PathlseModel,
) -> PathlseStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let Some(ic) = opt_slice(initial, n_initial) else {
            return null("initial");
        };
        emit_model(
            SpectralModel::heat2d_lowest(n, lambda1, lambda2, hurst, horizon, ic),
            out,
        )
    })
}

/// Model from explicit eigenvalue sequences. `lambda_true` may be NaN when
/// unknown; simulation then fails with a validation error.
///
/// # Safety
/// `alpha` and `beta` must point to `n` doubles, `initial` to `n_initial`.
#[no_mangle]
pub unsafe extern "C" fn pathlse_model_raw(
    alpha: *const f64,
    beta: *const f64,
    n: usize,
    hurst: f64,
    horizon: f64,
    lambda_true: f64,
    initial: *const f64,
    n_initial: usize,
    out: *mut *mut PathlseModel,
) -> PathlseStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let (Some(a), Some(b)) = (opt_slice(alpha, n), opt_slice(beta, n)) else {
            return null("alpha/beta");
        };
        let Some(ic) = opt_slice(initial, n_initial) else {
            return null("initial");
        };
        let lambda = (!lambda_true.is_nan()).then_some(lambda_true);
        emit_model(
            SpectralModel::raw(a.to_vec(), b.to_vec(), hurst, horizon, lambda, ic),
            out,
        )
    })
}

/// Number of modes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathlse_model_n_modes(model: *const PathlseModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_modes())
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pathlse_model_free(model: *mut PathlseModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulate all modes of `model` on `n_steps` uniform steps. Run `run` of
/// master `seed` gives the same paths as the CLI and Monte Carlo harness.
/// `max_mu_dt = 0` disables internal refinement.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pathlse_simulate(
    model: *const PathlseModel,
    n_steps: usize,
    seed: u64,
    run: usize,
    max_mu_dt: f64,
    out: *mut *mut PathlseTrajectories,
) -> PathlseStatus {
    guard(|| {
        let Some(m) = model.as_ref() else { return null("model") };
        if out.is_null() {
            return null("out");
        }
        let opts = if max_mu_dt == 0.0 {
            SimOptions { max_mu_dt: None }
        } else if max_mu_dt > 0.0 && max_mu_dt.is_finite() {
            SimOptions {
                max_mu_dt: Some(max_mu_dt),
            }
        } else {
            return fail(Error::invalid(
                "max_mu_dt",
                format!("must be non-negative, got {max_mu_dt}"),
            ));
        };
        let result = TimeGrid::new(m.0.horizon, n_steps)
            .and_then(|g| Simulator::new(&m.0, g, opts))
            .and_then(|s| s.run(seed, run));
        match result {
            Ok(t) => {
                *out = Box::into_raw(Box::new(PathlseTrajectories(t)));
                PathlseStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Wrap observed data: `values` holds `n_modes` rows of `n_steps + 1` samples
/// each, mode-major, on a uniform grid over `[0, horizon]`.
///
/// # Safety
/// `values` must point to `n_modes * (n_steps + 1)` doubles.
#[no_mangle]
pub unsafe extern "C" fn pathlse_trajectories_from_values(
    horizon: f64,
    n_steps: usize,
    values: *const f64,
    n_modes: usize,
    out: *mut *mut PathlseTrajectories,
) -> PathlseStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let grid = match TimeGrid::new(horizon, n_steps) {
            Ok(g) => g,
            Err(e) => return fail(e),
        };
        let points = grid.n_points();
        let Some(flat) = opt_slice(values, n_modes * points) else {
            return null("values");
        };
        let rows = flat.chunks(points).map(<[f64]>::to_vec).collect();
        match ModeTrajectorySet::from_values(grid, rows) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(PathlseTrajectories(t)));
                PathlseStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathlse_trajectories_n_modes(traj: *const PathlseTrajectories) -> usize {
    traj.as_ref().map_or(0, |t| t.0.n_modes())
}

/// Grid points per mode (`n_steps + 1`), or 0 for a null handle.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pathlse_trajectories_n_points(traj: *const PathlseTrajectories) -> usize {
    traj.as_ref().map_or(0, |t| t.0.grid.n_points())
}

/// Copy mode `mode` (0-based) into `buf`, which must hold at least
/// `pathlse_trajectories_n_points` doubles.
///
/// # Safety
/// `traj` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pathlse_trajectories_copy_mode(
    traj: *const PathlseTrajectories,
    mode: usize,
    buf: *mut f64,
    len: usize,
) -> PathlseStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else { return null("traj") };
        if buf.is_null() {
            return null("buf");
        }
        let Some(row) = t.0.values.get(mode) else {
            return fail(Error::invalid(
                "mode",
                format!("{mode} out of range for {} modes", t.0.n_modes()),
            ));
        };
        if len < row.len() {
            set_error(format!("buffer holds {len} values, {} needed", row.len()));
            return PathlseStatus::BufferTooSmall;
        }
        slice::from_raw_parts_mut(buf, row.len()).copy_from_slice(row);
        PathlseStatus::Ok
    })
}

/// # Safety
/// `traj` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pathlse_trajectories_free(traj: *mut PathlseTrajectories) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

unsafe fn stats_of(
    model: *const PathlseModel,
    traj: *const PathlseTrajectories,
) -> Result<pathlse::estimator::SufficientStats, PathlseStatus> {
    let m = model.as_ref().ok_or_else(|| null("model"))?;
    let t = traj.as_ref().ok_or_else(|| null("traj"))?;
    let n = t.0.n_modes();
    let model = if n == m.0.n_modes() {
        Ok(m.0.clone())
    } else {
        m.0.truncated(n)
    };
    model.and_then(|mm| compute_stats(&t.0, &mm)).map_err(fail)
}

/// Pathwise least-squares estimate from the trajectories, which must not have
/// more modes than the model.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pathlse_estimate(
    model: *const PathlseModel,
    traj: *const PathlseTrajectories,
    out: *mut PathlseEstimate,
) -> PathlseStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let stats = match stats_of(model, traj) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match pathwise_lse(&stats) {
            Ok(r) => {
                *out = PathlseEstimate {
                    value: r.value,
                    case_tag: r.case.into(),
                    iterations: r.iterations,
                    residual: r.residual,
                    r_at_zero: r.r_at_zero,
                };
                PathlseStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Least-squares estimate that uses the true drift in its compensation term.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pathlse_theoretical_estimate(
    model: *const PathlseModel,
    traj: *const PathlseTrajectories,
    lambda_true: f64,
    out: *mut f64,
) -> PathlseStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let stats = match stats_of(model, traj) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match theoretical_lse(&stats, lambda_true) {
            Ok(v) => {
                *out = v;
                PathlseStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
