//! C ABI for `ssm-gpo`.
//!
//! Every function returns an [`SsmStatus`]; on failure a description is kept
//! per thread and can be copied out with [`ssm_last_error_message`]. Handles
//! are opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ssm_gpo::direct::{self, DirectConfig};
use ssm_gpo::gpo::{run_gpo, GpoConfig, GpoResult};
use ssm_gpo::kalman::kalman_loglik;
use ssm_gpo::particle::{estimate_loglik, Resampling};
use ssm_gpo::ssm::{model_by_name, simulate, BoxDomain, ObservationSeries, StateSpaceModel};
use ssm_gpo::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DomainViolation = 3,
    DimensionMismatch = 4,
    UnknownModel = 5,
    Degenerate = 6,
    Numerical = 7,
    Io = 8,
    Panic = 9,
}

/// Resampling scheme for the particle filter.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsmResampling {
    Systematic = 0,
    Multinomial = 1,
}

impl From<SsmResampling> for Resampling {
    fn from(r: SsmResampling) -> Self {
        match r {
            SsmResampling::Systematic => Resampling::Systematic,
            SsmResampling::Multinomial => Resampling::Multinomial,
        }
    }
}

/// A state-space model.
pub struct SsmModel {
    inner: Box<dyn StateSpaceModel>,
}

/// Outcome of a GP optimisation run.
pub struct SsmGpoResult {
    inner: GpoResult,
}

/// Scalar settings for [`ssm_gpo_run`]. Fill with [`ssm_gpo_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SsmGpoOptions {
    pub iterations: usize,
    pub particles: usize,
    pub zeta: f64,
    pub seed: u64,
    pub direct_max_evals: usize,
    pub resampling: SsmResampling,
}

/// Objective for [`ssm_direct_maximize`]: receives a point of length `dim`.
pub type SsmObjective =
    Option<extern "C" fn(theta: *const f64, dim: usize, user_data: *mut c_void) -> f64>;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> SsmStatus {
    match e {
        Error::DomainViolation { .. } => SsmStatus::DomainViolation,
        Error::DimensionMismatch { .. } => SsmStatus::DimensionMismatch,
        Error::InvalidInput(_)
        | Error::InsufficientData { .. }
        | Error::UnsupportedDimension(_) => SsmStatus::InvalidInput,
        Error::UnknownModel(_) => SsmStatus::UnknownModel,
        Error::Degenerate => SsmStatus::Degenerate,
        Error::Conditioning { .. } => SsmStatus::Numerical,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => SsmStatus::Io,
    }
}

struct NullPointer(&'static str);

enum Failure {
    Null(NullPointer),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<NullPointer> for Failure {
    fn from(e: NullPointer) -> Self {
        Failure::Null(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            SsmStatus::Ok
        }
        Ok(Err(Failure::Null(NullPointer(what)))) => {
            set_error(format!("null pointer: {what}"));
            SsmStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            SsmStatus::Panic
        }
    }
}

unsafe fn slice_in<'a>(
    p: *const f64,
    len: usize,
    what: &'static str,
) -> Result<&'a [f64], NullPointer> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(NullPointer(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(
    p: *mut f64,
    len: usize,
    what: &'static str,
) -> Result<&'a mut [f64], NullPointer> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(NullPointer(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(m: *const SsmModel) -> Result<&'a SsmModel, NullPointer> {
    m.as_ref().ok_or(NullPointer("model"))
}

fn write_out<T>(p: *mut T, v: T, what: &'static str) -> Result<(), NullPointer> {
    if p.is_null() {
        return Err(NullPointer(what));
    }
    unsafe { p.write(v) };
    Ok(())
}

/// Copies the last error of this thread into `buf` (NUL-terminated, truncated
/// to `len`). Returns the full message length excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ssm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a model by registry name (`"lgss"` or `"hullwhite"`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssm_model_new(name: *const c_char, out: *mut *mut SsmModel) -> SsmStatus {
    guard(|| {
        if name.is_null() {
            return Err(NullPointer("name").into());
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Error::InvalidInput("model name is not UTF-8".into()))?;
        let model = model_by_name(name)?;
        write_out(
            out,
            Box::into_raw(Box::new(SsmModel { inner: model })),
            "out",
        )?;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`ssm_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssm_model_free(model: *mut SsmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of parameters, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssm_model_param_dim(model: *const SsmModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.param_dim())
}

/// Copies the parameter box into `lower` and `upper` (each of length `dim`).
///
/// # Safety
/// Pointers must be valid for `dim` elements.
#[no_mangle]
pub unsafe extern "C" fn ssm_model_domain(
    model: *const SsmModel,
    lower: *mut f64,
    upper: *mut f64,
    dim: usize,
) -> SsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let dom = m.inner.domain();
        if dim != dom.dim() {
            return Err(Error::DimensionMismatch {
                expected: dom.dim(),
                got: dim,
            }
            .into());
        }
        slice_out(lower, dim, "lower")?.copy_from_slice(dom.lower());
        slice_out(upper, dim, "upper")?.copy_from_slice(dom.upper());
        Ok(())
    })
}

/// Simulates `steps` states and observations. `states` may be null.
///
/// # Safety
/// `theta` must hold `dim` values; `observations` (and `states` if non-null)
/// must have room for `steps` values.
#[no_mangle]
pub unsafe extern "C" fn ssm_simulate(
    model: *const SsmModel,
    theta: *const f64,
    dim: usize,
    steps: usize,
    seed: u64,
    states: *mut f64,
    observations: *mut f64,
) -> SsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let theta = slice_in(theta, dim, "theta")?;
        let sim = simulate(m.inner.as_ref(), theta, steps, seed)?;
        slice_out(observations, steps, "observations")?.copy_from_slice(&sim.observations);
        if !states.is_null() {
            slice_out(states, steps, "states")?.copy_from_slice(&sim.states);
        }
        Ok(())
    })
}

/// One particle-filter log-likelihood estimate. A degenerate run stores
/// `-INFINITY` and sets `*degenerate`; the status is still `Ok`.
///
/// # Safety
/// `theta` must hold `dim` values and `y` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn ssm_pf_loglik(
    model: *const SsmModel,
    theta: *const f64,
    dim: usize,
    y: *const f64,
    len: usize,
    particles: usize,
    seed: u64,
    resampling: SsmResampling,
    loglik: *mut f64,
    degenerate: *mut bool,
) -> SsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let theta = slice_in(theta, dim, "theta")?;
        let y = ObservationSeries::new(slice_in(y, len, "y")?.to_vec())?;
        let e = estimate_loglik(
            m.inner.as_ref(),
            theta,
            &y,
            particles,
            seed,
            resampling.into(),
        )?;
        write_out(loglik, e.value, "loglik")?;
        if !degenerate.is_null() {
            degenerate.write(e.degenerate);
        }
        Ok(())
    })
}

/// Exact log-likelihood of the linear Gaussian model.
///
/// # Safety
/// `y` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn ssm_kalman_loglik(
    theta: f64,
    y: *const f64,
    len: usize,
    loglik: *mut f64,
) -> SsmStatus {
    guard(|| {
        let dom = BoxDomain::new(vec![-1.0], vec![1.0])?;
        dom.check(&[theta])?;
        let y = ObservationSeries::new(slice_in(y, len, "y")?.to_vec())?;
        write_out(loglik, kalman_loglik(theta, &y), "loglik")?;
        Ok(())
    })
}

/// Default settings: 50 iterations, 1000 particles, ζ = 0.01, seed 0.
///
/// # Safety
/// `options` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssm_gpo_options_default(options: *mut SsmGpoOptions) -> SsmStatus {
    guard(|| {
        write_out(
            options,
            SsmGpoOptions {
                iterations: 50,
                particles: 1000,
                zeta: 0.01,
                seed: 0,
                direct_max_evals: 500,
                resampling: SsmResampling::Systematic,
            },
            "options",
        )?;
        Ok(())
    })
}

/// Runs GP optimisation from `theta1` and returns a result handle.
///
/// # Safety
/// `theta1` must hold `dim` values, `y` must hold `len` values and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssm_gpo_run(
    model: *const SsmModel,
    y: *const f64,
    len: usize,
    theta1: *const f64,
    dim: usize,
    options: *const SsmGpoOptions,
    out: *mut *mut SsmGpoResult,
) -> SsmStatus {
    guard(|| {
        let m = model_ref(model)?;
        let opts = options.as_ref().ok_or(NullPointer("options"))?;
        let y = ObservationSeries::new(slice_in(y, len, "y")?.to_vec())?;
        let theta1 = slice_in(theta1, dim, "theta1")?.to_vec();
        let mut cfg = GpoConfig::new(opts.iterations, opts.particles, theta1, opts.seed);
        cfg.zeta = opts.zeta;
        cfg.resampling = opts.resampling.into();
        cfg.direct.max_evals = opts.direct_max_evals;
        cfg.final_max_evals = opts.direct_max_evals;
        let r = run_gpo(m.inner.as_ref(), &y, &cfg)?;
        write_out(
            out,
            Box::into_raw(Box::new(SsmGpoResult { inner: r })),
            "out",
        )?;
        Ok(())
    })
}

/// Releases a result. Null is ignored.
///
/// # Safety
/// `result` must come from [`ssm_gpo_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssm_gpo_result_free(result: *mut SsmGpoResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of iterations performed, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssm_gpo_result_len(result: *const SsmGpoResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.history.len())
}

/// Copies the final estimate and its posterior mean.
///
/// # Safety
/// `theta` must have room for `dim` values.
#[no_mangle]
pub unsafe extern "C" fn ssm_gpo_result_estimate(
    result: *const SsmGpoResult,
    theta: *mut f64,
    dim: usize,
    mu: *mut f64,
) -> SsmStatus {
    guard(|| {
        let r = &result.as_ref().ok_or(NullPointer("result"))?.inner;
        if dim != r.theta_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: r.theta_hat.len(),
                got: dim,
            }
            .into());
        }
        slice_out(theta, dim, "theta")?.copy_from_slice(&r.theta_hat);
        if !mu.is_null() {
            mu.write(r.mu_hat);
        }
        Ok(())
    })
}

/// Copies iterate `k` (0-based) and the log-likelihood value recorded for it.
///
/// # Safety
/// `theta` must have room for `dim` values.
#[no_mangle]
pub unsafe extern "C" fn ssm_gpo_result_iterate(
    result: *const SsmGpoResult,
    k: usize,
    theta: *mut f64,
    dim: usize,
    loglik: *mut f64,
) -> SsmStatus {
    guard(|| {
        let r = &result.as_ref().ok_or(NullPointer("result"))?.inner;
        let n = r.history.len();
        if k >= n {
            return Err(Error::InvalidInput(format!("iterate {k} outside 0..{n}")).into());
        }
        let t = &r.history.thetas()[k];
        if dim != t.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                got: dim,
            }
            .into());
        }
        slice_out(theta, dim, "theta")?.copy_from_slice(t);
        if !loglik.is_null() {
            loglik.write(r.history.values()[k]);
        }
        Ok(())
    })
}

/// Maximizes `objective` over the box `[lower, upper]` with DIRECT.
///
/// # Safety
/// `lower`, `upper` and `theta` must hold `dim` values; `objective` must be
/// safe to call with `user_data`.
#[no_mangle]
pub unsafe extern "C" fn ssm_direct_maximize(
    objective: SsmObjective,
    user_data: *mut c_void,
    lower: *const f64,
    upper: *const f64,
    dim: usize,
    max_evals: usize,
    theta: *mut f64,
    value: *mut f64,
) -> SsmStatus {
    guard(|| {
        let f = objective.ok_or(NullPointer("objective"))?;
        let dom = BoxDomain::new(
            slice_in(lower, dim, "lower")?.to_vec(),
            slice_in(upper, dim, "upper")?.to_vec(),
        )?;
        if max_evals == 0 {
            return Err(Error::InvalidInput("max_evals must be positive".into()).into());
        }
        let cfg = DirectConfig {
            max_evals,
            ..DirectConfig::default()
        };
        let r = direct::maximize(|t| f(t.as_ptr(), t.len(), user_data), &dom, &cfg);
        slice_out(theta, dim, "theta")?.copy_from_slice(&r.theta);
        write_out(value, r.value, "value")?;
        Ok(())
    })
}
