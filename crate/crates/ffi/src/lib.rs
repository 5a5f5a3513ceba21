//! C ABI over the `wrgd` solvers.
//!
//! Complex vectors cross the boundary as interleaved `(re, im)` doubles, so a
//! length-`n` vector is `2n` doubles. Ensembles and traces are opaque handles
//! owned by the caller and released with the matching `_free` function.
//! Every fallible call returns a [`WrgdStatus`]; on failure the message is
//! available from [`wrgd_last_error`] on the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use num_complex::Complex64;
use wrgd::measurement::forward_intensities;
use wrgd::solvers::{dist_phase, solve, spectral_init};
use wrgd::{
    Error, IntensityVector, IterateTrace, MeasurementEnsemble, SolverConfig, SolverKind,
    StepPolicy, Truncation,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WrgdStatus {
    Ok = 0,
    InvalidArgument = 1,
    Numeric = 2,
    DegenerateRetraction = 3,
    Io = 4,
    Format = 5,
    NullPointer = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WrgdSolver {
    Twrgd = 0,
    Trgd = 1,
    Twf = 2,
}

impl From<WrgdSolver> for SolverKind {
    fn from(s: WrgdSolver) -> Self {
        match s {
            WrgdSolver::Twrgd => SolverKind::Twrgd,
            WrgdSolver::Trgd => SolverKind::Trgd,
            WrgdSolver::Twf => SolverKind::Twf,
        }
    }
}

/// Solver settings. Fill with [`wrgd_default_options`] and adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WrgdOptions {
    pub tau0: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub truncated: bool,
    /// Exact line search when true, otherwise the fixed `step`.
    pub exact_step: bool,
    pub step: f64,
    pub max_iters: usize,
    pub mse_tol: f64,
}

impl WrgdOptions {
    fn from_config(cfg: &SolverConfig) -> Self {
        let (exact_step, step) = match cfg.step {
            StepPolicy::ExactLineSearch => (true, 0.0),
            StepPolicy::Fixed(a) => (false, a),
        };
        Self {
            tau0: cfg.truncation.tau0,
            tau1: cfg.truncation.tau1,
            tau2: cfg.truncation.tau2,
            truncated: cfg.truncated,
            exact_step,
            step,
            max_iters: cfg.max_iters,
            mse_tol: cfg.mse_tol,
        }
    }

    fn to_config(self, kind: SolverKind) -> SolverConfig {
        let mut cfg = SolverConfig::for_solver(kind);
        cfg.truncation = Truncation {
            tau0: self.tau0,
            tau1: self.tau1,
            tau2: self.tau2,
        };
        cfg.truncated = self.truncated;
        cfg.step = if self.exact_step {
            StepPolicy::ExactLineSearch
        } else {
            StepPolicy::Fixed(self.step)
        };
        cfg.max_iters = self.max_iters;
        cfg.mse_tol = self.mse_tol;
        cfg
    }
}

/// Opaque set of sensing vectors.
pub struct WrgdEnsemble {
    inner: MeasurementEnsemble,
}

/// Opaque solver trace.
pub struct WrgdTrace {
    inner: IterateTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WrgdStatus {
    match e {
        Error::InvalidArgument(_) => WrgdStatus::InvalidArgument,
        Error::Numeric(_) => WrgdStatus::Numeric,
        Error::DegenerateRetraction(_) => WrgdStatus::DegenerateRetraction,
        Error::Io { .. } => WrgdStatus::Io,
        Error::Format(_) => WrgdStatus::Format,
    }
}

enum Fail {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> WrgdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WrgdStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_last_error(&format!("null pointer passed for {what}"));
            WrgdStatus::NullPointer
        }
        Err(_) => {
            set_last_error("internal panic");
            WrgdStatus::Panic
        }
    }
}

unsafe fn reference<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn doubles<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn doubles_mut<'a>(
    p: *mut f64,
    len: usize,
    what: &'static str,
) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn complex_in(p: *const f64, n: usize, what: &'static str) -> Result<Vec<Complex64>, Fail> {
    let raw = doubles(p, 2 * n, what)?;
    Ok(raw
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect())
}

fn complex_out(src: &[Complex64], dst: &mut [f64]) {
    for (d, s) in dst.chunks_exact_mut(2).zip(src) {
        d[0] = s.re;
        d[1] = s.im;
    }
}

unsafe fn path_in(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got != want {
        return Err(Error::invalid(format!("{what} has length {got}, expected {want}")).into());
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wrgd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wrgd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Draws `m` complex Gaussian sensing vectors of length `n` from `seed`.
#[no_mangle]
pub unsafe extern "C" fn wrgd_ensemble_sample(
    n: usize,
    m: usize,
    seed: u64,
    out: *mut *mut WrgdEnsemble,
) -> WrgdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let inner = MeasurementEnsemble::sample(n, m, seed)?;
        *out = Box::into_raw(Box::new(WrgdEnsemble { inner }));
        Ok(())
    })
}

/// Wraps explicit sensing vectors: `rows` holds `m` rows of `n` complex
/// entries, row-major and interleaved (`2nm` doubles).
#[no_mangle]
pub unsafe extern "C" fn wrgd_ensemble_from_rows(
    n: usize,
    m: usize,
    rows: *const f64,
    out: *mut *mut WrgdEnsemble,
) -> WrgdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let len = n
            .checked_mul(m)
            .ok_or_else(|| Error::invalid("n * m overflows"))?;
        let rows = complex_in(rows, len, "rows")?;
        let inner = MeasurementEnsemble::from_rows(n, m, rows, 0)?;
        *out = Box::into_raw(Box::new(WrgdEnsemble { inner }));
        Ok(())
    })
}

/// Loads an ensemble written by [`wrgd_ensemble_write`].
#[no_mangle]
pub unsafe extern "C" fn wrgd_ensemble_read(
    path: *const c_char,
    out: *mut *mut WrgdEnsemble,
) -> WrgdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let inner = MeasurementEnsemble::read_from(&path_in(path)?)?;
        *out = Box::into_raw(Box::new(WrgdEnsemble { inner }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn wrgd_ensemble_write(
    ens: *const WrgdEnsemble,
    path: *const c_char,
) -> WrgdStatus {
    guard(|| {
        let ens = reference(ens, "ensemble")?;
        ens.inner.write_to(&path_in(path)?)?;
        Ok(())
    })
}

/// Releases an ensemble. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wrgd_ensemble_free(ens: *mut WrgdEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

/// Signal length, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn wrgd_ensemble_n(ens: *const WrgdEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.inner.n())
}

/// Number of measurements, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn wrgd_ensemble_m(ens: *const WrgdEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.inner.m())
}

/// `y_k = |a_k^* x|^2`. `x` has `n` complex entries, `y_out` room for `m`.
#[no_mangle]
pub unsafe extern "C" fn wrgd_forward_intensities(
    ens: *const WrgdEnsemble,
    x: *const f64,
    y_out: *mut f64,
) -> WrgdStatus {
    guard(|| {
        let ens = &reference(ens, "ensemble")?.inner;
        let x = complex_in(x, ens.n(), "x")?;
        let out = doubles_mut(y_out, ens.m(), "y_out")?;
        let y = forward_intensities(ens, &x)?;
        out.copy_from_slice(y.values());
        Ok(())
    })
}

/// Truncated spectral estimate of the signal from `m` intensities.
#[no_mangle]
pub unsafe extern "C" fn wrgd_spectral_init(
    ens: *const WrgdEnsemble,
    y: *const f64,
    y_len: usize,
    power_iters: usize,
    seed: u64,
    z_out: *mut f64,
) -> WrgdStatus {
    guard(|| {
        let ens = &reference(ens, "ensemble")?.inner;
        check_len(y_len, ens.m(), "y")?;
        let y = IntensityVector::new(doubles(y, y_len, "y")?.to_vec())?;
        let out = doubles_mut(z_out, 2 * ens.n(), "z_out")?;
        let z = spectral_init(ens, &y, power_iters, seed)?;
        complex_out(&z, out);
        Ok(())
    })
}

/// Default settings for `solver`.
#[no_mangle]
pub unsafe extern "C" fn wrgd_default_options(
    solver: WrgdSolver,
    out: *mut WrgdOptions,
) -> WrgdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = WrgdOptions::from_config(&SolverConfig::for_solver(solver.into()));
        Ok(())
    })
}

/// Runs `solver` from `z0`. `x_true` may be null, in which case errors are
/// not tracked and only the iteration budget stops the run. `options` may be
/// null for the solver defaults. A run that stops early on a numeric problem
/// still returns `Ok` with a trace; see [`wrgd_trace_failure`].
#[no_mangle]
pub unsafe extern "C" fn wrgd_solve(
    solver: WrgdSolver,
    ens: *const WrgdEnsemble,
    y: *const f64,
    y_len: usize,
    x_true: *const f64,
    z0: *const f64,
    options: *const WrgdOptions,
    out: *mut *mut WrgdTrace,
) -> WrgdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let ens = &reference(ens, "ensemble")?.inner;
        let kind = SolverKind::from(solver);
        check_len(y_len, ens.m(), "y")?;
        let y = IntensityVector::new(doubles(y, y_len, "y")?.to_vec())?;
        let z0 = complex_in(z0, ens.n(), "z0")?;
        let x = if x_true.is_null() {
            None
        } else {
            Some(complex_in(x_true, ens.n(), "x_true")?)
        };
        let cfg = match options.as_ref() {
            Some(o) => o.to_config(kind),
            None => SolverConfig::for_solver(kind),
        };
        let inner = solve(kind, ens, &y, x.as_deref(), &z0, &cfg)?;
        *out = Box::into_raw(Box::new(WrgdTrace { inner }));
        Ok(())
    })
}

/// Releases a trace. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wrgd_trace_free(trace: *mut WrgdTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of recorded iterates (updates + 1), or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn wrgd_trace_len(trace: *const WrgdTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.records.len())
}

/// Number of updates performed, or 0 for null.
#[no_mangle]
pub unsafe extern "C" fn wrgd_trace_iters(trace: *const WrgdTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.iters)
}

#[no_mangle]
pub unsafe extern "C" fn wrgd_trace_converged(trace: *const WrgdTrace) -> bool {
    trace.as_ref().is_some_and(|t| t.inner.converged)
}

/// Late-stage contraction estimate, NaN when unavailable.
#[no_mangle]
pub unsafe extern "C" fn wrgd_trace_nu_hat(trace: *const WrgdTrace) -> f64 {
    trace
        .as_ref()
        .and_then(|t| t.inner.nu_hat)
        .unwrap_or(f64::NAN)
}

/// Copies the relative error of every recorded iterate into `out`, which must
/// hold [`wrgd_trace_len`] doubles.
#[no_mangle]
pub unsafe extern "C" fn wrgd_trace_rel_mse(
    trace: *const WrgdTrace,
    out: *mut f64,
    len: usize,
) -> WrgdStatus {
    guard(|| {
        let t = &reference(trace, "trace")?.inner;
        check_len(len, t.records.len(), "out")?;
        let out = doubles_mut(out, len, "out")?;
        for (o, r) in out.iter_mut().zip(&t.records) {
            *o = r.rel_mse;
        }
        Ok(())
    })
}

/// Copies the final estimate (`n` complex entries) into `z_out`.
#[no_mangle]
pub unsafe extern "C" fn wrgd_trace_estimate(
    trace: *const WrgdTrace,
    z_out: *mut f64,
    n: usize,
) -> WrgdStatus {
    guard(|| {
        let t = &reference(trace, "trace")?.inner;
        check_len(n, t.estimate.len(), "z_out")?;
        complex_out(&t.estimate, doubles_mut(z_out, 2 * n, "z_out")?);
        Ok(())
    })
}

/// Reason the run stopped early, or null. Valid while the trace lives.
#[no_mangle]
pub unsafe extern "C" fn wrgd_trace_failure(trace: *const WrgdTrace) -> *const c_char {
    thread_local! {
        static HOLD: RefCell<Option<CString>> = const { RefCell::new(None) };
    }
    let Some(msg) = trace.as_ref().and_then(|t| t.inner.failure.as_deref()) else {
        return ptr::null();
    };
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    HOLD.with(|h| {
        let mut h = h.borrow_mut();
        *h = Some(c);
        h.as_ref().map_or(ptr::null(), |c| c.as_ptr())
    })
}

/// Writes the per-iterate CSV.
#[no_mangle]
pub unsafe extern "C" fn wrgd_trace_write_csv(
    trace: *const WrgdTrace,
    path: *const c_char,
) -> WrgdStatus {
    guard(|| {
        let t = &reference(trace, "trace")?.inner;
        let path = path_in(path)?;
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        t.write_csv(file).map_err(|e| Error::io(&path, e))?;
        Ok(())
    })
}

/// `min_phi ||z - e^{i phi} x||` for two length-`n` complex vectors.
#[no_mangle]
pub unsafe extern "C" fn wrgd_dist_phase(
    z: *const f64,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> WrgdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let z = complex_in(z, n, "z")?;
        let x = complex_in(x, n, "x")?;
        *out = dist_phase(&z, &x)?;
        Ok(())
    })
}
