//! C ABI for the leader-consensus simulator.
//!
//! Objects cross the boundary as opaque handles created by constructors such
//! as `lc_system_from_json` and released with the matching `lc_*_free`.
//! Every fallible call returns an [`LcStatus`]; on failure
//! [`lc_last_error_message`] describes the error for the calling thread.
//! Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use leader_consensus::cli::{EXIT_ASSUMPTION, EXIT_CONFIG};
use leader_consensus::linalg::{self, Matrix};
use leader_consensus::protocol::{self, ProtocolSystem, DEFAULT_RATIO_GRID};
use leader_consensus::sde::{self, EnsembleResult, Trajectory};
use leader_consensus::switching::{self, SwitchedSystem};
use leader_consensus::{rng, Error, RunConfig};

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Configuration could not be parsed or validated.
    Config = 3,
    /// The system cannot be assembled because an assumption fails.
    Assumption = 4,
    /// Numerical failure: non-finite state, singular system, quadrature.
    Numeric = 5,
    /// Index or buffer length out of range.
    OutOfRange = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: LcStatus, message: impl AsRef<str>) -> LcStatus {
    set_error(message.as_ref());
    status
}

fn from_error(e: impl Into<Error>) -> LcStatus {
    let e: Error = e.into();
    let message = e.to_string();
    let status = match leader_consensus::cli::Failure::from(e).code {
        EXIT_CONFIG => LcStatus::Config,
        EXIT_ASSUMPTION => LcStatus::Assumption,
        _ => LcStatus::Numeric,
    };
    fail(status, message)
}

fn guard(f: impl FnOnce() -> LcStatus) -> LcStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == LcStatus::Ok {
                set_error("");
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(LcStatus::Panic, format!("panic: {msg}"))
        }
    }
}

enum Plan {
    Fixed(Box<ProtocolSystem>),
    Switched(Box<SwitchedSystem>),
}

/// A configured system, fixed or switching, with its assumption report.
pub struct LcSystem {
    config: RunConfig,
    plan: Plan,
    report_json: CString,
    all_hold: bool,
    /// `rho` for a fixed topology, `nu` for a switching one.
    margin: f64,
}

/// One recorded path.
pub struct LcTrajectory {
    inner: Trajectory,
}

/// Monte Carlo estimates with the envelope comparison.
pub struct LcEnsemble {
    inner: EnsembleResult,
    envelope: Vec<f64>,
    violations: i64,
}

fn build_system(config: RunConfig) -> Result<LcSystem, Error> {
    let horizon = config.sim.horizon;
    if config.is_switching() {
        let sys = config.switched_system()?;
        let report = switching::inspect_switching(
            sys.set(),
            sys.gamma(),
            sys.h(),
            sys.g(),
            horizon,
            DEFAULT_RATIO_GRID,
        )?;
        Ok(LcSystem {
            report_json: json_cstring(&report),
            all_hold: report.all_hold(),
            margin: report.nu,
            plan: Plan::Switched(Box::new(sys)),
            config,
        })
    } else {
        let topology = config.leader_topologies()?.remove(0);
        let sys = match config.protocol_system() {
            Ok(s) => s,
            Err(_) if !leader_consensus::graph::is_globally_reachable(&topology, 0) => {
                return Err(leader_consensus::SwitchingError::NotReachable(1).into());
            }
            Err(e) => return Err(e),
        };
        let report = protocol::check_assumptions(&sys, horizon, DEFAULT_RATIO_GRID)?;
        Ok(LcSystem {
            report_json: json_cstring(&report),
            all_hold: report.all_hold(),
            margin: report.rho,
            plan: Plan::Fixed(Box::new(sys)),
            config,
        })
    }
}

fn json_cstring<T: serde::Serialize>(v: &T) -> CString {
    CString::new(serde_json::to_string(v).expect("report serializes")).unwrap_or_default()
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, LcStatus> {
    if p.is_null() {
        return Err(fail(LcStatus::NullPointer, "null string argument"));
    }
    // SAFETY: the caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| fail(LcStatus::InvalidUtf8, e.to_string()))
}

macro_rules! deref {
    ($p:expr) => {{
        if $p.is_null() {
            return fail(
                LcStatus::NullPointer,
                concat!("null pointer: ", stringify!($p)),
            );
        }
        // SAFETY: non-null handles come from this library.
        unsafe { &*$p }
    }};
}

macro_rules! out {
    ($p:expr, $v:expr) => {{
        if $p.is_null() {
            return fail(
                LcStatus::NullPointer,
                concat!("null pointer: ", stringify!($p)),
            );
        }
        // SAFETY: checked non-null; the caller provides writable storage.
        unsafe { *$p = $v };
    }};
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON run configuration and assembles the system.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_system_from_json(
    json: *const c_char,
    out: *mut *mut LcSystem,
) -> LcStatus {
    guard(|| {
        if out.is_null() {
            return fail(LcStatus::NullPointer, "null pointer: out");
        }
        // SAFETY: checked non-null.
        unsafe { *out = ptr::null_mut() };
        // SAFETY: forwarded caller contract.
        let text = match unsafe { str_arg(json) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        let config = match RunConfig::from_json_str(text) {
            Ok(c) => c,
            Err(e) => return from_error(e),
        };
        match build_system(config) {
            Ok(sys) => {
                out!(out, Box::into_raw(Box::new(sys)));
                LcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a system; null is ignored.
///
/// # Safety
/// `sys` must come from [`lc_system_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lc_system_free(sys: *mut LcSystem) {
    if !sys.is_null() {
        // SAFETY: ownership returns from C.
        drop(unsafe { Box::from_raw(sys) });
    }
}

/// Number of followers.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_system_followers(sys: *const LcSystem, out: *mut usize) -> LcStatus {
    guard(|| {
        let s = deref!(sys);
        out!(out, s.config.n());
        LcStatus::Ok
    })
}

/// `1` when the system uses a topology set.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_system_is_switching(sys: *const LcSystem, out: *mut i32) -> LcStatus {
    guard(|| {
        let s = deref!(sys);
        out!(out, i32::from(matches!(s.plan, Plan::Switched(_))));
        LcStatus::Ok
    })
}

/// Largest eigenvalue of the Lyapunov solution `P`; fixed topologies only.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_system_lambda_max_p(sys: *const LcSystem, out: *mut f64) -> LcStatus {
    guard(|| {
        let s = deref!(sys);
        match &s.plan {
            Plan::Fixed(p) => {
                out!(out, p.lyapunov().lambda_max);
                LcStatus::Ok
            }
            Plan::Switched(_) => fail(
                LcStatus::Config,
                "lambda_max_P is defined for a fixed topology",
            ),
        }
    })
}

/// Assumption outcome: `all_hold` is 1 when every applicable assumption
/// holds, `margin` is `rho` (fixed) or `nu` (switching).
///
/// # Safety
/// `sys` must be a live handle; `all_hold` and `margin` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_system_check(
    sys: *const LcSystem,
    all_hold: *mut i32,
    margin: *mut f64,
) -> LcStatus {
    guard(|| {
        let s = deref!(sys);
        out!(all_hold, i32::from(s.all_hold));
        out!(margin, s.margin);
        LcStatus::Ok
    })
}

/// Assumption report as a JSON string owned by the handle.
///
/// # Safety
/// `sys` must be a live handle and `out` writable; the string lives as long
/// as the handle.
#[no_mangle]
pub unsafe extern "C" fn lc_system_report_json(
    sys: *const LcSystem,
    out: *mut *const c_char,
) -> LcStatus {
    guard(|| {
        let s = deref!(sys);
        out!(out, s.report_json.as_ptr());
        LcStatus::Ok
    })
}

/// One seeded path with the configured `sim` settings.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_simulate(
    sys: *const LcSystem,
    out: *mut *mut LcTrajectory,
) -> LcStatus {
    guard(|| {
        let s = deref!(sys);
        let c = &s.config;
        let res = match &s.plan {
            Plan::Fixed(p) => sde::simulate(p, &c.leader, &c.sim, &c.eps0).map_err(Error::from),
            Plan::Switched(w) => {
                switching::simulate_switching(w, &c.leader, &c.sim, &c.eps0).map_err(Error::from)
            }
        };
        match res {
            Ok(inner) => {
                out!(out, Box::into_raw(Box::new(LcTrajectory { inner })));
                LcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `traj` must come from [`lc_simulate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lc_trajectory_free(traj: *mut LcTrajectory) {
    if !traj.is_null() {
        // SAFETY: ownership returns from C.
        drop(unsafe { Box::from_raw(traj) });
    }
}

/// Number of recorded times.
///
/// # Safety
/// `traj` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_trajectory_len(traj: *const LcTrajectory, out: *mut usize) -> LcStatus {
    guard(|| {
        let t = deref!(traj);
        out!(out, t.inner.times.len());
        LcStatus::Ok
    })
}

/// Record `k`: its time, `V`, and `ε = (x*, v*)` copied into `eps`
/// (`eps_len` must be `2n`).
///
/// # Safety
/// `traj` must be a live handle, `time` and `v` writable and `eps` hold
/// `eps_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_trajectory_record(
    traj: *const LcTrajectory,
    k: usize,
    time: *mut f64,
    v: *mut f64,
    eps: *mut f64,
    eps_len: usize,
) -> LcStatus {
    guard(|| {
        let t = deref!(traj);
        let Some(state) = t.inner.states.get(k) else {
            return fail(LcStatus::OutOfRange, format!("record {k} out of range"));
        };
        let e = state.eps();
        if eps.is_null() {
            return fail(LcStatus::NullPointer, "null pointer: eps");
        }
        if eps_len != e.len() {
            return fail(
                LcStatus::OutOfRange,
                format!("eps buffer holds {eps_len} values, need {}", e.len()),
            );
        }
        out!(time, t.inner.times[k]);
        out!(v, t.inner.v[k]);
        // SAFETY: the caller provides `eps_len` writable doubles.
        unsafe { ptr::copy_nonoverlapping(e.as_ptr(), eps, e.len()) };
        LcStatus::Ok
    })
}

/// Monte Carlo ensemble of `runs` paths (0 means the configured size) and
/// its envelope comparison.
///
/// # Safety
/// `sys` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_monte_carlo(
    sys: *const LcSystem,
    runs: usize,
    out: *mut *mut LcEnsemble,
) -> LcStatus {
    guard(|| {
        let s = deref!(sys);
        let c = &s.config;
        let runs = if runs == 0 { c.ensemble.runs } else { runs };
        let res: Result<(EnsembleResult, Option<sde::EnvelopeComparison>), Error> = (|| {
            Ok(match &s.plan {
                Plan::Fixed(p) => {
                    let res = sde::monte_carlo(p, &c.leader, &c.sim, &c.eps0, runs)?;
                    let cmp = if s.margin > 0.0 {
                        Some(sde::compare_envelope(&res, p, s.margin, &c.eps0)?)
                    } else {
                        None
                    };
                    (res, cmp)
                }
                Plan::Switched(w) => {
                    let res =
                        switching::monte_carlo_switching(w, &c.leader, &c.sim, &c.eps0, runs)?;
                    let cmp = if s.margin > 0.0 {
                        Some(switching::compare_switching_envelope(
                            &res, w, s.margin, &c.eps0,
                        )?)
                    } else {
                        None
                    };
                    (res, cmp)
                }
            })
        })();
        match res {
            Ok((inner, cmp)) => {
                let (envelope, violations) = match cmp {
                    Some(c) => (c.envelope, c.violations as i64),
                    None => (vec![f64::NAN; inner.times.len()], -1),
                };
                out!(
                    out,
                    Box::into_raw(Box::new(LcEnsemble {
                        inner,
                        envelope,
                        violations,
                    }))
                );
                LcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `ens` must come from [`lc_monte_carlo`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lc_ensemble_free(ens: *mut LcEnsemble) {
    if !ens.is_null() {
        // SAFETY: ownership returns from C.
        drop(unsafe { Box::from_raw(ens) });
    }
}

/// Number of recorded times.
///
/// # Safety
/// `ens` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_ensemble_len(ens: *const LcEnsemble, out: *mut usize) -> LcStatus {
    guard(|| {
        let e = deref!(ens);
        out!(out, e.inner.times.len());
        LcStatus::Ok
    })
}

/// Row `k` of the ensemble table: time, mean `||ε||²`, its standard error,
/// envelope (NaN when unavailable) and mean `V`.
///
/// # Safety
/// `ens` must be a live handle and every output pointer writable.
#[no_mangle]
pub unsafe extern "C" fn lc_ensemble_row(
    ens: *const LcEnsemble,
    k: usize,
    time: *mut f64,
    ms_error: *mut f64,
    stderr: *mut f64,
    envelope: *mut f64,
    v_mean: *mut f64,
) -> LcStatus {
    guard(|| {
        let e = deref!(ens);
        let r = &e.inner;
        if k >= r.times.len() {
            return fail(LcStatus::OutOfRange, format!("row {k} out of range"));
        }
        out!(time, r.times[k]);
        out!(ms_error, r.ms_error[k]);
        out!(stderr, r.stderr[k]);
        out!(envelope, e.envelope[k]);
        out!(v_mean, r.v_mean[k]);
        LcStatus::Ok
    })
}

/// Number of recorded times where the mean `V` exceeds the envelope by more
/// than three standard errors; `-1` when no envelope is available.
///
/// # Safety
/// `ens` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lc_ensemble_envelope_violations(
    ens: *const LcEnsemble,
    out: *mut i64,
) -> LcStatus {
    guard(|| {
        let e = deref!(ens);
        out!(out, e.violations);
        LcStatus::Ok
    })
}

/// Standard normal draw for `(seed, run, step, channel)`.
#[no_mangle]
pub extern "C" fn lc_gaussian(seed: u64, run: u32, step: u64, channel: u32) -> f64 {
    rng::gaussian_stream(seed, run, step, channel)
}

/// Solves `M^T P + P M = I` for a row-major `n x n` matrix `m`, writing `P`
/// row-major into `p` and the Frobenius residual into `residual` (may be
/// null).
///
/// # Safety
/// `m` and `p` must each hold `n * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn lc_solve_lyapunov(
    m: *const f64,
    n: usize,
    p: *mut f64,
    residual: *mut f64,
) -> LcStatus {
    guard(|| {
        if m.is_null() || p.is_null() {
            return fail(LcStatus::NullPointer, "null matrix pointer");
        }
        if n == 0 || n > leader_consensus::graph::MAX_FOLLOWERS {
            return fail(
                LcStatus::OutOfRange,
                format!("dimension {n} outside 1..=64"),
            );
        }
        // SAFETY: the caller provides `n * n` readable doubles.
        let data = unsafe { std::slice::from_raw_parts(m, n * n) }.to_vec();
        let sol = Matrix::from_row_major(n, n, data)
            .map_err(Error::from)
            .and_then(|mat| linalg::solve_lyapunov(&mat).map_err(Error::from));
        match sol {
            Ok(sol) => {
                for i in 0..n {
                    for j in 0..n {
                        // SAFETY: `i * n + j < n * n` writable doubles.
                        unsafe { *p.add(i * n + j) = sol.p[(i, j)] };
                    }
                }
                if !residual.is_null() {
                    // SAFETY: checked non-null.
                    unsafe { *residual = sol.residual };
                }
                LcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
