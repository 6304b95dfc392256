//! Euler-Maruyama integration of the leader/follower system and of its error
//! dynamics, Monte Carlo ensembles and the comparison against the
//! mean-square envelope.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::protocol::{
    Coupling, GainSchedule, LeaderDynamics, ProtocolError, ProtocolSystem, DEFAULT_QUAD_POINTS,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdeError {
    #[error("state left the finite range at t = {t}{}", run.map(|r| format!(" (run {r})")).unwrap_or_default())]
    NonFinite { t: f64, run: Option<u32> },
    #[error("invalid simulation settings: {0}")]
    Config(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    /// Integrate followers and leader, then subtract.
    #[default]
    FullSystem,
    /// Integrate the error SDE directly.
    ErrorDynamics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    pub record_stride: usize,
    #[serde(default)]
    pub mode: SimMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 200.0,
            seed: 1,
            record_stride: 10,
            mode: SimMode::FullSystem,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SdeError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SdeError::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(SdeError::Config(format!(
                "horizon must be nonnegative, got {}",
                self.horizon
            )));
        }
        if self.horizon > 0.0 && self.horizon < self.dt {
            return Err(SdeError::Config(format!(
                "horizon {} shorter than dt {}",
                self.horizon, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(SdeError::Config("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of Euler steps covering `[0, horizon]`.
    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    /// Recorded times `k * dt * record_stride`.
    pub fn record_times(&self) -> Vec<f64> {
        let stride = self.record_stride as u64;
        (0..=self.steps())
            .step_by(self.record_stride)
            .map(|k| {
                debug_assert_eq!(k % stride, 0);
                k as f64 * self.dt
            })
            .collect()
    }
}

/// Full follower/leader state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub x0: f64,
    pub v0: f64,
}

/// Consensus error `(x*, v*)`, with the full state when it is being tracked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorState {
    pub x_star: Vec<f64>,
    pub v_star: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full: Option<FullState>,
}

impl ErrorState {
    /// Error-only state from `ε = (x*, v*)`.
    pub fn from_error(eps: &[f64]) -> Self {
        let n = eps.len() / 2;
        Self {
            x_star: eps[..n].to_vec(),
            v_star: eps[n..2 * n].to_vec(),
            full: None,
        }
    }

    /// Full state consistent with `ε` for the given leader start.
    pub fn from_error_with_leader(eps: &[f64], x0: f64, v0: f64) -> Self {
        let n = eps.len() / 2;
        let full = FullState {
            x: eps[..n].iter().map(|e| e + x0).collect(),
            v: eps[n..2 * n].iter().map(|e| e + v0).collect(),
            x0,
            v0,
        };
        Self::from_full(full)
    }

    pub fn from_full(full: FullState) -> Self {
        let x_star = full.x.iter().map(|x| x - full.x0).collect();
        let v_star = full.v.iter().map(|v| v - full.v0).collect();
        Self {
            x_star,
            v_star,
            full: Some(full),
        }
    }

    pub fn n(&self) -> usize {
        self.x_star.len()
    }

    /// `ε = (x*, v*)` as one vector.
    pub fn eps(&self) -> Vec<f64> {
        let mut e = self.x_star.clone();
        e.extend_from_slice(&self.v_star);
        e
    }

    pub fn norm_sq(&self) -> f64 {
        self.x_star.iter().chain(&self.v_star).map(|v| v * v).sum()
    }

    fn is_finite(&self) -> bool {
        let e = self
            .x_star
            .iter()
            .chain(&self.v_star)
            .all(|v| v.is_finite());
        e && self.full.as_ref().is_none_or(|f| {
            f.x0.is_finite() && f.v0.is_finite() && f.x.iter().chain(&f.v).all(|v| v.is_finite())
        })
    }
}

/// Recorded path of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ErrorState>,
    /// Lyapunov function value at each record.
    pub v: Vec<f64>,
    /// Active topology (1-based) at each record, switching runs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_index: Option<Vec<usize>>,
}

/// Monte Carlo estimates per recorded time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    /// Mean of `||ε(t)||²`.
    pub ms_error: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean of the Lyapunov function.
    pub v_mean: Vec<f64>,
    pub v_stderr: Vec<f64>,
    pub runs: usize,
}

/// Gains and couplings shared by the fixed and switched integrators.
pub(crate) struct Plant<'a> {
    pub couplings: &'a [Coupling],
    pub gamma: f64,
    pub h: GainSchedule,
    pub g: GainSchedule,
    pub leader: LeaderDynamics,
    /// Weight of the Lyapunov function.
    pub weight: &'a Matrix,
    /// Active coupling index (0-based) for a step starting at `t`.
    pub select: &'a (dyn Fn(f64) -> usize + Sync),
}

/// One Euler-Maruyama step of the full system, in place.
#[allow(clippy::too_many_arguments)]
fn advance_full(
    c: &Coupling,
    gamma: f64,
    h: f64,
    g: f64,
    a0: f64,
    s: &mut FullState,
    dt: f64,
    noise: &[f64],
    lbx: &mut [f64],
) {
    let n = c.n();
    let sq = dt.sqrt();
    for (i, out) in lbx.iter_mut().enumerate() {
        *out = c.lb.row(i).iter().zip(&s.x).map(|(a, x)| a * x).sum();
    }
    for i in 0..n {
        let coupling = -h * lbx[i] + h * c.b[i] * s.x0;
        s.x[i] += (coupling + g * s.v[i]) * dt + h * c.diffusion[i] * sq * noise[i];
        s.v[i] += (a0 + gamma * coupling) * dt + gamma * h * c.diffusion[i] * sq * noise[n + i];
    }
    s.x0 += g * s.v0 * dt;
    s.v0 += a0 * dt;
}

/// One Euler-Maruyama step of the error dynamics, in place.
#[allow(clippy::too_many_arguments)]
fn advance_error(
    c: &Coupling,
    gamma: f64,
    h: f64,
    g: f64,
    eps: &mut [f64],
    dt: f64,
    noise: &[f64],
    lbx: &mut [f64],
) {
    let n = c.n();
    let sq = dt.sqrt();
    let (x, v) = eps.split_at_mut(n);
    for (i, out) in lbx.iter_mut().enumerate() {
        *out = c.lb.row(i).iter().zip(x.iter()).map(|(a, x)| a * x).sum();
    }
    for i in 0..n {
        let coupling = -h * lbx[i];
        x[i] += (coupling + g * v[i]) * dt + h * c.diffusion[i] * sq * noise[i];
        v[i] += gamma * coupling * dt + gamma * h * c.diffusion[i] * sq * noise[n + i];
    }
}

fn check_noise(n: usize, noise: &[f64]) -> Result<(), SdeError> {
    if noise.len() != 2 * n {
        return Err(SdeError::Config(format!(
            "expected {} noise draws, got {}",
            2 * n,
            noise.len()
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn step_full_with(
    c: &Coupling,
    gamma: f64,
    h: &GainSchedule,
    g: &GainSchedule,
    leader: &LeaderDynamics,
    s: &ErrorState,
    t: f64,
    dt: f64,
    noise: &[f64],
) -> Result<ErrorState, SdeError> {
    let n = c.n();
    check_noise(n, noise)?;
    let mut full = s.full.clone().unwrap_or_else(|| {
        ErrorState::from_error_with_leader(&s.eps(), 0.0, 0.0)
            .full
            .unwrap()
    });
    let mut lbx = vec![0.0; n];
    advance_full(
        c,
        gamma,
        h.eval(t),
        g.eval(t),
        leader.a0.eval(t),
        &mut full,
        dt,
        noise,
        &mut lbx,
    );
    let out = ErrorState::from_full(full);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(SdeError::NonFinite {
            t: t + dt,
            run: None,
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn step_error_with(
    c: &Coupling,
    gamma: f64,
    h: &GainSchedule,
    g: &GainSchedule,
    s: &ErrorState,
    t: f64,
    dt: f64,
    noise: &[f64],
) -> Result<ErrorState, SdeError> {
    let n = c.n();
    check_noise(n, noise)?;
    let mut eps = s.eps();
    let mut lbx = vec![0.0; n];
    advance_error(
        c,
        gamma,
        h.eval(t),
        g.eval(t),
        &mut eps,
        dt,
        noise,
        &mut lbx,
    );
    let out = ErrorState::from_error(&eps);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(SdeError::NonFinite {
            t: t + dt,
            run: None,
        })
    }
}

/// Euler-Maruyama step of followers and leader. `noise` holds the `W1`
/// increments in `[0, n)` and the `W2` increments in `[n, 2n)`, as standard
/// normals. A state without a full part starts from `x0 = v0 = 0`.
pub fn step_full(
    sys: &ProtocolSystem,
    leader: &LeaderDynamics,
    s: &ErrorState,
    t: f64,
    dt: f64,
    noise: &[f64],
) -> Result<ErrorState, SdeError> {
    step_full_with(
        sys.coupling(),
        sys.gamma(),
        sys.h(),
        sys.g(),
        leader,
        s,
        t,
        dt,
        noise,
    )
}

/// Euler-Maruyama step of the error SDE with the same noise layout as
/// [`step_full`].
pub fn step_error(
    sys: &ProtocolSystem,
    s: &ErrorState,
    t: f64,
    dt: f64,
    noise: &[f64],
) -> Result<ErrorState, SdeError> {
    step_error_with(
        sys.coupling(),
        sys.gamma(),
        sys.h(),
        sys.g(),
        s,
        t,
        dt,
        noise,
    )
}

/// Runs one path and hands `(t, ε, full state, active coupling)` to `record`
/// at every recorded step.
pub(crate) fn run_path(
    plant: &Plant<'_>,
    cfg: &SimConfig,
    eps0: &[f64],
    run: u32,
    mut record: impl FnMut(f64, &[f64], Option<&FullState>, usize),
) -> Result<(), SdeError> {
    let n = plant.couplings[0].n();
    let steps = cfg.steps();
    let stride = cfg.record_stride as u64;
    let mut noise = vec![0.0; 2 * n];
    let mut lbx = vec![0.0; n];
    let mut eps = eps0.to_vec();
    let mut full = match cfg.mode {
        SimMode::FullSystem => {
            ErrorState::from_error_with_leader(eps0, plant.leader.x0_init, plant.leader.v0_init)
                .full
        }
        SimMode::ErrorDynamics => None,
    };
    record(0.0, &eps, full.as_ref(), (plant.select)(0.0));

    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let c = &plant.couplings[(plant.select)(t)];
        let (h, g) = (plant.h.eval(t), plant.g.eval(t));
        rng::fill_normals(cfg.seed, run, k, &mut noise);
        match full.as_mut() {
            Some(f) => {
                advance_full(
                    c,
                    plant.gamma,
                    h,
                    g,
                    plant.leader.a0.eval(t),
                    f,
                    cfg.dt,
                    &noise,
                    &mut lbx,
                );
                for i in 0..n {
                    eps[i] = f.x[i] - f.x0;
                    eps[n + i] = f.v[i] - f.v0;
                }
            }
            None => advance_error(c, plant.gamma, h, g, &mut eps, cfg.dt, &noise, &mut lbx),
        }
        if eps.iter().any(|v| !v.is_finite()) {
            return Err(SdeError::NonFinite {
                t: (k + 1) as f64 * cfg.dt,
                run: Some(run),
            });
        }
        if (k + 1) % stride == 0 {
            let t_next = (k + 1) as f64 * cfg.dt;
            record(t_next, &eps, full.as_ref(), (plant.select)(t_next));
        }
    }
    Ok(())
}

pub(crate) fn simulate_plant(
    plant: &Plant<'_>,
    cfg: &SimConfig,
    eps0: &[f64],
    with_sigma: bool,
) -> Result<Trajectory, SdeError> {
    cfg.validate()?;
    check_eps0(plant.couplings[0].n(), eps0)?;
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        v: Vec::new(),
        sigma_index: with_sigma.then(Vec::new),
    };
    run_path(plant, cfg, eps0, 0, |t, eps, full, active| {
        traj.times.push(t);
        let mut state = ErrorState::from_error(eps);
        state.full = full.cloned();
        traj.states.push(state);
        traj.v.push(plant.weight.quad_form(eps));
        if let Some(idx) = traj.sigma_index.as_mut() {
            idx.push(active + 1);
        }
    })?;
    Ok(traj)
}

fn check_eps0(n: usize, eps0: &[f64]) -> Result<(), SdeError> {
    if eps0.len() != 2 * n {
        return Err(SdeError::Config(format!(
            "initial error has length {}, expected {}",
            eps0.len(),
            2 * n
        )));
    }
    if eps0.iter().any(|v| !v.is_finite()) {
        return Err(SdeError::Config("initial error must be finite".into()));
    }
    Ok(())
}

/// Runs per batch before the ordered reduction.
const ENSEMBLE_BATCH: usize = 64;

pub(crate) fn monte_carlo_plant(
    plant: &Plant<'_>,
    cfg: &SimConfig,
    eps0: &[f64],
    runs: usize,
) -> Result<EnsembleResult, SdeError> {
    cfg.validate()?;
    check_eps0(plant.couplings[0].n(), eps0)?;
    if runs < 2 {
        return Err(SdeError::Config(format!(
            "need at least 2 runs, got {runs}"
        )));
    }
    if runs > u32::MAX as usize {
        return Err(SdeError::Config(format!("too many runs: {runs}")));
    }
    let times = cfg.record_times();
    let len = times.len();
    // Welford accumulators, fed in ascending run order.
    let mut mean_e = vec![0.0; len];
    let mut m2_e = vec![0.0; len];
    let mut mean_v = vec![0.0; len];
    let mut m2_v = vec![0.0; len];
    let mut seen = 0usize;

    for start in (0..runs).step_by(ENSEMBLE_BATCH) {
        let end = (start + ENSEMBLE_BATCH).min(runs);
        let batch: Vec<Result<Vec<(f64, f64)>, SdeError>> = (start..end)
            .into_par_iter()
            .map(|run| {
                let mut out = Vec::with_capacity(len);
                run_path(plant, cfg, eps0, run as u32, |_, eps, _, _| {
                    let e: f64 = eps.iter().map(|v| v * v).sum();
                    out.push((e, plant.weight.quad_form(eps)));
                })?;
                Ok(out)
            })
            .collect();
        for path in batch {
            let path = path?;
            seen += 1;
            let w = seen as f64;
            for (i, (e, v)) in path.into_iter().enumerate() {
                let d = e - mean_e[i];
                mean_e[i] += d / w;
                m2_e[i] += d * (e - mean_e[i]);
                let d = v - mean_v[i];
                mean_v[i] += d / w;
                m2_v[i] += d * (v - mean_v[i]);
            }
        }
    }
    let m = runs as f64;
    let se = |m2: &[f64]| -> Vec<f64> {
        m2.iter()
            .map(|s| (s.max(0.0) / (m - 1.0)).sqrt() / m.sqrt())
            .collect()
    };
    Ok(EnsembleResult {
        times,
        stderr: se(&m2_e),
        v_stderr: se(&m2_v),
        ms_error: mean_e,
        v_mean: mean_v,
        runs,
    })
}

fn single_select(_: f64) -> usize {
    0
}

fn fixed_plant<'a>(sys: &'a ProtocolSystem, leader: &LeaderDynamics) -> Plant<'a> {
    Plant {
        couplings: std::slice::from_ref(sys.coupling()),
        gamma: sys.gamma(),
        h: *sys.h(),
        g: *sys.g(),
        leader: *leader,
        weight: sys.ptilde(),
        select: &single_select,
    }
}

/// Single seeded path recorded every `record_stride` steps; `V = ε^T P~ ε`.
pub fn simulate(
    sys: &ProtocolSystem,
    leader: &LeaderDynamics,
    cfg: &SimConfig,
    eps0: &[f64],
) -> Result<Trajectory, SdeError> {
    leader.validate()?;
    simulate_plant(&fixed_plant(sys, leader), cfg, eps0, false)
}

/// `runs` independent paths (run index `r` draws from stream `r`).
pub fn monte_carlo(
    sys: &ProtocolSystem,
    leader: &LeaderDynamics,
    cfg: &SimConfig,
    eps0: &[f64],
    runs: usize,
) -> Result<EnsembleResult, SdeError> {
    leader.validate()?;
    monte_carlo_plant(&fixed_plant(sys, leader), cfg, eps0, runs)
}

/// Envelope values and violation flags for an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeComparison {
    pub envelope: Vec<f64>,
    /// `true` where `mean V(t) > envelope(t) + 3 stderr_V(t)`.
    pub flags: Vec<bool>,
    pub violations: usize,
}

impl EnvelopeComparison {
    pub(crate) fn new(res: &EnsembleResult, envelope: Vec<f64>) -> Self {
        let flags: Vec<bool> = res
            .v_mean
            .iter()
            .zip(&res.v_stderr)
            .zip(&envelope)
            .map(|((v, se), env)| *v > env + 3.0 * se)
            .collect();
        let violations = flags.iter().filter(|&&f| f).count();
        Self {
            envelope,
            flags,
            violations,
        }
    }
}

/// Compares the ensemble mean of `V(t)` with the envelope started from
/// `V(0) = ε(0)^T P~ ε(0)`.
pub fn compare_envelope(
    res: &EnsembleResult,
    sys: &ProtocolSystem,
    rho: f64,
    eps0: &[f64],
) -> Result<EnvelopeComparison, SdeError> {
    let env = sys.envelope(rho)?;
    let v0 = sys.lyapunov_value(eps0);
    let envelope = res
        .times
        .iter()
        .map(|&t| env.at(v0, t, DEFAULT_QUAD_POINTS))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EnvelopeComparison::new(res, envelope))
}

/// `time,ms_error,stderr,envelope,V_mean`
pub fn write_ensemble_csv<W: Write>(
    mut w: W,
    res: &EnsembleResult,
    envelope: &[f64],
) -> io::Result<()> {
    writeln!(w, "time,ms_error,stderr,envelope,V_mean")?;
    for ((((t, ms), se), env), v) in res
        .times
        .iter()
        .zip(&res.ms_error)
        .zip(&res.stderr)
        .zip(envelope)
        .zip(&res.v_mean)
    {
        writeln!(w, "{t},{ms},{se},{env},{v}")?;
    }
    Ok(())
}

/// `time,x1*,…,xn*,v1*,…,vn*`, plus `sigma_index` for switching runs.
pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory) -> io::Result<()> {
    let n = traj.states.first().map_or(0, ErrorState::n);
    let mut header = vec!["time".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}*")));
    header.extend((1..=n).map(|i| format!("v{i}*")));
    if traj.sigma_index.is_some() {
        header.push("sigma_index".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (k, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
        write!(w, "{t}")?;
        for v in s.x_star.iter().chain(&s.v_star) {
            write!(w, ",{v}")?;
        }
        if let Some(idx) = &traj.sigma_index {
            write!(w, ",{}", idx[k])?;
        }
        writeln!(w)?;
    }
    Ok(())
}
