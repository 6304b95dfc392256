//! Gain schedules, leader dynamics, the error-SDE coefficients and the
//! checks on the convergence conditions.

use serde::{Deserialize, Serialize};

use crate::graph::{self, LeaderTopology};
use crate::linalg::{self, LinalgError, LyapunovSolution, Matrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("gamma must lie in (0, 1), got {0}")]
    Gamma(f64),
    #[error("invalid gain schedule: {0}")]
    Gain(String),
    #[error("invalid leader dynamics: {0}")]
    Leader(String),
    #[error("envelope quadrature unstable at t = {t}: {coarse:e} vs refined {fine:e}")]
    QuadratureUnstable { t: f64, coarse: f64, fine: f64 },
    #[error("decay margin rho must be positive, got {0}")]
    MissingRho(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Positive time-varying gain. `Constant(c)` behaves as a power law with
/// exponent zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainSchedule {
    /// `c / (t + t0)^p`
    PowerLaw {
        c: f64,
        t0: f64,
        p: f64,
    },
    Constant {
        c: f64,
    },
}

impl GainSchedule {
    pub fn power_law(c: f64, t0: f64, p: f64) -> Result<Self, ProtocolError> {
        let s = Self::PowerLaw { c, t0, p };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(c: f64) -> Result<Self, ProtocolError> {
        let s = Self::Constant { c };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let ok = match *self {
            Self::PowerLaw { c, t0, p } => {
                c.is_finite() && c > 0.0 && t0.is_finite() && t0 > 0.0 && p.is_finite() && p >= 0.0
            }
            Self::Constant { c } => c.is_finite() && c > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(ProtocolError::Gain(format!("{self:?}")))
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Self::PowerLaw { c, t0, p } => {
                if p == 1.0 {
                    c / (t + t0)
                } else {
                    c / (t + t0).powf(p)
                }
            }
            Self::Constant { c } => c,
        }
    }

    /// Closed-form `∫_s^t h(u) du`.
    pub fn integral(&self, s: f64, t: f64) -> f64 {
        match *self {
            Self::PowerLaw { c, t0, p } => {
                if p == 1.0 {
                    c * ((t + t0) / (s + t0)).ln()
                } else {
                    let q = 1.0 - p;
                    c / q * ((t + t0).powf(q) - (s + t0).powf(q))
                }
            }
            Self::Constant { c } => c * (t - s),
        }
    }

    pub fn coefficient(&self) -> f64 {
        match *self {
            Self::PowerLaw { c, .. } | Self::Constant { c } => c,
        }
    }

    pub fn exponent(&self) -> f64 {
        match *self {
            Self::PowerLaw { p, .. } => p,
            Self::Constant { .. } => 0.0,
        }
    }

    /// `∫_0^∞ h = ∞`, decided from the exponent.
    pub fn integral_diverges(&self) -> bool {
        self.exponent() <= 1.0
    }

    /// `∫_0^∞ h^2 < ∞`, decided from the exponent.
    pub fn square_integrable(&self) -> bool {
        self.exponent() > 0.5
    }

    /// Whether `self / other` is constant in t, and its value.
    fn constant_ratio(&self, other: &Self) -> Option<f64> {
        match (*self, *other) {
            (Self::Constant { c: a }, Self::Constant { c: b }) => Some(a / b),
            (
                Self::PowerLaw {
                    c: a,
                    t0: s0,
                    p: sp,
                },
                Self::PowerLaw {
                    c: b,
                    t0: o0,
                    p: op,
                },
            ) if sp == op && (s0 == o0 || sp == 0.0) => Some(a / b),
            (Self::Constant { c: a }, Self::PowerLaw { c: b, p, .. })
            | (Self::PowerLaw { c: a, p, .. }, Self::Constant { c: b })
                if p == 0.0 =>
            {
                Some(a / b)
            }
            _ => None,
        }
    }

    /// `lim_{t→∞} self(t) / other(t)`, possibly `0` or `+∞`.
    fn ratio_limit(&self, other: &Self) -> f64 {
        let (ps, po) = (self.exponent(), other.exponent());
        if ps < po {
            f64::INFINITY
        } else if ps > po {
            0.0
        } else {
            self.coefficient() / other.coefficient()
        }
    }
}

pub fn eval_gain(s: &GainSchedule, t: f64) -> f64 {
    s.eval(t)
}

/// Leader acceleration input `a0(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Acceleration {
    #[default]
    Zero,
    Constant {
        a: f64,
    },
    /// `amplitude * sin(omega * t + phase)`
    Sinusoid {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
}

impl Acceleration {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Constant { a } => a,
            Self::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).sin(),
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Self::Zero => true,
            Self::Constant { a } => a.is_finite(),
            Self::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude.is_finite() && omega.is_finite() && phase.is_finite(),
        }
    }
}

/// Leader double integrator `x0' = g v0`, `v0' = a0`. The velocity gain `g`
/// is the protocol's own `g` and lives on [`ProtocolSystem`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LeaderDynamics {
    #[serde(default)]
    pub a0: Acceleration,
    #[serde(default)]
    pub x0_init: f64,
    #[serde(default)]
    pub v0_init: f64,
}

impl LeaderDynamics {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.a0.is_finite() && self.x0_init.is_finite() && self.v0_init.is_finite() {
            Ok(())
        } else {
            Err(ProtocolError::Leader(format!("{self:?}")))
        }
    }
}

/// How the per-agent noise intensities aggregate into the diagonal of `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionMode {
    /// `G_ii^2 = sigma_0i^2 b_i^2 + Σ_j sigma_ji^2 a_ij^2`
    #[default]
    Faithful,
    /// `G_ii^2 = b_i^2 + Σ_j sigma_ji^2 a_ij^2`
    PaperLiteral,
}

/// Diagonal entries of `G` for a topology.
pub fn diffusion_diagonal(t: &LeaderTopology, mode: DiffusionMode) -> Vec<f64> {
    let g = t.followers();
    let sigma = t.noise();
    (1..=t.n())
        .map(|i| {
            let b = t.leader_weights()[i - 1];
            let leader = match mode {
                DiffusionMode::Faithful => {
                    let s = if b > 0.0 { sigma.get(0, i) } else { 0.0 };
                    s * s * b * b
                }
                DiffusionMode::PaperLiteral => b * b,
            };
            let followers: f64 = g
                .neighbors(i)
                .into_iter()
                .map(|j| {
                    let s = sigma.get(j, i);
                    let a = g.weight(i, j);
                    s * s * a * a
                })
                .sum();
            (leader + followers).sqrt()
        })
        .collect()
}

pub fn build_diffusion(t: &LeaderTopology, mode: DiffusionMode) -> Matrix {
    Matrix::from_diag(&diffusion_diagonal(t, mode))
}

/// Coefficients of one topology that the integrators need each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub lb: Matrix,
    pub b: Vec<f64>,
    pub diffusion: Vec<f64>,
}

impl Coupling {
    pub fn new(t: &LeaderTopology, mode: DiffusionMode) -> Self {
        Self {
            lb: graph::lb_matrix(t),
            b: t.leader_weights().to_vec(),
            diffusion: diffusion_diagonal(t, mode),
        }
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    /// `tr(D^T W D)` where `D = diag(G, γG)` maps the two independent
    /// Brownian motions onto `(x*, v*)`.
    pub fn noise_trace(&self, gamma: f64, weight: &Matrix) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| {
                let g2 = self.diffusion[i] * self.diffusion[i];
                g2 * (weight[(i, i)] + gamma * gamma * weight[(i + n, i + n)])
            })
            .sum()
    }
}

/// `[[W, -γW], [-γW, W]]`
pub fn gamma_coupled(w: &Matrix, gamma: f64) -> Matrix {
    let off = w.scale(-gamma);
    Matrix::block2(w, &off, &off, w)
}

/// The assembled protocol on a fixed topology.
#[derive(Debug, Clone)]
pub struct ProtocolSystem {
    topology: LeaderTopology,
    gamma: f64,
    h: GainSchedule,
    g: GainSchedule,
    mode: DiffusionMode,
    lyapunov: LyapunovSolution,
    coupling: Coupling,
    ptilde: Matrix,
    ptilde_extremes: (f64, f64),
}

impl ProtocolSystem {
    pub fn new(
        topology: LeaderTopology,
        gamma: f64,
        h: GainSchedule,
        g: GainSchedule,
        mode: DiffusionMode,
    ) -> Result<Self, ProtocolError> {
        validate_gamma(gamma)?;
        h.validate()?;
        g.validate()?;
        let coupling = Coupling::new(&topology, mode);
        let lyapunov = linalg::solve_lyapunov(&coupling.lb)?;
        let ptilde = gamma_coupled(&lyapunov.p, gamma);
        let ptilde_extremes = linalg::sym_eig_extremes_labeled(&ptilde, "P~")?;
        Ok(Self {
            topology,
            gamma,
            h,
            g,
            mode,
            lyapunov,
            coupling,
            ptilde,
            ptilde_extremes,
        })
    }

    pub fn n(&self) -> usize {
        self.topology.n()
    }

    pub fn topology(&self) -> &LeaderTopology {
        &self.topology
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn h(&self) -> &GainSchedule {
        &self.h
    }

    pub fn g(&self) -> &GainSchedule {
        &self.g
    }

    pub fn diffusion_mode(&self) -> DiffusionMode {
        self.mode
    }

    pub fn lyapunov(&self) -> &LyapunovSolution {
        &self.lyapunov
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn lb(&self) -> &Matrix {
        &self.coupling.lb
    }

    /// Diagonal diffusion matrix `G`.
    pub fn diffusion(&self) -> Matrix {
        Matrix::from_diag(&self.coupling.diffusion)
    }

    /// Stacked `[G; γG]` (2n x n).
    pub fn gtilde(&self) -> Matrix {
        let n = self.n();
        let mut out = Matrix::zeros(2 * n, n);
        for (i, &d) in self.coupling.diffusion.iter().enumerate() {
            out[(i, i)] = d;
            out[(i + n, i)] = self.gamma * d;
        }
        out
    }

    /// `P~ = [[P, -γP], [-γP, P]]`
    pub fn ptilde(&self) -> &Matrix {
        &self.ptilde
    }

    pub fn ptilde_lambda_min(&self) -> f64 {
        self.ptilde_extremes.0
    }

    pub fn ptilde_lambda_max(&self) -> f64 {
        self.ptilde_extremes.1
    }

    /// Error-dynamics drift `F(t)`.
    pub fn drift_matrix(&self, t: f64) -> Matrix {
        drift_from(
            &self.coupling.lb,
            self.gamma,
            self.h.eval(t),
            self.g.eval(t),
        )
    }

    /// `Q~(r)` for the ratio `r = g(t) / h(t)`.
    pub fn qtilde(&self, r: f64) -> Matrix {
        let n = self.n();
        let p = &self.lyapunov.p;
        let off = p.scale(-r);
        Matrix::block2(
            &Matrix::identity(n).scale(1.0 - self.gamma * self.gamma),
            &off,
            &off,
            &p.scale(2.0 * self.gamma * r),
        )
    }

    /// `tr(D^T P~ D)` for the independent-channel diffusion `D = diag(G, γG)`.
    pub fn noise_trace(&self) -> f64 {
        self.coupling.noise_trace(self.gamma, &self.ptilde)
    }

    /// `V(ε) = ε^T P~ ε`.
    pub fn lyapunov_value(&self, eps: &[f64]) -> f64 {
        self.ptilde.quad_form(eps)
    }

    /// Mean-square bound on `E V(t)` for the decay margin `rho`.
    pub fn envelope(&self, rho: f64) -> Result<Envelope, ProtocolError> {
        if rho.is_nan() || rho <= 0.0 {
            return Err(ProtocolError::MissingRho(rho));
        }
        Ok(Envelope {
            h: self.h,
            decay: rho / self.ptilde_lambda_max(),
            trace: self.noise_trace(),
        })
    }
}

pub(crate) fn validate_gamma(gamma: f64) -> Result<(), ProtocolError> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(ProtocolError::Gamma(gamma))
    }
}

pub(crate) fn drift_from(lb: &Matrix, gamma: f64, h: f64, g: f64) -> Matrix {
    let n = lb.rows();
    Matrix::block2(
        &lb.scale(-h),
        &Matrix::identity(n).scale(g),
        &lb.scale(-gamma * h),
        &Matrix::zeros(n, n),
    )
}

pub fn drift_matrix(sys: &ProtocolSystem, t: f64) -> Matrix {
    sys.drift_matrix(t)
}

pub fn qtilde(sys: &ProtocolSystem, r: f64) -> Matrix {
    sys.qtilde(r)
}

/// `E V(t) <= V0 exp(-k ∫_0^t h) + tr · ∫_0^t h(s)^2 exp(-k ∫_s^t h) ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub h: GainSchedule,
    /// Exponential rate `k` multiplying `∫ h`.
    pub decay: f64,
    /// Noise trace constant.
    pub trace: f64,
}

pub const DEFAULT_QUAD_POINTS: usize = 2048;
const QUAD_REL_TOL: f64 = 1e-6;

impl Envelope {
    /// Evaluates the bound at `t` for initial value `v0`. The outer integral
    /// uses composite Simpson on `quad_points` nodes and is checked against a
    /// refinement with twice as many intervals.
    pub fn at(&self, v0: f64, t: f64, quad_points: usize) -> Result<f64, ProtocolError> {
        if t <= 0.0 {
            return Ok(v0);
        }
        let transient = v0 * (-self.decay * self.h.integral(0.0, t)).exp();
        if self.trace == 0.0 {
            return Ok(transient);
        }
        let intervals = (quad_points.max(3) - 1).next_multiple_of(2);
        let coarse = self.noise_integral(t, intervals);
        let fine = self.noise_integral(t, 2 * intervals);
        let scale = fine.abs().max(f64::MIN_POSITIVE);
        if (coarse - fine).abs() > QUAD_REL_TOL * scale {
            return Err(ProtocolError::QuadratureUnstable { t, coarse, fine });
        }
        Ok(transient + self.trace * coarse)
    }

    /// `∫_0^t h(s)^2 exp(-k ∫_s^t h) ds`. Power laws are integrated in
    /// `u = ln(s + t0)`, which flattens the integrand near `s = 0`.
    fn noise_integral(&self, t: f64, intervals: usize) -> f64 {
        let h = self.h;
        let k = self.decay;
        match h {
            GainSchedule::PowerLaw { t0, .. } => {
                let (u0, u1) = (t0.ln(), (t + t0).ln());
                simpson(u0, u1, intervals, |u| {
                    let s = (u.exp() - t0).max(0.0);
                    let hs = h.eval(s);
                    hs * hs * (-k * h.integral(s, t)).exp() * (s + t0)
                })
            }
            GainSchedule::Constant { .. } => simpson(0.0, t, intervals, |s| {
                let hs = h.eval(s);
                hs * hs * (-k * h.integral(s, t)).exp()
            }),
        }
    }
}

fn simpson(a: f64, b: f64, intervals: usize, f: impl Fn(f64) -> f64) -> f64 {
    debug_assert!(intervals.is_multiple_of(2) && intervals >= 2);
    let step = (b - a) / intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + step * i as f64);
    }
    acc * step / 3.0
}

/// `Envelope` evaluated once: `envelope(sys, V0, t, quad_points)` style.
pub fn envelope(
    sys: &ProtocolSystem,
    rho: f64,
    v0: f64,
    t: f64,
    quad_points: usize,
) -> Result<f64, ProtocolError> {
    sys.envelope(rho)?.at(v0, t, quad_points)
}

/// Ratio `h/g` test against a threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioCheck {
    /// Infimum of `h(t)/g(t)` over `t >= 0` (`null` in JSON when unbounded).
    pub ratio_inf: f64,
    pub threshold: f64,
    /// `ratio_inf - threshold`.
    pub margin: f64,
    pub holds: bool,
    /// `analytic` when the ratio is constant, `grid` otherwise.
    pub method: String,
}

impl RatioCheck {
    fn new(ratio_inf: f64, threshold: f64, method: &str) -> Self {
        let margin = ratio_inf - threshold;
        Self {
            ratio_inf,
            threshold,
            margin,
            holds: margin > 0.0,
            method: method.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticCheck {
    pub holds: bool,
    pub justification: String,
}

/// Outcome of checking the four fixed-topology conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Leader is globally reachable.
    pub a1: bool,
    /// `h/g` exceeds `λ_max(P) / (2γ(1-γ²))`.
    pub a2: RatioCheck,
    /// `∫ h = ∞`.
    pub a3: AnalyticCheck,
    /// `∫ h² < ∞`.
    pub a4: AnalyticCheck,
    pub lambda_max_p: f64,
    /// Minimum over evaluated ratios of `λ_min(Q~)`.
    pub rho: f64,
    /// The `t → ∞` ratio limit was degenerate and left out of `rho`.
    pub rho_limit_excluded: bool,
    pub warnings: Vec<String>,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.a1 && self.a2.holds && self.a3.holds && self.a4.holds
    }
}

pub const DEFAULT_RATIO_GRID: usize = 256;

/// Samples of `h(t)/g(t)` used for the ratio conditions.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RatioSamples {
    /// Finite positive values of `h/g` at which margins get evaluated.
    pub ratios: Vec<f64>,
    pub inf: f64,
    pub analytic: bool,
    pub limit_excluded: bool,
    pub warnings: Vec<String>,
}

/// Log-spaced points on `[0, horizon]`, starting at 0.
pub(crate) fn log_grid(horizon: f64, points: usize) -> Vec<f64> {
    let m = points.max(2);
    let top = (1.0 + horizon.max(0.0)).ln();
    (0..m)
        .map(|i| (top * i as f64 / (m - 1) as f64).exp_m1())
        .collect()
}

pub(crate) fn sample_ratios(
    h: &GainSchedule,
    g: &GainSchedule,
    horizon: f64,
    points: usize,
) -> RatioSamples {
    if let Some(r) = h.constant_ratio(g) {
        return RatioSamples {
            ratios: vec![r],
            inf: r,
            analytic: true,
            limit_excluded: false,
            warnings: Vec::new(),
        };
    }
    let grid: Vec<f64> = log_grid(horizon, points)
        .into_iter()
        .map(|t| h.eval(t) / g.eval(t))
        .collect();
    let limit = h.ratio_limit(g);
    let mut warnings = Vec::new();
    let rising = grid.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    let falling = grid.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    if !rising && !falling {
        warnings.push(format!(
            "GridTooCoarse: h/g is non-monotone across the {}-point grid on [0, {horizon}]",
            grid.len()
        ));
    }
    let mut ratios = grid;
    let limit_excluded = !(limit.is_finite() && limit > 0.0);
    if !limit_excluded {
        ratios.push(limit);
    }
    let inf = ratios.iter().copied().fold(limit, f64::min);
    warnings.push("ratio infimum from a sampled grid plus the t -> inf limit (heuristic)".into());
    RatioSamples {
        ratios,
        inf,
        analytic: false,
        limit_excluded,
        warnings,
    }
}

pub fn check_assumptions(
    sys: &ProtocolSystem,
    horizon: f64,
    grid_points: usize,
) -> Result<AssumptionReport, ProtocolError> {
    let gamma = sys.gamma;
    let lambda_max_p = sys.lyapunov.lambda_max;
    let samples = sample_ratios(&sys.h, &sys.g, horizon, grid_points);
    let threshold = lambda_max_p / (2.0 * gamma * (1.0 - gamma * gamma));
    let method = if samples.analytic { "analytic" } else { "grid" };
    let a2 = RatioCheck::new(samples.inf, threshold, method);

    let mut rho = f64::INFINITY;
    for &ratio in &samples.ratios {
        let (lo, _) = linalg::sym_eig_extremes_labeled(&sys.qtilde(1.0 / ratio), "Q~")?;
        rho = rho.min(lo);
    }

    let p = sys.h.exponent();
    Ok(AssumptionReport {
        a1: graph::is_globally_reachable(&sys.topology, 0),
        a2,
        a3: AnalyticCheck {
            holds: sys.h.integral_diverges(),
            justification: format!("h ~ t^-{p}: integral of h diverges iff p <= 1"),
        },
        a4: AnalyticCheck {
            holds: sys.h.square_integrable(),
            justification: format!("h ~ t^-{p}: integral of h^2 converges iff p > 1/2"),
        },
        lambda_max_p,
        rho,
        rho_limit_excluded: samples.limit_excluded,
        warnings: samples.warnings,
    })
}
