//! Switching topologies: piecewise-constant signals, the spectral margins of
//! a topology set and the switched integrator.

use serde::{Deserialize, Serialize};

use crate::graph::{self, GraphError, LeaderTopology};
use crate::linalg::{self, LinalgError, Matrix};
use crate::protocol::{
    self, Coupling, DiffusionMode, Envelope, GainSchedule, LeaderDynamics, ProtocolError,
    RatioCheck, DEFAULT_QUAD_POINTS,
};
use crate::sde::{
    self, EnsembleResult, EnvelopeComparison, ErrorState, Plant, SdeError, SimConfig, Trajectory,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SwitchingError {
    #[error("topology set is empty")]
    Empty,
    #[error("topology {index} has {got} followers, expected {expected}")]
    SizeMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("invalid switching signal: {0}")]
    Signal(String),
    #[error("follower digraph of topology {0} is not balanced")]
    NotBalanced(usize),
    #[error("leader is not globally reachable in topology {0}")]
    NotReachable(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

/// Ordered set of topologies sharing the vertex set `{0, ..., n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySet {
    graphs: Vec<LeaderTopology>,
}

impl TopologySet {
    pub fn new(graphs: Vec<LeaderTopology>) -> Result<Self, SwitchingError> {
        let first = graphs.first().ok_or(SwitchingError::Empty)?;
        let n = first.n();
        for (k, g) in graphs.iter().enumerate() {
            if g.n() != n {
                return Err(SwitchingError::SizeMismatch {
                    index: k + 1,
                    got: g.n(),
                    expected: n,
                });
            }
        }
        Ok(Self { graphs })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn n(&self) -> usize {
        self.graphs[0].n()
    }

    pub fn graphs(&self) -> &[LeaderTopology] {
        &self.graphs
    }

    /// Topology with 1-based index.
    pub fn get(&self, index: usize) -> &LeaderTopology {
        &self.graphs[index - 1]
    }
}

/// Piecewise-constant, right-continuous topology selector with 1-based
/// indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum SwitchingSignal {
    /// `indices[k]` is active on `[breakpoints[k], breakpoints[k+1])`.
    ExplicitSchedule {
        breakpoints: Vec<f64>,
        indices: Vec<usize>,
    },
    /// Cycles `1, 2, ..., count, 1, ...` every `dwell` time units.
    RoundRobin { dwell: f64, count: usize },
}

pub const DEFAULT_DWELL: f64 = 1.0;

impl SwitchingSignal {
    pub fn round_robin(dwell: f64, count: usize) -> Result<Self, SwitchingError> {
        let s = Self::RoundRobin { dwell, count };
        s.validate(count)?;
        Ok(s)
    }

    pub fn schedule(breakpoints: Vec<f64>, indices: Vec<usize>) -> Result<Self, SwitchingError> {
        let max = indices.iter().copied().max().unwrap_or(0);
        let s = Self::ExplicitSchedule {
            breakpoints,
            indices,
        };
        s.validate(max)?;
        Ok(s)
    }

    /// Checks the signal against a topology set of `count` members.
    pub fn validate(&self, count: usize) -> Result<(), SwitchingError> {
        let bad = |m: String| Err(SwitchingError::Signal(m));
        match self {
            Self::RoundRobin { dwell, count: c } => {
                if !(dwell.is_finite() && *dwell > 0.0) {
                    return bad(format!("dwell must be positive, got {dwell}"));
                }
                if *c == 0 || *c > count {
                    return bad(format!("round robin over {c} graphs, set has {count}"));
                }
            }
            Self::ExplicitSchedule {
                breakpoints,
                indices,
            } => {
                if breakpoints.is_empty() || breakpoints.len() != indices.len() {
                    return bad("breakpoints and indices must be non-empty and equally long".into());
                }
                if breakpoints[0] != 0.0 {
                    return bad("schedule must start at t = 0".into());
                }
                if breakpoints.iter().any(|b| !b.is_finite())
                    || breakpoints.windows(2).any(|w| w[1] <= w[0])
                {
                    return bad("breakpoints must be finite and strictly increasing".into());
                }
                if let Some(&i) = indices.iter().find(|&&i| i == 0 || i > count) {
                    return bad(format!("index {i} outside 1..={count}"));
                }
            }
        }
        Ok(())
    }

    /// Active topology index at time `t`.
    pub fn at(&self, t: f64) -> usize {
        match self {
            Self::RoundRobin { dwell, count } => ((t / dwell).floor() as usize) % count + 1,
            Self::ExplicitSchedule {
                breakpoints,
                indices,
            } => {
                let k = breakpoints.partition_point(|&b| b <= t);
                indices[k.saturating_sub(1)]
            }
        }
    }

    /// Topology active over the Euler step that starts at `t`; a switch that
    /// lands on a grid point (up to rounding in `k * dt`) applies from that
    /// step on.
    pub fn at_step(&self, t: f64, dt: f64) -> usize {
        self.at(t + 1e-9 * dt)
    }
}

pub fn signal_at(sig: &SwitchingSignal, t: f64) -> usize {
    sig.at(t)
}

/// Per-member checks and spectral margins of a topology set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchingReport {
    pub balanced: Vec<bool>,
    pub reachable: Vec<bool>,
    /// `λ_min((L_s+B_s) + (L_s+B_s)^T)` per member.
    pub lambda_min_s: Vec<f64>,
    /// Minimum of `lambda_min_s`, reported as 0 when some member is not
    /// positive definite.
    pub mu: f64,
    /// Minimum over members and evaluated ratios of `λ_min(Q~_s)`.
    pub nu: f64,
    /// `h/g` against `1 / (2γ(1-γ²)μ)`.
    pub a5: RatioCheck,
    pub a3: bool,
    pub a4: bool,
    pub warnings: Vec<String>,
}

impl SwitchingReport {
    pub fn all_hold(&self) -> bool {
        self.balanced.iter().all(|&b| b)
            && self.reachable.iter().all(|&r| r)
            && self.mu > 0.0
            && self.a5.holds
            && self.a3
            && self.a4
    }
}

/// `Q~_s(r) = [[(1-γ²) S_s, -r I], [-r I, 2γ r I]]`
pub fn qtilde_switching(s: &Matrix, gamma: f64, r: f64) -> Matrix {
    let n = s.rows();
    let off = Matrix::identity(n).scale(-r);
    Matrix::block2(
        &s.scale(1.0 - gamma * gamma),
        &off,
        &off,
        &Matrix::identity(n).scale(2.0 * gamma * r),
    )
}

/// Computes the report without failing on unbalanced or unreachable
/// members.
pub fn inspect_switching(
    set: &TopologySet,
    gamma: f64,
    h: &GainSchedule,
    g: &GainSchedule,
    horizon: f64,
    grid: usize,
) -> Result<SwitchingReport, SwitchingError> {
    protocol::validate_gamma(gamma)?;
    h.validate()?;
    g.validate()?;
    let mut balanced = Vec::new();
    let mut reachable = Vec::new();
    let mut lambda_min_s = Vec::new();
    let mut all_pd = true;
    let mut sym = Vec::new();
    for t in set.graphs() {
        balanced.push(graph::is_balanced(t.followers()));
        reachable.push(graph::is_globally_reachable(t, 0));
        let s = graph::symmetrized_lb(t);
        let (lo, hi) = linalg::sym_eig_extremes_labeled(&s, "(L+B)+(L+B)^T")?;
        all_pd &= lo > linalg::pd_threshold(hi);
        lambda_min_s.push(lo);
        sym.push(s);
    }
    let raw_mu = lambda_min_s.iter().copied().fold(f64::INFINITY, f64::min);
    let mu = if all_pd { raw_mu } else { raw_mu.min(0.0) };

    let samples = protocol::sample_ratios(h, g, horizon, grid);
    let mut nu = f64::INFINITY;
    for s in &sym {
        for &ratio in &samples.ratios {
            let (lo, _) =
                linalg::sym_eig_extremes_labeled(&qtilde_switching(s, gamma, 1.0 / ratio), "Q~_s")?;
            nu = nu.min(lo);
        }
    }
    let threshold = if mu > 0.0 {
        1.0 / (2.0 * gamma * (1.0 - gamma * gamma) * mu)
    } else {
        f64::INFINITY
    };
    let method = if samples.analytic { "analytic" } else { "grid" };
    Ok(SwitchingReport {
        balanced,
        reachable,
        lambda_min_s,
        mu,
        nu,
        a5: RatioCheck {
            ratio_inf: samples.inf,
            threshold,
            margin: samples.inf - threshold,
            holds: samples.inf - threshold > 0.0,
            method: method.to_string(),
        },
        a3: h.integral_diverges(),
        a4: h.square_integrable(),
        warnings: samples.warnings,
    })
}

/// Like [`inspect_switching`], but fails on the first member that is not
/// balanced or in which the leader is not globally reachable.
pub fn check_switching(
    set: &TopologySet,
    gamma: f64,
    h: &GainSchedule,
    g: &GainSchedule,
    horizon: f64,
    grid: usize,
) -> Result<SwitchingReport, SwitchingError> {
    let report = inspect_switching(set, gamma, h, g, horizon, grid)?;
    for (k, (&b, &r)) in report.balanced.iter().zip(&report.reachable).enumerate() {
        if !b {
            return Err(SwitchingError::NotBalanced(k + 1));
        }
        if !r {
            return Err(SwitchingError::NotReachable(k + 1));
        }
    }
    Ok(report)
}

/// Protocol on a switching topology.
#[derive(Debug, Clone)]
pub struct SwitchedSystem {
    set: TopologySet,
    signal: SwitchingSignal,
    gamma: f64,
    h: GainSchedule,
    g: GainSchedule,
    mode: DiffusionMode,
    couplings: Vec<Coupling>,
    itilde: Matrix,
}

impl SwitchedSystem {
    pub fn new(
        set: TopologySet,
        signal: SwitchingSignal,
        gamma: f64,
        h: GainSchedule,
        g: GainSchedule,
        mode: DiffusionMode,
    ) -> Result<Self, SwitchingError> {
        protocol::validate_gamma(gamma)?;
        h.validate()?;
        g.validate()?;
        signal.validate(set.len())?;
        let couplings = set
            .graphs()
            .iter()
            .map(|t| Coupling::new(t, mode))
            .collect();
        let itilde = protocol::gamma_coupled(&Matrix::identity(set.n()), gamma);
        Ok(Self {
            set,
            signal,
            gamma,
            h,
            g,
            mode,
            couplings,
            itilde,
        })
    }

    pub fn n(&self) -> usize {
        self.set.n()
    }

    pub fn set(&self) -> &TopologySet {
        &self.set
    }

    pub fn signal(&self) -> &SwitchingSignal {
        &self.signal
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

    /// `I~ = [[I, -γI], [-γI, I]]`
    pub fn itilde(&self) -> &Matrix {
        &self.itilde
    }

    pub fn lyapunov_value(&self, eps: &[f64]) -> f64 {
        self.itilde.quad_form(eps)
    }

    /// Largest noise trace `tr(D_s^T I~ D_s)` over the set.
    pub fn max_noise_trace(&self) -> f64 {
        self.couplings
            .iter()
            .map(|c| c.noise_trace(self.gamma, &self.itilde))
            .fold(0.0, f64::max)
    }

    /// Conservative switching envelope: decay `ν/(1+γ)` and the largest
    /// noise trace in the set.
    pub fn envelope(&self, nu: f64) -> Result<Envelope, SwitchingError> {
        if nu.is_nan() || nu <= 0.0 {
            return Err(ProtocolError::MissingRho(nu).into());
        }
        Ok(Envelope {
            h: self.h,
            decay: nu / (1.0 + self.gamma),
            trace: self.max_noise_trace(),
        })
    }

    fn plant<'a>(
        &'a self,
        leader: &LeaderDynamics,
        select: &'a (dyn Fn(f64) -> usize + Sync),
    ) -> Plant<'a> {
        Plant {
            couplings: &self.couplings,
            gamma: self.gamma,
            h: self.h,
            g: self.g,
            leader: *leader,
            weight: &self.itilde,
            select,
        }
    }
}

/// One Euler-Maruyama step with the topology active at `t` held for the
/// whole step.
pub fn step_switching(
    sys: &SwitchedSystem,
    leader: &LeaderDynamics,
    s: &ErrorState,
    t: f64,
    dt: f64,
    noise: &[f64],
) -> Result<ErrorState, SwitchingError> {
    let c = &sys.couplings[sys.signal.at_step(t, dt) - 1];
    let out = match s.full {
        Some(_) => sde::step_full_with(c, sys.gamma, &sys.h, &sys.g, leader, s, t, dt, noise)?,
        None => sde::step_error_with(c, sys.gamma, &sys.h, &sys.g, s, t, dt, noise)?,
    };
    Ok(out)
}

pub fn simulate_switching(
    sys: &SwitchedSystem,
    leader: &LeaderDynamics,
    cfg: &SimConfig,
    eps0: &[f64],
) -> Result<Trajectory, SwitchingError> {
    leader.validate()?;
    let dt = cfg.dt;
    let select = move |t: f64| sys.signal.at_step(t, dt) - 1;
    Ok(sde::simulate_plant(
        &sys.plant(leader, &select),
        cfg,
        eps0,
        true,
    )?)
}

pub fn monte_carlo_switching(
    sys: &SwitchedSystem,
    leader: &LeaderDynamics,
    cfg: &SimConfig,
    eps0: &[f64],
    runs: usize,
) -> Result<EnsembleResult, SwitchingError> {
    leader.validate()?;
    let dt = cfg.dt;
    let select = move |t: f64| sys.signal.at_step(t, dt) - 1;
    Ok(sde::monte_carlo_plant(
        &sys.plant(leader, &select),
        cfg,
        eps0,
        runs,
    )?)
}

/// Ensemble mean of `V = ε^T I~ ε` against the conservative envelope.
pub fn compare_switching_envelope(
    res: &EnsembleResult,
    sys: &SwitchedSystem,
    nu: f64,
    eps0: &[f64],
) -> Result<EnvelopeComparison, SwitchingError> {
    let env = sys.envelope(nu)?;
    let v0 = sys.lyapunov_value(eps0);
    let envelope = res
        .times
        .iter()
        .map(|&t| env.at(v0, t, DEFAULT_QUAD_POINTS))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EnvelopeComparison::new(res, envelope))
}

/// Fixtures for the two-member balanced example set.
pub mod fixtures {
    use super::*;
    use crate::graph::fixtures::{pair_plus_isolated, three_cycle, with_leader};

    pub fn balanced_pair(sigma: f64) -> TopologySet {
        TopologySet::new(vec![
            with_leader(three_cycle(), &[1.0, 0.0, 0.0], sigma),
            with_leader(pair_plus_isolated(), &[1.0, 0.0, 1.0], sigma),
        ])
        .expect("valid fixture")
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::balanced_pair;
    use super::*;
    use crate::graph::fixtures::*;
    use crate::protocol::ProtocolSystem;
    use crate::rng;

    fn gains() -> (GainSchedule, GainSchedule) {
        (
            GainSchedule::power_law(1.0, 2.0, 1.0).unwrap(),
            GainSchedule::power_law(1.0 / 8.0, 2.0, 1.0).unwrap(),
        )
    }

    #[test]
    fn round_robin_and_schedule() {
        let rr = SwitchingSignal::round_robin(1.0, 2).unwrap();
        assert_eq!(rr.at(0.5), 1);
        assert_eq!(rr.at(1.0), 2);
        assert_eq!(rr.at(2.0), 1);
        let sched = SwitchingSignal::schedule(vec![0.0, 3.0], vec![1, 2]).unwrap();
        assert_eq!(sched.at(2.999), 1);
        assert_eq!(sched.at(3.0), 2);
        assert_eq!(sched.at(1e9), 2);
        let single = SwitchingSignal::round_robin(1.0, 1).unwrap();
        for t in [0.0, 0.3, 17.0, 1e6] {
            assert_eq!(single.at(t), 1);
        }
    }

    #[test]
    fn signal_validation() {
        assert!(SwitchingSignal::round_robin(0.0, 2).is_err());
        assert!(SwitchingSignal::schedule(vec![1.0], vec![1]).is_err());
        assert!(SwitchingSignal::schedule(vec![0.0, 0.0], vec![1, 2]).is_err());
        assert!(SwitchingSignal::schedule(vec![0.0], vec![0]).is_err());
        assert!(SwitchingSignal::round_robin(1.0, 3)
            .unwrap()
            .validate(2)
            .is_err());
    }

    #[test]
    fn grid_point_switches_apply_from_that_step() {
        let rr = SwitchingSignal::round_robin(0.099, 2).unwrap();
        let dt = 0.009;
        // 11 * 0.009 rounds below 0.099 in floating point.
        assert!(11.0 * dt < 0.099);
        assert_eq!(rr.at(11.0 * dt), 1);
        assert_eq!(rr.at_step(10.0 * dt, dt), 1);
        assert_eq!(rr.at_step(11.0 * dt, dt), 2);
    }

    #[test]
    fn balanced_pair_report() {
        let (h, g) = gains();
        let set = balanced_pair(0.1);
        let r = check_switching(&set, 0.5, &h, &g, 200.0, 256).unwrap();
        assert_eq!(r.balanced, vec![true, true]);
        assert_eq!(r.reachable, vec![true, true]);
        assert!(r.mu > 0.0 && r.nu > 0.0);
        // S_2 = [[4,-2,0],[-2,2,0],[0,0,2]] has λ_min = 3 - √5.
        assert!((r.lambda_min_s[1] - (3.0 - 5.0_f64.sqrt())).abs() < 1e-12);
        let independent: Vec<f64> = set
            .graphs()
            .iter()
            .map(|t| {
                linalg::sym_eig_extremes(&graph::symmetrized_lb(t))
                    .unwrap()
                    .0
            })
            .collect();
        assert_eq!(
            r.mu,
            independent.iter().copied().fold(f64::INFINITY, f64::min)
        );
        assert!(r.a5.holds);
        assert!((r.a5.threshold - 1.0 / (0.75 * r.mu)).abs() < 1e-12);
        assert!(r.all_hold());
    }

    #[test]
    fn a5_threshold_arithmetic() {
        let gamma: f64 = 0.5;
        let mu = 2.0;
        assert!((1.0 / (2.0 * gamma * (1.0 - gamma * gamma) * mu) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unbalanced_member_is_named() {
        let (h, g) = gains();
        let set = TopologySet::new(vec![
            with_leader(three_cycle(), &[1.0, 0.0, 0.0], 0.1),
            fig1_topology(0.1),
        ])
        .unwrap();
        assert_eq!(
            check_switching(&set, 0.5, &h, &g, 200.0, 32).unwrap_err(),
            SwitchingError::NotBalanced(2)
        );
        let set = TopologySet::new(vec![
            with_leader(three_cycle(), &[0.0, 0.0, 0.0], 0.1),
            with_leader(three_cycle(), &[1.0, 0.0, 0.0], 0.1),
        ])
        .unwrap();
        assert_eq!(
            check_switching(&set, 0.5, &h, &g, 200.0, 32).unwrap_err(),
            SwitchingError::NotReachable(1)
        );
        let r = inspect_switching(&set, 0.5, &h, &g, 200.0, 32).unwrap();
        assert!(r.mu <= 0.0);
        assert!(!r.all_hold());
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let small = with_leader(graph::WeightedDigraph::empty(2).unwrap(), &[1.0, 1.0], 0.1);
        assert!(matches!(
            TopologySet::new(vec![fig1_topology(0.1), small]),
            Err(SwitchingError::SizeMismatch { index: 2, .. })
        ));
        assert_eq!(TopologySet::new(vec![]), Err(SwitchingError::Empty));
    }

    #[test]
    fn itilde_extremes() {
        let (h, g) = gains();
        let sys = SwitchedSystem::new(
            balanced_pair(0.1),
            SwitchingSignal::round_robin(1.0, 2).unwrap(),
            0.5,
            h,
            g,
            DiffusionMode::Faithful,
        )
        .unwrap();
        let (lo, hi) = linalg::sym_eig_extremes(sys.itilde()).unwrap();
        assert!((lo - 0.5).abs() < 1e-12 && (hi - 1.5).abs() < 1e-12);
    }

    #[test]
    fn single_member_matches_fixed_topology() {
        let (h, g) = gains();
        let t = fig1_topology(0.1);
        let fixed = ProtocolSystem::new(t.clone(), 0.5, h, g, DiffusionMode::Faithful).unwrap();
        let sw = SwitchedSystem::new(
            TopologySet::new(vec![t]).unwrap(),
            SwitchingSignal::round_robin(1.0, 1).unwrap(),
            0.5,
            h,
            g,
            DiffusionMode::Faithful,
        )
        .unwrap();
        let leader = LeaderDynamics::default();
        let mut noise = [0.0; 6];
        rng::fill_normals(11, 0, 0, &mut noise);
        let s = ErrorState::from_error_with_leader(&[1.0, -1.0, 0.5, 0.0, 0.2, 0.1], 0.0, 0.0);
        let a = sde::step_full(&fixed, &leader, &s, 0.0, 0.01, &noise).unwrap();
        let b = step_switching(&sw, &leader, &s, 0.0, 0.01, &noise).unwrap();
        assert_eq!(a, b);

        let cfg = SimConfig {
            horizon: 3.0,
            record_stride: 7,
            seed: 5,
            ..SimConfig::default()
        };
        let eps0 = [-2.0, 1.5, 3.0, 2.0, -1.5, -1.0];
        let ta = sde::simulate(&fixed, &leader, &cfg, &eps0).unwrap();
        let tb = simulate_switching(&sw, &leader, &cfg, &eps0).unwrap();
        assert_eq!(ta.states, tb.states);
        assert_eq!(tb.sigma_index.as_ref().unwrap().iter().max(), Some(&1));
    }

    #[test]
    fn matrices_change_at_step_boundary() {
        let (h, g) = gains();
        let sys = SwitchedSystem::new(
            balanced_pair(0.0),
            SwitchingSignal::round_robin(0.05, 2).unwrap(),
            0.5,
            h,
            g,
            DiffusionMode::Faithful,
        )
        .unwrap();
        let cfg = SimConfig {
            dt: 0.01,
            horizon: 0.2,
            record_stride: 1,
            ..SimConfig::default()
        };
        let traj = simulate_switching(&sys, &LeaderDynamics::default(), &cfg, &[1.0; 6]).unwrap();
        let idx = traj.sigma_index.unwrap();
        // Each record shows the topology that drives the step leaving it.
        assert_eq!(
            idx,
            vec![1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 1]
        );
        // The state moves under topology 1 only until t = 0.05.
        let (lb1, lb2) = (
            graph::lb_matrix(sys.set().get(1)),
            graph::lb_matrix(sys.set().get(2)),
        );
        assert_ne!(lb1, lb2);
    }

    #[test]
    fn consensus_manifold_under_switching() {
        let (h, g) = gains();
        let sys = SwitchedSystem::new(
            balanced_pair(0.0),
            SwitchingSignal::round_robin(1.0, 2).unwrap(),
            0.5,
            h,
            g,
            DiffusionMode::Faithful,
        )
        .unwrap();
        let cfg = SimConfig {
            horizon: 10.0,
            record_stride: 100,
            ..SimConfig::default()
        };
        let traj = simulate_switching(&sys, &LeaderDynamics::default(), &cfg, &[0.0; 6]).unwrap();
        assert!(traj.states.iter().all(|s| s.norm_sq() == 0.0));
        let res =
            monte_carlo_switching(&sys, &LeaderDynamics::default(), &cfg, &[1.0; 6], 4).unwrap();
        assert!(res.stderr.iter().all(|&s| s == 0.0));
    }
}
