//! The four-agent reproduction scenario.

use crate::config::{
    ArcSpec, EnsembleSpec, GainsSpec, LeaderLink, NoiseSpec, OutputSpec, RunConfig, SigmaSpec,
    TopologySpec,
};
use crate::protocol::{DiffusionMode, GainSchedule, LeaderDynamics};
use crate::sde::{SimConfig, SimMode};

/// Three followers measuring each other along 2->1, 1->2, 3->2, 1->3, two of
/// them measuring the leader, all intensities 0.1, `h = 1/(t+2)`,
/// `g = 1/(6(t+2))`, `γ = 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExampleScenario;

impl ExampleScenario {
    pub const SIGMA: f64 = 0.1;
    pub const GAMMA: f64 = 0.5;
    pub const EPS0: [f64; 6] = [-2.0, 1.5, 3.0, 2.0, -1.5, -1.0];
    pub const DT: f64 = 0.01;
    pub const HORIZON: f64 = 200.0;
    pub const RUNS: usize = 400;
    pub const SEED: u64 = 1;
    pub const RECORD_STRIDE: usize = 10;
    /// Accepted range for `λ_max(P)`.
    pub const LAMBDA_MAX_P: (f64, f64) = (0.9442, 0.9452);

    pub fn h() -> GainSchedule {
        GainSchedule::PowerLaw {
            c: 1.0,
            t0: 2.0,
            p: 1.0,
        }
    }

    pub fn g() -> GainSchedule {
        GainSchedule::PowerLaw {
            c: 1.0 / 6.0,
            t0: 2.0,
            p: 1.0,
        }
    }

    pub fn topology() -> TopologySpec {
        let arc = |from, to| ArcSpec {
            from,
            to,
            weight: 1.0,
        };
        TopologySpec {
            n: 3,
            arcs: vec![arc(2, 1), arc(1, 2), arc(3, 2), arc(1, 3)],
            leader: vec![
                LeaderLink {
                    agent: 1,
                    weight: 1.0,
                },
                LeaderLink {
                    agent: 2,
                    weight: 1.0,
                },
            ],
        }
    }

    /// Resolved configuration; the leader starts at `x0 = v0 = 0` with zero
    /// acceleration.
    pub fn config() -> RunConfig {
        let mut cfg = RunConfig {
            topology: Some(Self::topology()),
            topologies: None,
            gamma: Self::GAMMA,
            gains: GainsSpec {
                h: Self::h(),
                g: Self::g(),
            },
            noise: NoiseSpec {
                sigma: SigmaSpec::Uniform(Self::SIGMA),
                mode: DiffusionMode::Faithful,
            },
            leader: LeaderDynamics::default(),
            sim: SimConfig {
                dt: Self::DT,
                horizon: Self::HORIZON,
                seed: Self::SEED,
                record_stride: Self::RECORD_STRIDE,
                mode: SimMode::FullSystem,
            },
            ensemble: EnsembleSpec { runs: Self::RUNS },
            switching: None,
            output: OutputSpec::default(),
            eps0: Self::EPS0.to_vec(),
        };
        cfg.resolve().expect("example configuration is valid");
        cfg
    }
}
