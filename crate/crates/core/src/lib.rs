//! Leader-following mean-square consensus of integrator agents under
//! measurement noise.
//!
//! Followers run the noisy second-order protocol on a fixed or switching
//! directed topology and track a leader. The crate provides the graph
//! model, dense spectral tools, the protocol matrices with their assumption
//! checks, a seeded Euler-Maruyama engine with Monte Carlo ensembles and the
//! envelope comparison, plus a command line harness.
//!
//! ```
//! use leader_consensus::graph::fixtures::fig1_topology;
//! use leader_consensus::protocol::{check_assumptions, DiffusionMode, GainSchedule, ProtocolSystem};
//!
//! let h = GainSchedule::power_law(1.0, 2.0, 1.0).unwrap();
//! let g = GainSchedule::power_law(1.0 / 6.0, 2.0, 1.0).unwrap();
//! let sys = ProtocolSystem::new(fig1_topology(0.1), 0.5, h, g, DiffusionMode::Faithful).unwrap();
//! let report = check_assumptions(&sys, 200.0, 256).unwrap();
//! assert!(report.all_hold());
//! assert!((report.lambda_max_p - 0.9447).abs() < 5e-4);
//! ```

pub mod cli;
pub mod config;
pub mod graph;
pub mod linalg;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod sde;
pub mod switching;

pub use config::{ConfigError, RunConfig};
pub use graph::{GraphError, LeaderTopology, NoiseTable, WeightedDigraph};
pub use linalg::{LinalgError, Matrix};
pub use protocol::{
    AssumptionReport, DiffusionMode, GainSchedule, LeaderDynamics, ProtocolError, ProtocolSystem,
};
pub use scenario::ExampleScenario;
pub use sde::{EnsembleResult, ErrorState, SdeError, SimConfig, SimMode, Trajectory};
pub use switching::{
    SwitchedSystem, SwitchingError, SwitchingReport, SwitchingSignal, TopologySet,
};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Switching(#[from] SwitchingError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
