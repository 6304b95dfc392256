//! JSON run configuration.
//!
//! A [`RunConfig`] is parsed with field-path diagnostics, validated and then
//! resolved: every defaulted field is filled in so that serializing the
//! resolved value and parsing it again gives back the same configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::{Arc, LeaderTopology, NoiseTable, WeightedDigraph, MAX_FOLLOWERS};
use crate::protocol::{DiffusionMode, GainSchedule, LeaderDynamics, ProtocolSystem};
use crate::sde::SimConfig;
use crate::switching::{SwitchedSystem, SwitchingSignal, TopologySet, DEFAULT_DWELL};
use crate::Error;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_runs() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcSpec {
    pub from: usize,
    pub to: usize,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderLink {
    pub agent: usize,
    #[serde(default = "one")]
    pub weight: f64,
}

/// Followers `1..=n`, arcs `from -> to` meaning `to` measures `from`, and the
/// agents that measure the leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub n: usize,
    #[serde(default)]
    pub arcs: Vec<ArcSpec>,
    #[serde(default)]
    pub leader: Vec<LeaderLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaEntry {
    /// `0` is the leader.
    pub from: usize,
    pub to: usize,
    pub sigma: f64,
}

/// A single intensity for every measurement, or an explicit list with
/// unlisted entries at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Uniform(f64),
    Table(Vec<SigmaEntry>),
}

impl Default for SigmaSpec {
    fn default() -> Self {
        Self::Uniform(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub mode: DiffusionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    pub h: GainSchedule,
    pub g: GainSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    #[serde(default = "default_runs")]
    pub runs: usize,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            runs: default_runs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingPolicy {
    RoundRobin,
    ExplicitSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub t: f64,
    /// 1-based member of `topologies`.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSpec {
    pub policy: SwitchingPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<ScheduleEntry>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "OutputSpec::trajectory_name")]
    pub trajectory: String,
    #[serde(default = "OutputSpec::ensemble_name")]
    pub ensemble: String,
    #[serde(default = "OutputSpec::summary_name")]
    pub summary: String,
    #[serde(default)]
    pub format: OutputFormat,
}

impl OutputSpec {
    fn trajectory_name() -> String {
        "trajectory.csv".into()
    }

    fn ensemble_name() -> String {
        "ensemble.csv".into()
    }

    fn summary_name() -> String {
        "summary.json".into()
    }
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            trajectory: Self::trajectory_name(),
            ensemble: Self::ensemble_name(),
            summary: Self::summary_name(),
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topologies: Option<Vec<TopologySpec>>,
    pub gamma: f64,
    pub gains: GainsSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub leader: LeaderDynamics,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub ensemble: EnsembleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching: Option<SwitchingSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    /// `ε(0) = (x*(0), v*(0))`, length `2n`.
    pub eps0: Vec<f64>,
}

fn finite(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::at(path, format!("must be finite, got {v}")))
    }
}

fn check_gain(path: &str, g: &GainSchedule) -> Result<(), ConfigError> {
    g.validate()
        .map_err(|e| ConfigError::at(path, e.to_string()))
}

impl RunConfig {
    /// Parses, validates and resolves a configuration.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "$".to_string() } else { path };
            ConfigError::at(path, e.into_inner().to_string())
        })?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Fills in defaults and validates.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        if self.topologies.is_some() && self.switching.is_none() {
            self.switching = Some(SwitchingSpec {
                policy: SwitchingPolicy::RoundRobin,
                dwell: None,
                schedule: None,
            });
        }
        if let Some(sw) = &mut self.switching {
            if sw.policy == SwitchingPolicy::RoundRobin && sw.dwell.is_none() {
                sw.dwell = Some(DEFAULT_DWELL);
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let specs = match (&self.topology, &self.topologies) {
            (Some(t), None) => vec![("topology".to_string(), t)],
            (None, Some(ts)) => {
                if ts.is_empty() {
                    return Err(ConfigError::at("topologies", "must not be empty"));
                }
                ts.iter()
                    .enumerate()
                    .map(|(k, t)| (format!("topologies[{k}]"), t))
                    .collect()
            }
            _ => {
                return Err(ConfigError::at(
                    "$",
                    "exactly one of `topology` and `topologies` is required",
                ))
            }
        };
        let n = specs[0].1.n;
        for (path, t) in &specs {
            validate_topology(path, t)?;
            if t.n != n {
                return Err(ConfigError::at(
                    format!("{path}.n"),
                    format!("all topologies must have {n} followers, got {}", t.n),
                ));
            }
        }

        finite("gamma", self.gamma)?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(ConfigError::at(
                "gamma",
                format!("must lie in (0, 1), got {}", self.gamma),
            ));
        }
        check_gain("gains.h", &self.gains.h)?;
        check_gain("gains.g", &self.gains.g)?;

        match &self.noise.sigma {
            SigmaSpec::Uniform(s) => {
                finite("noise.sigma", *s)?;
                if *s < 0.0 {
                    return Err(ConfigError::at("noise.sigma", "must be nonnegative"));
                }
            }
            SigmaSpec::Table(entries) => {
                for (k, e) in entries.iter().enumerate() {
                    let p = format!("noise.sigma[{k}]");
                    if e.from > n {
                        return Err(ConfigError::at(
                            format!("{p}.from"),
                            format!("vertex outside 0..={n}"),
                        ));
                    }
                    if e.to == 0 || e.to > n {
                        return Err(ConfigError::at(
                            format!("{p}.to"),
                            format!("vertex outside 1..={n}"),
                        ));
                    }
                    finite(&format!("{p}.sigma"), e.sigma)?;
                    if e.sigma < 0.0 {
                        return Err(ConfigError::at(format!("{p}.sigma"), "must be nonnegative"));
                    }
                }
            }
        }

        self.leader
            .validate()
            .map_err(|e| ConfigError::at("leader", e.to_string()))?;
        self.sim
            .validate()
            .map_err(|e| ConfigError::at("sim", e.to_string()))?;
        if self.ensemble.runs < 2 {
            return Err(ConfigError::at(
                "ensemble.runs",
                "at least 2 runs are required",
            ));
        }
        if self.ensemble.runs > u32::MAX as usize {
            return Err(ConfigError::at("ensemble.runs", "too many runs"));
        }

        if self.eps0.len() != 2 * n {
            return Err(ConfigError::at(
                "eps0",
                format!("expected {} entries, got {}", 2 * n, self.eps0.len()),
            ));
        }
        for (k, v) in self.eps0.iter().enumerate() {
            finite(&format!("eps0[{k}]"), *v)?;
        }

        if let Some(sw) = &self.switching {
            let count = specs.len();
            self.signal_for(sw, count)?;
        }
        Ok(())
    }

    fn signal_for(&self, sw: &SwitchingSpec, count: usize) -> Result<SwitchingSignal, ConfigError> {
        let sig = match sw.policy {
            SwitchingPolicy::RoundRobin => {
                if sw.schedule.is_some() {
                    return Err(ConfigError::at(
                        "switching.schedule",
                        "not used by round_robin",
                    ));
                }
                let dwell = sw.dwell.unwrap_or(DEFAULT_DWELL);
                finite("switching.dwell", dwell)?;
                SwitchingSignal::RoundRobin { dwell, count }
            }
            SwitchingPolicy::ExplicitSchedule => {
                if sw.dwell.is_some() {
                    return Err(ConfigError::at(
                        "switching.dwell",
                        "not used by explicit_schedule",
                    ));
                }
                let entries = sw.schedule.as_ref().ok_or_else(|| {
                    ConfigError::at("switching.schedule", "required by explicit_schedule")
                })?;
                SwitchingSignal::ExplicitSchedule {
                    breakpoints: entries.iter().map(|e| e.t).collect(),
                    indices: entries.iter().map(|e| e.index).collect(),
                }
            }
        };
        sig.validate(count)
            .map_err(|e| ConfigError::at("switching", e.to_string()))?;
        Ok(sig)
    }

    pub fn n(&self) -> usize {
        self.specs()[0].n
    }

    /// `true` when the configuration carries a topology set.
    pub fn is_switching(&self) -> bool {
        self.topologies.is_some()
    }

    fn specs(&self) -> Vec<&TopologySpec> {
        match (&self.topology, &self.topologies) {
            (Some(t), _) => vec![t],
            (None, Some(ts)) => ts.iter().collect(),
            (None, None) => Vec::new(),
        }
    }

    pub fn noise_table(&self) -> Result<NoiseTable, Error> {
        let n = self.n();
        Ok(match &self.noise.sigma {
            SigmaSpec::Uniform(s) => NoiseTable::uniform(n, *s)?,
            SigmaSpec::Table(entries) => {
                let list: Vec<_> = entries.iter().map(|e| (e.from, e.to, e.sigma)).collect();
                NoiseTable::from_entries(n, &list)?
            }
        })
    }

    /// Every configured topology, in order.
    pub fn leader_topologies(&self) -> Result<Vec<LeaderTopology>, Error> {
        let sigma = self.noise_table()?;
        self.specs()
            .into_iter()
            .map(|t| build_topology(t, sigma.clone()))
            .collect()
    }

    pub fn protocol_system(&self) -> Result<ProtocolSystem, Error> {
        let topology = self.leader_topologies()?.remove(0);
        Ok(ProtocolSystem::new(
            topology,
            self.gamma,
            self.gains.h,
            self.gains.g,
            self.noise.mode,
        )?)
    }

    pub fn topology_set(&self) -> Result<TopologySet, Error> {
        Ok(TopologySet::new(self.leader_topologies()?)?)
    }

    /// Switching signal; a single topology gets a one-member round robin.
    pub fn signal(&self) -> Result<SwitchingSignal, Error> {
        let count = self.specs().len();
        match &self.switching {
            Some(sw) => Ok(self.signal_for(sw, count)?),
            None => Ok(SwitchingSignal::round_robin(DEFAULT_DWELL, count)?),
        }
    }

    pub fn switched_system(&self) -> Result<SwitchedSystem, Error> {
        Ok(SwitchedSystem::new(
            self.topology_set()?,
            self.signal()?,
            self.gamma,
            self.gains.h,
            self.gains.g,
            self.noise.mode,
        )?)
    }
}

fn validate_topology(path: &str, t: &TopologySpec) -> Result<(), ConfigError> {
    let n = t.n;
    if n == 0 || n > MAX_FOLLOWERS {
        return Err(ConfigError::at(
            format!("{path}.n"),
            format!("must lie in 1..={MAX_FOLLOWERS}, got {n}"),
        ));
    }
    for (k, a) in t.arcs.iter().enumerate() {
        let p = format!("{path}.arcs[{k}]");
        for (field, v) in [("from", a.from), ("to", a.to)] {
            if v == 0 || v > n {
                return Err(ConfigError::at(
                    format!("{p}.{field}"),
                    format!("follower {v} outside 1..={n}"),
                ));
            }
        }
        if a.from == a.to {
            return Err(ConfigError::at(p, "self-loops are not allowed"));
        }
        finite(&format!("{p}.weight"), a.weight)?;
        if a.weight <= 0.0 {
            return Err(ConfigError::at(format!("{p}.weight"), "must be positive"));
        }
    }
    let mut seen = vec![false; n + 1];
    for (k, l) in t.leader.iter().enumerate() {
        let p = format!("{path}.leader[{k}]");
        if l.agent == 0 || l.agent > n {
            return Err(ConfigError::at(
                format!("{p}.agent"),
                format!("follower {} outside 1..={n}", l.agent),
            ));
        }
        if std::mem::replace(&mut seen[l.agent], true) {
            return Err(ConfigError::at(format!("{p}.agent"), "listed twice"));
        }
        finite(&format!("{p}.weight"), l.weight)?;
        if l.weight < 0.0 {
            return Err(ConfigError::at(
                format!("{p}.weight"),
                "must be nonnegative",
            ));
        }
    }
    Ok(())
}

fn build_topology(t: &TopologySpec, sigma: NoiseTable) -> Result<LeaderTopology, Error> {
    let arcs: Vec<Arc> = t
        .arcs
        .iter()
        .map(|a| Arc::new(a.from, a.to, a.weight))
        .collect();
    let followers = WeightedDigraph::from_arcs(t.n, &arcs)?;
    let mut b = vec![0.0; t.n];
    for l in &t.leader {
        b[l.agent - 1] = l.weight;
    }
    Ok(LeaderTopology::new(followers, b, sigma)?)
}

impl From<&LeaderTopology> for TopologySpec {
    fn from(t: &LeaderTopology) -> Self {
        Self {
            n: t.n(),
            arcs: t
                .followers()
                .arcs()
                .into_iter()
                .map(|a| ArcSpec {
                    from: a.from,
                    to: a.to,
                    weight: a.weight,
                })
                .collect(),
            leader: t
                .leader_weights()
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(i, &w)| LeaderLink {
                    agent: i + 1,
                    weight: w,
                })
                .collect(),
        }
    }
}
