//! Experiment configuration: a TOML file with nested number arrays for the
//! system matrices.
//!
//! ```toml
//! mode = "clustered"   # clustered | pooled | single_agent | sweep_N | sweep_cluster_size
//! num_clusters = 3
//! num_systems = 50
//! num_rollouts = 100   # or one entry per system
//! horizon = 50
//! iterations = 100
//! alpha0 = 0.25
//! seed = 0
//!
//! [step]
//! rule = "fixed"       # or "theoretical"
//! value = 0.001
//!
//! [[clusters]]
//! members = 10
//! a = [[0.5, 0.3, 0.1], [0.0, 0.2, 0.0], [0.1, 0.0, 0.3]]
//! b = [[1.0, 0.5], [0.1, 1.0], [0.75, 1.5]]
//! sigma_x = 0.11
//! sigma_u = 0.11
//! sigma_w = 0.11
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use csysid_core::{ClusterGroundTruth, SystemSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "clustered")]
    Clustered,
    #[serde(rename = "pooled")]
    Pooled,
    #[serde(rename = "single_agent")]
    SingleAgent,
    #[serde(rename = "sweep_N")]
    SweepRollouts,
    #[serde(rename = "sweep_cluster_size")]
    SweepClusterSize,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Clustered,
        Mode::Pooled,
        Mode::SingleAgent,
        Mode::SweepRollouts,
        Mode::SweepClusterSize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Clustered => "clustered",
            Mode::Pooled => "pooled",
            Mode::SingleAgent => "single_agent",
            Mode::SweepRollouts => "sweep_N",
            Mode::SweepClusterSize => "sweep_cluster_size",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
                format!("unknown mode '{s}' (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepConfig {
    Fixed { value: f64 },
    Theoretical,
}

/// Trajectory count: shared by every system or listed per system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rollouts {
    Global(usize),
    PerSystem(Vec<usize>),
}

impl Rollouts {
    pub fn for_system(&self, i: usize) -> usize {
        match self {
            Rollouts::Global(n) => *n,
            Rollouts::PerSystem(v) => v[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub members: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub sigma_x: f64,
    pub sigma_u: f64,
    pub sigma_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_sweep_rollouts")]
    pub num_rollouts: Vec<usize>,
    #[serde(default = "default_sweep_sizes")]
    pub cluster_sizes: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            num_rollouts: default_sweep_rollouts(),
            cluster_sizes: default_sweep_sizes(),
        }
    }
}

fn default_sweep_rollouts() -> Vec<usize> {
    vec![5, 20, 100]
}

fn default_sweep_sizes() -> Vec<usize> {
    vec![1, 4, 16]
}

fn default_seeds() -> usize {
    20
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub num_clusters: usize,
    pub num_systems: usize,
    pub num_rollouts: Rollouts,
    pub horizon: usize,
    pub iterations: usize,
    pub alpha0: f64,
    #[serde(default)]
    pub seed: u64,
    /// Replicates per setting in sweep modes.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// Confidence parameter used only by the informational diagnostics.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub step: StepConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    pub clusters: Vec<ClusterConfig>,
}

/// A configuration problem, located in the source text when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(
                f,
                "config error at line {l}: {}: {}",
                self.field, self.message
            ),
            None => write!(f, "config error: {}: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Finds the 1-based line of `field` (`key`, `section.key` or
/// `clusters[i].key`) in TOML source.
fn locate(source: &str, field: &str) -> Option<usize> {
    let (section, index, key) = match field.split_once('.') {
        None => (None, 0, field),
        Some((head, key)) => match head.split_once('[') {
            Some((name, rest)) => {
                let idx = rest.trim_end_matches(']').parse().unwrap_or(0);
                (Some(name), idx, key)
            }
            None => (Some(head), 0, key),
        },
    };
    let mut current: Option<&str> = None;
    let mut seen = 0usize;
    for (n, line) in source.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix("[[").and_then(|r| r.strip_suffix("]]")) {
            if current == Some(name.trim()) {
                seen += 1;
            } else {
                seen = 0;
            }
            current = Some(name.trim());
            if key.is_empty() && section == current && seen == index {
                return Some(n + 1);
            }
            continue;
        }
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = Some(name.trim());
            seen = 0;
            continue;
        }
        let in_scope = current == section && seen == index;
        if in_scope {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

struct Validator<'a> {
    source: &'a str,
}

impl Validator<'_> {
    fn err(&self, field: impl Into<String>, message: impl Into<String>) -> ConfigError {
        let field = field.into();
        let line = locate(self.source, &field).or_else(|| {
            field
                .split_once('.')
                .and_then(|(head, _)| locate(self.source, &format!("{head}.")))
        });
        ConfigError {
            line,
            field,
            message: message.into(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates TOML text.
    pub fn from_toml_str(source: &str) -> std::result::Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(source).map_err(|e| {
            let line = e
                .span()
                .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1);
            ConfigError {
                field: "<parse>".into(),
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        cfg.validate_against(source)?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Checks every invariant; errors carry a line number when the field
    /// appears in `source`.
    pub fn validate_against(&self, source: &str) -> std::result::Result<(), ConfigError> {
        let v = Validator { source };
        if self.clusters.is_empty() {
            return Err(v.err("clusters", "at least one [[clusters]] entry is required"));
        }
        if self.num_clusters != self.clusters.len() {
            return Err(v.err(
                "num_clusters",
                format!(
                    "num_clusters = {} but {} [[clusters]] entries are defined",
                    self.num_clusters,
                    self.clusters.len()
                ),
            ));
        }
        let member_sum: usize = self.clusters.iter().map(|c| c.members).sum();
        if member_sum != self.num_systems {
            return Err(v.err(
                "num_systems",
                format!(
                    "num_systems = {} but clusters[*].members sum to {member_sum}",
                    self.num_systems
                ),
            ));
        }
        let n_x = self.clusters[0].a.len();
        let n_u = self.clusters[0].b.first().map_or(0, Vec::len);
        if n_x == 0 || n_u == 0 {
            return Err(v.err("clusters[0].a", "system matrices must be non-empty"));
        }
        for (j, c) in self.clusters.iter().enumerate() {
            if c.members == 0 {
                return Err(v.err(format!("clusters[{j}].members"), "must be at least 1"));
            }
            if c.a.len() != n_x || c.a.iter().any(|row| row.len() != n_x) {
                return Err(v.err(
                    format!("clusters[{j}].a"),
                    format!("A must be {n_x}x{n_x} like clusters[0].a"),
                ));
            }
            if c.b.len() != n_x || c.b.iter().any(|row| row.len() != n_u) {
                return Err(v.err(
                    format!("clusters[{j}].b"),
                    format!("B must be {n_x}x{n_u} like clusters[0].b"),
                ));
            }
            if c.a.iter().chain(&c.b).flatten().any(|x| !x.is_finite()) {
                return Err(v.err(format!("clusters[{j}].a"), "matrix entries must be finite"));
            }
            for (name, s) in [("sigma_x", c.sigma_x), ("sigma_u", c.sigma_u)] {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(v.err(
                        format!("clusters[{j}].{name}"),
                        format!("must be positive, got {s}"),
                    ));
                }
            }
            if !(c.sigma_w >= 0.0 && c.sigma_w.is_finite()) {
                return Err(v.err(
                    format!("clusters[{j}].sigma_w"),
                    format!("must be non-negative, got {}", c.sigma_w),
                ));
            }
        }
        match &self.num_rollouts {
            Rollouts::Global(0) => return Err(v.err("num_rollouts", "must be at least 1")),
            Rollouts::PerSystem(list) if list.len() != self.num_systems => {
                return Err(v.err(
                    "num_rollouts",
                    format!(
                        "{} entries listed for {} systems",
                        list.len(),
                        self.num_systems
                    ),
                ))
            }
            Rollouts::PerSystem(list) if list.contains(&0) => {
                return Err(v.err("num_rollouts", "every entry must be at least 1"))
            }
            _ => {}
        }
        if self.horizon == 0 {
            return Err(v.err("horizon", "must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(v.err("iterations", "must be at least 1"));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 < 0.5) {
            return Err(v.err(
                "alpha0",
                format!("must lie in (0, 0.5), got {}", self.alpha0),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(v.err("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if self.seeds == 0 {
            return Err(v.err("seeds", "must be at least 1"));
        }
        if let StepConfig::Fixed { value } = self.step {
            if !(value > 0.0 && value.is_finite()) {
                return Err(v.err("step.value", format!("must be positive, got {value}")));
            }
        }
        if self.sweep.num_rollouts.is_empty() || self.sweep.num_rollouts.contains(&0) {
            return Err(v.err(
                "sweep.num_rollouts",
                "must be a non-empty list of positive counts",
            ));
        }
        if self.sweep.cluster_sizes.is_empty() || self.sweep.cluster_sizes.contains(&0) {
            return Err(v.err(
                "sweep.cluster_sizes",
                "must be a non-empty list of positive sizes",
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        self.validate_against("")
    }

    pub fn n_x(&self) -> usize {
        self.clusters[0].a.len()
    }

    pub fn n_u(&self) -> usize {
        self.clusters[0].b[0].len()
    }

    pub fn truths(&self) -> Vec<ClusterGroundTruth> {
        let (n_x, n_u) = (self.n_x(), self.n_u());
        self.clusters
            .iter()
            .map(|c| {
                let a: Vec<f64> = c.a.iter().flatten().copied().collect();
                let b: Vec<f64> = c.b.iter().flatten().copied().collect();
                ClusterGroundTruth::new(
                    DMatrix::from_row_slice(n_x, n_x, &a),
                    DMatrix::from_row_slice(n_x, n_u, &b),
                )
                .expect("validated config")
            })
            .collect()
    }

    /// Systems in cluster order; system ids are consecutive from 0.
    pub fn system_specs(&self) -> Vec<SystemSpec> {
        let sizes: Vec<usize> = self.clusters.iter().map(|c| c.members).collect();
        self.specs_with_sizes(&sizes, None)
    }

    /// Specs with overridden cluster sizes and optionally a global rollout
    /// count (used by the sweeps).
    pub fn specs_with_sizes(&self, sizes: &[usize], rollouts: Option<usize>) -> Vec<SystemSpec> {
        let mut out = Vec::new();
        for (j, (c, &size)) in self.clusters.iter().zip(sizes).enumerate() {
            for _ in 0..size {
                let id = out.len();
                let n = rollouts.unwrap_or_else(|| match &self.num_rollouts {
                    Rollouts::PerSystem(v) if v.len() > id => v[id],
                    Rollouts::PerSystem(v) => v[v.len() - 1],
                    Rollouts::Global(n) => *n,
                });
                out.push(SystemSpec {
                    system_id: id,
                    cluster_id: j,
                    sigma_x: c.sigma_x,
                    sigma_u: c.sigma_u,
                    sigma_w: c.sigma_w,
                    num_rollouts: n,
                    horizon: self.horizon,
                });
            }
        }
        out
    }

    pub fn labels(&self) -> Vec<usize> {
        self.system_specs().iter().map(|s| s.cluster_id).collect()
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    ExperimentConfig::from_toml_str(&text).map_err(HarnessError::Config)
}

/// The bundled three-cluster benchmark configuration.
pub const BENCHMARK_CONFIG: &str = include_str!("../configs/benchmark.toml");
