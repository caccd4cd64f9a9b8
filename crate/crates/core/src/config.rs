//! Domain entities and experiment configuration shared by all other modules.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("coalition {0} has no members")]
    EmptyCoalition(usize),
    #[error("failed to read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

/// Per-client profile: label histogram of the local shard plus the hardware
/// characteristics the latency model consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientProfile {
    pub id: usize,
    /// Total sample count; always the sum of `label_counts`.
    pub dataset_size: u64,
    pub label_counts: Vec<u64>,
    /// CPU cycles per local training step.
    pub comp_load: f64,
    /// Maximum CPU frequency, cycles per second.
    pub f_max: f64,
    /// Fixed upload delay, seconds.
    pub comm_delay: f64,
}

impl ClientProfile {
    pub fn new(
        id: usize,
        label_counts: Vec<u64>,
        comp_load: f64,
        f_max: f64,
        comm_delay: f64,
    ) -> Result<Self, ConfigError> {
        if comp_load <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "client {id}: comp_load must be positive, got {comp_load}"
            )));
        }
        if f_max <= 0.0 {
            return Err(ConfigError::Invalid(format!(
                "client {id}: f_max must be positive, got {f_max}"
            )));
        }
        if comm_delay < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "client {id}: comm_delay must be nonnegative, got {comm_delay}"
            )));
        }
        let dataset_size = label_counts.iter().sum();
        Ok(Self {
            id,
            dataset_size,
            label_counts,
            comp_load,
            f_max,
            comm_delay,
        })
    }
}

/// Normalized histogram over class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    /// Normalize raw label counts into a distribution.
    pub fn from_counts(counts: &[u64]) -> Result<Self, ConfigError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(ConfigError::Invalid(
                "cannot normalize an all-zero label histogram".into(),
            ));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self { probs })
    }

    pub fn from_probs(probs: Vec<f64>) -> Result<Self, ConfigError> {
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(ConfigError::Invalid(
                "label probabilities must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "label probabilities must sum to 1 within 1e-9, got {sum}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Disjoint assignment of clients to coalitions. Every client belongs to
/// exactly one coalition by construction; the validator checks index ranges
/// after each mutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    n_coalitions: usize,
}

impl Partition {
    pub fn new(assignment: Vec<usize>, n_coalitions: usize) -> Result<Self, ConfigError> {
        let p = Self {
            assignment,
            n_coalitions,
        };
        p.validate()?;
        Ok(p)
    }

    /// Contiguous blocks of as-equal-as-possible size: client `i` joins
    /// coalition `i * m / n`.
    pub fn blocks(n_clients: usize, n_coalitions: usize) -> Result<Self, ConfigError> {
        if n_coalitions == 0 || n_clients < n_coalitions {
            return Err(ConfigError::Invalid(format!(
                "cannot split {n_clients} clients into {n_coalitions} nonempty coalitions"
            )));
        }
        let assignment = (0..n_clients)
            .map(|i| i * n_coalitions / n_clients)
            .collect();
        Self::new(assignment, n_coalitions)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_coalitions == 0 {
            return Err(ConfigError::Invalid("partition needs coalitions".into()));
        }
        for (client, &m) in self.assignment.iter().enumerate() {
            if m >= self.n_coalitions {
                return Err(ConfigError::Invalid(format!(
                    "client {client} assigned to coalition {m} out of range 0..{}",
                    self.n_coalitions
                )));
            }
        }
        Ok(())
    }

    pub fn n_clients(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_coalitions(&self) -> usize {
        self.n_coalitions
    }

    pub fn coalition_of(&self, client: usize) -> usize {
        self.assignment[client]
    }

    pub fn members(&self, m: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == m)
            .collect()
    }

    pub fn coalition_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_coalitions];
        for &m in &self.assignment {
            sizes[m] += 1;
        }
        sizes
    }

    /// Move one client to another coalition, revalidating the invariants.
    pub fn reassign(&mut self, client: usize, to: usize) -> Result<(), ConfigError> {
        if to >= self.n_coalitions {
            return Err(ConfigError::Invalid(format!(
                "coalition {to} out of range 0..{}",
                self.n_coalitions
            )));
        }
        self.assignment[client] = to;
        self.validate()
    }
}

/// Label distribution of the data held inside coalition `m`: the normalized
/// sum of raw member label counts (count-weighted, not client-averaged).
pub fn coalition_distribution(
    partition: &Partition,
    clients: &[ClientProfile],
    m: usize,
) -> Result<LabelDistribution, ConfigError> {
    let mut counts: Option<Vec<u64>> = None;
    for client in clients.iter().filter(|c| partition.coalition_of(c.id) == m) {
        let acc = counts.get_or_insert_with(|| vec![0; client.label_counts.len()]);
        for (a, &c) in acc.iter_mut().zip(&client.label_counts) {
            *a += c;
        }
    }
    match counts {
        Some(c) => LabelDistribution::from_counts(&c).map_err(|_| ConfigError::EmptyCoalition(m)),
        None => Err(ConfigError::EmptyCoalition(m)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    FedCure,
    Greedy,
    Fair,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerKind::FedCure => write!(f, "fedcure"),
            SchedulerKind::Greedy => write!(f, "greedy"),
            SchedulerKind::Fair => write!(f, "fair"),
        }
    }
}

impl FromStr for SchedulerKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fedcure" => Ok(SchedulerKind::FedCure),
            "greedy" => Ok(SchedulerKind::Greedy),
            "fair" => Ok(SchedulerKind::Fair),
            other => Err(ConfigError::Invalid(format!(
                "unknown scheduler `{other}` (expected fedcure, greedy, or fair)"
            ))),
        }
    }
}

/// Ground-truth latency model parameters. Per-client hardware is sampled
/// uniformly from the given `[min, max]` ranges at setup time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    /// Log-space std of the multiplicative lognormal noise on each upload.
    pub noise_sigma: f64,
    /// CPU cycles per local step, per client.
    pub comp_load: (f64, f64),
    /// Maximum CPU frequency, cycles per second, per client.
    pub f_max: (f64, f64),
    /// Fixed upload delay in seconds, per client.
    pub comm_delay: (f64, f64),
    /// Edge-to-cloud delay in seconds, per coalition.
    pub edge_cloud_delay: (f64, f64),
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.2,
            comp_load: (0.5, 2.0),
            f_max: (0.8, 1.6),
            comm_delay: (0.05, 0.3),
            edge_cloud_delay: (0.2, 1.0),
        }
    }
}

/// Synthetic learner parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub enabled: bool,
    /// Feature dimension; must be at least `n_classes`.
    pub dim: usize,
    /// Training samples generated per class.
    pub per_class_train: usize,
    /// Held-out test samples per class.
    pub per_class_test: usize,
    /// Minimum pairwise distance between class means.
    pub class_sep: f64,
    pub lr: f64,
    /// SGD minibatch size; batches at least as large as a shard fall back to
    /// full-batch gradient steps.
    pub batch_size: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            dim: 16,
            per_class_train: 100,
            per_class_test: 20,
            class_sep: 3.0,
            lr: 0.01,
            batch_size: 32,
        }
    }
}

/// Complete experiment description. Defaults mirror the 5-edge/50-client
/// reference setup: τ_c=5, τ_e=12, ℓ=0.2, 𝕜=0.9, β=0.5, κ=1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_clients: usize,
    pub n_edges: usize,
    pub n_classes: usize,
    /// Local training steps per edge round.
    pub tau_c: u32,
    /// Edge rounds per upload.
    pub tau_e: u32,
    /// Global rounds.
    pub tau_g: u64,
    /// Initial staleness weight ℓ.
    pub ell: f64,
    /// Staleness penalty coefficient 𝕜.
    pub kpen: f64,
    /// Efficiency weight in the scheduling rule.
    pub beta: f64,
    /// Participation floor scale.
    pub kappa: f64,
    /// Utility efficiency weight.
    pub alpha: f64,
    /// Utility energy coefficient.
    pub gamma: f64,
    /// Utility energy exponent ς.
    pub varsigma: f64,
    pub seed: u64,
    pub scheduler_kind: SchedulerKind,
    /// Iteration cap L of the coalition formation game.
    pub max_game_iters: u64,
    pub latency: LatencyConfig,
    pub learner: LearnerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_clients: 50,
            n_edges: 5,
            n_classes: 10,
            tau_c: 5,
            tau_e: 12,
            tau_g: 200,
            ell: 0.2,
            kpen: 0.9,
            beta: 0.5,
            kappa: 1.0,
            alpha: 1.0,
            gamma: 1.0,
            varsigma: 2.0,
            seed: 42,
            scheduler_kind: SchedulerKind::FedCure,
            max_game_iters: 20_000,
            latency: LatencyConfig::default(),
            learner: LearnerConfig::default(),
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), positive: bool) -> Result<(), ConfigError> {
    let floor_ok = if positive { lo > 0.0 } else { lo >= 0.0 };
    if !floor_ok || hi < lo || !lo.is_finite() || !hi.is_finite() {
        return Err(ConfigError::Invalid(format!(
            "latency.{name} must be a valid [min, max] range, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n_edges < 2 || self.n_clients < self.n_edges {
            return fail(format!(
                "need n_clients >= n_edges >= 2, got n_clients={} n_edges={}",
                self.n_clients, self.n_edges
            ));
        }
        if self.n_classes == 0 {
            return fail("n_classes must be at least 1".into());
        }
        if self.tau_c < 1 || self.tau_e < 1 || self.tau_g < 1 {
            return fail("tau_c, tau_e, tau_g must all be at least 1".into());
        }
        let in_open_unit = |v: f64| v.is_finite() && v > 0.0 && v < 1.0;
        if !in_open_unit(self.ell) {
            return fail(format!("ell must lie in (0, 1), got {}", self.ell));
        }
        if !in_open_unit(self.kpen) {
            return fail(format!("kpen must lie in (0, 1), got {}", self.kpen));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.beta) {
            return fail(format!("beta must be positive, got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return fail(format!("kappa must lie in [0, 1], got {}", self.kappa));
        }
        if !positive(self.alpha) || !positive(self.gamma) {
            return fail("alpha and gamma must be positive".into());
        }
        if self.varsigma < 1.0 {
            return fail(format!(
                "varsigma must be at least 1, got {}",
                self.varsigma
            ));
        }
        if self.max_game_iters == 0 {
            return fail("max_game_iters must be at least 1".into());
        }
        if self.latency.noise_sigma < 0.0 {
            return fail("latency.noise_sigma must be nonnegative".into());
        }
        check_range("comp_load", self.latency.comp_load, true)?;
        check_range("f_max", self.latency.f_max, true)?;
        check_range("comm_delay", self.latency.comm_delay, false)?;
        check_range("edge_cloud_delay", self.latency.edge_cloud_delay, false)?;
        if self.learner.enabled {
            let l = &self.learner;
            if l.dim < self.n_classes {
                return fail(format!(
                    "learner.dim ({}) must be at least n_classes ({})",
                    l.dim, self.n_classes
                ));
            }
            if l.per_class_train == 0 || l.per_class_test == 0 {
                return fail("learner per-class sample counts must be positive".into());
            }
            if !(l.lr.is_finite() && l.lr > 0.0) {
                return fail(format!("learner.lr must be positive, got {}", l.lr));
            }
            if l.batch_size == 0 {
                return fail("learner.batch_size must be positive".into());
            }
            if l.class_sep < 0.0 {
                return fail("learner.class_sep must be nonnegative".into());
            }
        }
        Ok(())
    }

    /// Set a numeric field by name; sweep and CLI overrides funnel through
    /// here so both accept the same spellings.
    pub fn set_numeric_field(&mut self, name: &str, value: f64) -> Result<(), ConfigError> {
        let as_count = |v: f64| -> Result<u64, ConfigError> {
            if v < 0.0 || v.fract() != 0.0 {
                Err(ConfigError::Invalid(format!(
                    "`{name}` needs a nonnegative integer, got {v}"
                )))
            } else {
                Ok(v as u64)
            }
        };
        match name {
            "n_clients" => self.n_clients = as_count(value)? as usize,
            "n_edges" => self.n_edges = as_count(value)? as usize,
            "n_classes" => self.n_classes = as_count(value)? as usize,
            "tau_c" => self.tau_c = as_count(value)? as u32,
            "tau_e" => self.tau_e = as_count(value)? as u32,
            "tau_g" => self.tau_g = as_count(value)?,
            "ell" => self.ell = value,
            "kpen" => self.kpen = value,
            "beta" => self.beta = value,
            "kappa" => self.kappa = value,
            "alpha" => self.alpha = value,
            "gamma" => self.gamma = value,
            "varsigma" => self.varsigma = value,
            "seed" => self.seed = as_count(value)?,
            "max_game_iters" => self.max_game_iters = as_count(value)?,
            "noise_sigma" => self.latency.noise_sigma = value,
            "class_sep" => self.learner.class_sep = value,
            "lr" => self.learner.lr = value,
            other => return Err(ConfigError::UnknownParameter(other.to_string())),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn client(id: usize, counts: &[u64]) -> ClientProfile {
        ClientProfile::new(id, counts.to_vec(), 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn coalition_distribution_single_client() {
        let clients = vec![client(0, &[3, 1])];
        let partition = Partition::new(vec![0], 1).unwrap();
        let dist = coalition_distribution(&partition, &clients, 0).unwrap();
        assert_eq!(dist.probs(), &[0.75, 0.25]);
    }

    #[test]
    fn coalition_distribution_is_count_weighted() {
        let clients = vec![client(0, &[2, 0]), client(1, &[0, 2])];
        let partition = Partition::new(vec![0, 0], 1).unwrap();
        let dist = coalition_distribution(&partition, &clients, 0).unwrap();
        assert_eq!(dist.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn coalition_distribution_symmetric_clients() {
        let clients = vec![client(0, &[1, 1]), client(1, &[1, 1])];
        let partition = Partition::new(vec![0, 0], 1).unwrap();
        let dist = coalition_distribution(&partition, &clients, 0).unwrap();
        assert_eq!(dist.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn coalition_distribution_empty_coalition_errors() {
        let clients = vec![client(0, &[1, 1])];
        let partition = Partition::new(vec![0], 2).unwrap();
        assert!(matches!(
            coalition_distribution(&partition, &clients, 1),
            Err(ConfigError::EmptyCoalition(1))
        ));
    }

    #[test]
    fn distribution_invariants_hold() {
        let dist = LabelDistribution::from_counts(&[1, 2, 3]).unwrap();
        let sum: f64 = dist.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(dist.probs().iter().all(|&p| p >= 0.0));
        assert!(LabelDistribution::from_counts(&[0, 0]).is_err());
        assert!(LabelDistribution::from_probs(vec![0.7, 0.2]).is_err());
        assert!(LabelDistribution::from_probs(vec![0.7, 0.3]).is_ok());
    }

    #[test]
    fn partition_validates_mutations() {
        let mut p = Partition::blocks(6, 3).unwrap();
        assert_eq!(p.coalition_sizes(), vec![2, 2, 2]);
        p.reassign(0, 2).unwrap();
        assert_eq!(p.coalition_of(0), 2);
        assert_eq!(p.coalition_sizes(), vec![1, 2, 3]);
        assert!(p.reassign(0, 3).is_err());
        assert!(Partition::new(vec![0, 5], 2).is_err());
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_clients, 50);
        assert_eq!(cfg.n_edges, 5);
        assert_eq!(cfg.tau_c, 5);
        assert_eq!(cfg.tau_e, 12);
        assert_eq!(cfg.ell, 0.2);
        assert_eq!(cfg.kpen, 0.9);
        assert_eq!(cfg.beta, 0.5);
        assert_eq!(cfg.kappa, 1.0);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg =
            ExperimentConfig::from_toml_str("beta = 2.5\nscheduler_kind = \"greedy\"\n").unwrap();
        assert_eq!(cfg.beta, 2.5);
        assert_eq!(cfg.scheduler_kind, SchedulerKind::Greedy);
        assert_eq!(cfg.n_clients, 50);
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let bad = [
            ExperimentConfig {
                ell: 1.0,
                ..Default::default()
            },
            ExperimentConfig {
                n_edges: 1,
                ..Default::default()
            },
            ExperimentConfig {
                kappa: 1.5,
                ..Default::default()
            },
            ExperimentConfig {
                varsigma: 0.5,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn numeric_overrides_by_name() {
        let mut cfg = ExperimentConfig::default();
        cfg.set_numeric_field("beta", 5.0).unwrap();
        cfg.set_numeric_field("tau_g", 100.0).unwrap();
        assert_eq!(cfg.beta, 5.0);
        assert_eq!(cfg.tau_g, 100);
        assert!(matches!(
            cfg.set_numeric_field("no_such_field", 1.0),
            Err(ConfigError::UnknownParameter(_))
        ));
        assert!(cfg.set_numeric_field("tau_g", 1.5).is_err());
    }
}
