//! Ground-truth coalition latency generation and conjugate Bayesian
//! estimation of the per-coalition upload time.
//!
//! One upload of coalition `m` takes
//! `τ_e · max_n(τ_c·c_n/f_n + comm_n) · lognormal(0, σ) + edge_cloud_delay_m`:
//! the slowest member paces each synchronous edge round, the lognormal factor
//! models stragglers with positive support, and the edge–cloud hop adds a
//! fixed tail. The scheduler never sees these draws directly; it consumes the
//! posterior mean of a Normal–Normal belief updated from realized uploads.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatencyError {
    #[error("frequency must be positive, got {0}")]
    InvalidFrequency(f64),
    #[error("latency observation must be positive, got {0}")]
    InvalidObservation(f64),
    #[error("coalition has no members")]
    EmptyCoalition,
    #[error("belief variances must be positive")]
    InvalidBelief,
}

/// Ground-truth latency parameters for the whole population.
#[derive(Debug, Clone)]
pub struct LatencyModel {
    pub tau_c: u32,
    pub tau_e: u32,
    /// CPU cycles per local step, per client.
    pub comp_load: Vec<f64>,
    /// Fixed upload delay in seconds, per client.
    pub comm_delay: Vec<f64>,
    /// Edge-to-cloud delay in seconds, per coalition.
    pub edge_cloud_delay: Vec<f64>,
    /// Log-space std of the multiplicative noise.
    pub noise_sigma: f64,
}

/// Draw the realized upload latency for one dispatched coalition.
pub fn realize_latency<R: Rng>(
    model: &LatencyModel,
    coalition: usize,
    members: &[usize],
    freqs: &[f64],
    rng: &mut R,
) -> Result<f64, LatencyError> {
    if members.is_empty() {
        return Err(LatencyError::EmptyCoalition);
    }
    let mut slowest: f64 = 0.0;
    for (&n, &f) in members.iter().zip(freqs) {
        if f <= 0.0 {
            return Err(LatencyError::InvalidFrequency(f));
        }
        let step = f64::from(model.tau_c) * model.comp_load[n] / f + model.comm_delay[n];
        slowest = slowest.max(step);
    }
    let noise = if model.noise_sigma > 0.0 {
        LogNormal::new(0.0, model.noise_sigma)
            .expect("nonnegative sigma")
            .sample(rng)
    } else {
        1.0
    };
    Ok(f64::from(model.tau_e) * slowest * noise + model.edge_cloud_delay[coalition])
}

/// Normal–Normal conjugate belief over one coalition's upload latency.
///
/// With prior N(μ0, σ0²) and observations of known variance σ_obs², the
/// posterior after n observations summing to S has
/// precision 1/σ0² + n/σ_obs² and mean (μ0/σ0² + S/σ_obs²)/precision.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyBelief {
    prior_mean: f64,
    prior_var: f64,
    obs_var: f64,
    n_obs: u64,
    obs_sum: f64,
}

impl LatencyBelief {
    pub fn new(prior_mean: f64, prior_var: f64, obs_var: f64) -> Result<Self, LatencyError> {
        if prior_var <= 0.0 || obs_var <= 0.0 {
            return Err(LatencyError::InvalidBelief);
        }
        Ok(Self {
            prior_mean,
            prior_var,
            obs_var,
            n_obs: 0,
            obs_sum: 0.0,
        })
    }

    pub fn n_obs(&self) -> u64 {
        self.n_obs
    }

    /// Fold one realized latency into the posterior.
    pub fn update(&self, observation: f64) -> Result<Self, LatencyError> {
        if observation <= 0.0 || !observation.is_finite() {
            return Err(LatencyError::InvalidObservation(observation));
        }
        let mut next = self.clone();
        next.n_obs += 1;
        next.obs_sum += observation;
        Ok(next)
    }

    /// Current posterior mean; the scheduler's T̂.
    pub fn estimate(&self) -> f64 {
        if self.n_obs == 0 {
            return self.prior_mean;
        }
        let precision = 1.0 / self.prior_var + self.n_obs as f64 / self.obs_var;
        (self.prior_mean / self.prior_var + self.obs_sum / self.obs_var) / precision
    }

    pub fn posterior_variance(&self) -> f64 {
        1.0 / (1.0 / self.prior_var + self.n_obs as f64 / self.obs_var)
    }
}

/// Belief constructed from a coalition's first observed upload: μ0 is the
/// observation itself, σ0² = μ0², and σ_obs² = (noise_sigma·μ0)² floored so
/// it stays positive when the noise is switched off.
pub fn belief_from_first_observation(
    observation: f64,
    noise_sigma: f64,
) -> Result<LatencyBelief, LatencyError> {
    if observation <= 0.0 || !observation.is_finite() {
        return Err(LatencyError::InvalidObservation(observation));
    }
    let obs_sd = (noise_sigma * observation).max(1e-6 * observation);
    LatencyBelief::new(observation, observation * observation, obs_sd * obs_sd)
}
