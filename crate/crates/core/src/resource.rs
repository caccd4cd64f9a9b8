//! Client utility and closed-form optimal CPU frequency.
//!
//! A client running at frequency f trades deadline slack against energy:
//! Z(f) = α·(1 − c/(f·T̂)) − γ·f^ς. Z is strictly concave on f > 0, so the
//! stationary point ((α·c)/(ς·γ·T̂))^(1/(ς+1)) clamped at f_max is the global
//! maximizer on (0, f_max].

use thiserror::Error;

use crate::config::ClientProfile;

#[derive(Debug, Error, PartialEq)]
pub enum ResourceError {
    #[error("frequency must be positive, got {0}")]
    InvalidFrequency(f64),
}

/// Weights of the efficiency/energy trade-off: α, γ, and the energy
/// exponent ς ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityParams {
    pub alpha: f64,
    pub gamma: f64,
    pub varsigma: f64,
}

impl UtilityParams {
    pub fn new(alpha: f64, gamma: f64, varsigma: f64) -> Self {
        debug_assert!(alpha > 0.0 && gamma > 0.0 && varsigma >= 1.0);
        Self {
            alpha,
            gamma,
            varsigma,
        }
    }
}

/// Z(f) = α·(1 − c/(f·T̂)) − γ·f^ς.
pub fn utility(
    params: &UtilityParams,
    comp_load: f64,
    t_hat: f64,
    freq: f64,
) -> Result<f64, ResourceError> {
    if freq <= 0.0 {
        return Err(ResourceError::InvalidFrequency(freq));
    }
    debug_assert!(comp_load > 0.0 && t_hat > 0.0);
    Ok(params.alpha * (1.0 - comp_load / (freq * t_hat))
        - params.gamma * freq.powf(params.varsigma))
}

/// The clamped stationary point min{f_max, ((α·c)/(ς·γ·T̂))^(1/(ς+1))}.
pub fn optimal_frequency(params: &UtilityParams, comp_load: f64, t_hat: f64, f_max: f64) -> f64 {
    debug_assert!(comp_load > 0.0 && t_hat > 0.0 && f_max > 0.0);
    let interior = (params.alpha * comp_load / (params.varsigma * params.gamma * t_hat))
        .powf(1.0 / (params.varsigma + 1.0));
    if interior >= f_max {
        f_max
    } else {
        interior
    }
}

/// Optimal frequency for each member of the scheduled coalition, given the
/// scheduler's current latency estimate for it.
pub fn apply_allocation(
    params: &UtilityParams,
    clients: &[ClientProfile],
    members: &[usize],
    t_hat: f64,
) -> Vec<f64> {
    members
        .iter()
        .map(|&n| {
            let c = &clients[n];
            optimal_frequency(params, c.comp_load, t_hat, c.f_max)
        })
        .collect()
}
