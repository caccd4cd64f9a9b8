//! Kullback–Leibler and Jensen–Shannon divergences over label distributions,
//! plus the average pairwise JSD objective the coalition game minimizes.
//!
//! Natural-log units throughout, so two disjoint distributions sit at
//! JS = ln 2 ≈ 0.6931. Probabilities below 1e-15 are treated as exact zeros
//! before the 0·ln(0/x) = 0 convention applies, so normalization noise cannot
//! blow up the logs.

use thiserror::Error;

use crate::config::LabelDistribution;

/// Entries at or below this are treated as exactly zero.
const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DivergenceError {
    #[error("distributions have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("KL divergence unbounded: p_{0} > 0 while q_{0} = 0")]
    UnboundedDivergence(usize),
    #[error("average JSD needs at least two distributions, got {0}")]
    InsufficientCoalitions(usize),
}

/// A divergence in natural-log units; nonnegative, and at most ln 2 for JS.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DivergenceValue {
    nats: f64,
}

impl DivergenceValue {
    fn new(nats: f64) -> Self {
        // KL/JS are nonnegative; rounding may leave a tiny negative residue.
        Self {
            nats: nats.max(0.0),
        }
    }

    pub fn nats(&self) -> f64 {
        self.nats
    }
}

fn floored(p: f64) -> f64 {
    if p <= PROB_FLOOR {
        0.0
    } else {
        p
    }
}

/// Σ_k p_k·ln(p_k/q_k) with the 0·ln(0/x) = 0 convention.
pub fn kl(
    p: &LabelDistribution,
    q: &LabelDistribution,
) -> Result<DivergenceValue, DivergenceError> {
    if p.len() != q.len() {
        return Err(DivergenceError::LengthMismatch(p.len(), q.len()));
    }
    let mut sum = 0.0;
    for (k, (&pk, &qk)) in p.probs().iter().zip(q.probs()).enumerate() {
        let pk = floored(pk);
        let qk = floored(qk);
        if pk == 0.0 {
            continue;
        }
        if qk == 0.0 {
            return Err(DivergenceError::UnboundedDivergence(k));
        }
        sum += pk * (pk / qk).ln();
    }
    Ok(DivergenceValue::new(sum))
}

/// Jensen–Shannon divergence via the mean distribution:
/// ½·KL(p, m) + ½·KL(q, m) with m = (p + q)/2. Symmetric and in [0, ln 2].
pub fn js(
    p: &LabelDistribution,
    q: &LabelDistribution,
) -> Result<DivergenceValue, DivergenceError> {
    if p.len() != q.len() {
        return Err(DivergenceError::LengthMismatch(p.len(), q.len()));
    }
    let mix: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&a, &b)| 0.5 * (a + b))
        .collect();
    // The mixture dominates both marginals, so KL cannot be unbounded here.
    let mix = LabelDistribution::from_probs(mix).expect("mixture of distributions is valid");
    let a = kl(p, &mix)?;
    let b = kl(q, &mix)?;
    Ok(DivergenceValue::new(0.5 * (a.nats() + b.nats())))
}

/// Average pairwise JS over all C(M,2) coalition pairs.
pub fn avg_js(distributions: &[LabelDistribution]) -> Result<DivergenceValue, DivergenceError> {
    let m = distributions.len();
    if m < 2 {
        return Err(DivergenceError::InsufficientCoalitions(m));
    }
    let mut sum = 0.0;
    for i in 0..m - 1 {
        for j in i + 1..m {
            sum += js(&distributions[i], &distributions[j])?.nats();
        }
    }
    let pairs = (m * (m - 1) / 2) as f64;
    Ok(DivergenceValue::new(sum / pairs))
}
