//! Independent oracles shared by the acceptance suite.

use fedcure_core::config::{ClientProfile, LabelDistribution, Partition};
use fedcure_core::divergence::js;
use fedcure_core::learner::{batch_loss, ModelParams, Sample};

/// Distribution of each coalition under `partition`.
pub fn coalition_dists(partition: &Partition, clients: &[ClientProfile]) -> Vec<LabelDistribution> {
    (0..partition.n_coalitions())
        .map(|m| {
            let k = clients[0].label_counts.len();
            let mut counts = vec![0u64; k];
            for &n in &partition.members(m) {
                for (acc, &c) in counts.iter_mut().zip(&clients[n].label_counts) {
                    *acc += c;
                }
            }
            LabelDistribution::from_counts(&counts).expect("nonempty coalition")
        })
        .collect()
}

/// Potential change of moving `client` into `to`, via the pairwise-sum
/// decomposition: only pairs touching the source or target coalition change,
/// so ΔU = Σ_j [JS(Q'_a,Q_j) − JS(Q_a,Q_j)] + Σ_j [JS(Q'_b,Q_j) − JS(Q_b,Q_j)]
/// + [JS(Q'_a,Q'_b) − JS(Q_a,Q_b)] over the untouched coalitions j.
pub fn decomposition_delta(
    partition: &Partition,
    clients: &[ClientProfile],
    client: usize,
    to: usize,
) -> f64 {
    let from = partition.coalition_of(client);
    assert_ne!(from, to);
    let before = coalition_dists(partition, clients);
    let mut moved = partition.clone();
    moved.reassign(client, to).unwrap();
    let after = coalition_dists(&moved, clients);

    let mut delta = 0.0;
    for j in 0..partition.n_coalitions() {
        if j == from || j == to {
            continue;
        }
        delta += js(&after[from], &after[j]).unwrap().nats()
            - js(&before[from], &before[j]).unwrap().nats();
        delta +=
            js(&after[to], &after[j]).unwrap().nats() - js(&before[to], &before[j]).unwrap().nats();
    }
    delta += js(&after[from], &after[to]).unwrap().nats()
        - js(&before[from], &before[to]).unwrap().nats();
    delta
}

/// Best (most negative) avg-JS change over all legal single moves, computed
/// by exhaustive enumeration with from-scratch recomputation.
pub fn best_single_move_delta(partition: &Partition, clients: &[ClientProfile]) -> f64 {
    let m_count = partition.n_coalitions();
    let base = avg_js_from_scratch(partition, clients);
    let mut best = f64::INFINITY;
    for client in 0..partition.n_clients() {
        let from = partition.coalition_of(client);
        if partition.members(from).len() < 2 {
            continue;
        }
        for to in 0..m_count {
            if to == from {
                continue;
            }
            let mut moved = partition.clone();
            moved.reassign(client, to).unwrap();
            best = best.min(avg_js_from_scratch(&moved, clients) - base);
        }
    }
    best
}

pub fn avg_js_from_scratch(partition: &Partition, clients: &[ClientProfile]) -> f64 {
    let dists = coalition_dists(partition, clients);
    let m = dists.len();
    let mut sum = 0.0;
    for i in 0..m - 1 {
        for j in i + 1..m {
            sum += js(&dists[i], &dists[j]).unwrap().nats();
        }
    }
    sum / (m * (m - 1) / 2) as f64
}

/// Best stationary randomized policy value over the 3-simplex grid with the
/// given step denominator, subject to p_m ≥ δ_m: max Σ p_m·g_m.
pub fn simplex_grid_max(g: &[f64; 3], delta: &[f64; 3], denominator: usize) -> f64 {
    let d = denominator as f64;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=denominator {
        for j in 0..=denominator - i {
            let k = denominator - i - j;
            let p = [i as f64 / d, j as f64 / d, k as f64 / d];
            if p.iter().zip(delta).any(|(&pi, &di)| pi < di - 1e-12) {
                continue;
            }
            let value: f64 = p.iter().zip(g).map(|(&pi, &gi)| pi * gi).sum();
            best = best.max(value);
        }
    }
    best
}

/// Central finite differences of the mean cross-entropy.
pub fn finite_diff_gradient(model: &ModelParams, samples: &[&Sample]) -> Vec<f64> {
    let mut out = vec![0.0; model.weights.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let h = 1e-6 * (1.0 + model.weights[i].abs());
        let mut plus = model.clone();
        plus.weights[i] += h;
        let mut minus = model.clone();
        minus.weights[i] -= h;
        *slot = (batch_loss(&plus, samples) - batch_loss(&minus, samples)) / (2.0 * h);
    }
    out
}
