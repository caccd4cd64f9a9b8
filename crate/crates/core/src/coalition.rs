//! Coalition formation game over client–edge associations.
//!
//! Clients switch coalitions to reduce the average pairwise Jensen–Shannon
//! divergence between coalition label distributions. The game is an exact
//! potential game: the potential is the raw pairwise JS sum, so every
//! unilateral switch changes the deviator's utility and the potential by the
//! same amount, and best-response dynamics terminate at a stable partition.

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::config::{ClientProfile, LabelDistribution, Partition};
use crate::divergence::{self, DivergenceValue};
use crate::rng::RandomSource;

/// Two candidate values closer than this are regarded as tied; equivalently,
/// a switch is accepted only when it improves avg-JS by more than this.
pub const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error("coalition {0} is not a valid switch target")]
    InvalidCoalition(usize),
    #[error("coalition {0} has no data to form a distribution")]
    EmptyCoalition(usize),
    #[error("the game needs at least two coalitions")]
    InsufficientCoalitions,
}

/// One hypothetical (or accepted) unilateral switch and its avg-JS effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchProposal {
    pub client: usize,
    pub from: usize,
    pub to: usize,
    /// avg-JS after the move minus avg-JS before; accepted iff negative.
    pub delta_avg_js: f64,
}

/// Record of one formation run.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTrace {
    /// Client visits performed (the `l` counter, capped at L).
    pub iterations: u64,
    /// avg-JS value after each accepted switch; strictly decreasing.
    pub js_history: Vec<f64>,
    pub switches: Vec<SwitchProposal>,
    /// True when a full sweep found no improving switch.
    pub converged: bool,
}

fn label_count(clients: &[ClientProfile]) -> usize {
    clients.first().map_or(0, |c| c.label_counts.len())
}

fn coalition_counts(partition: &Partition, clients: &[ClientProfile]) -> Vec<Vec<u64>> {
    let k = label_count(clients);
    let mut counts = vec![vec![0u64; k]; partition.n_coalitions()];
    for client in clients {
        let m = partition.coalition_of(client.id);
        for (acc, &c) in counts[m].iter_mut().zip(&client.label_counts) {
            *acc += c;
        }
    }
    counts
}

fn distributions(counts: &[Vec<u64>]) -> Result<Vec<LabelDistribution>, GameError> {
    counts
        .iter()
        .enumerate()
        .map(|(m, c)| LabelDistribution::from_counts(c).map_err(|_| GameError::EmptyCoalition(m)))
        .collect()
}

fn avg_js_of(counts: &[Vec<u64>]) -> Result<f64, GameError> {
    let dists = distributions(counts)?;
    divergence::avg_js(&dists)
        .map(|v| v.nats())
        .map_err(|_| GameError::InsufficientCoalitions)
}

/// Average pairwise JS of the partition's coalition distributions.
pub fn average_js(
    partition: &Partition,
    clients: &[ClientProfile],
) -> Result<DivergenceValue, GameError> {
    if partition.n_coalitions() < 2 {
        return Err(GameError::InsufficientCoalitions);
    }
    let dists = distributions(&coalition_counts(partition, clients))?;
    divergence::avg_js(&dists).map_err(|_| GameError::InsufficientCoalitions)
}

/// Potential function of the game: the raw pairwise JS sum, i.e.
/// C(M,2)·avg-JS.
pub fn potential(partition: &Partition, clients: &[ClientProfile]) -> Result<f64, GameError> {
    let dists = distributions(&coalition_counts(partition, clients))?;
    let m = dists.len();
    let mut sum = 0.0;
    for i in 0..m.saturating_sub(1) {
        for j in i + 1..m {
            sum += divergence::js(&dists[i], &dists[j])
                .map_err(|_| GameError::InsufficientCoalitions)?
                .nats();
        }
    }
    Ok(sum)
}

/// Evaluate the avg-JS effect of moving `client` into coalition `to` without
/// modifying the partition. A move that would leave the source coalition
/// without data is rejected as [`GameError::EmptyCoalition`], since avg-JS is
/// undefined over an empty coalition.
pub fn evaluate_switch(
    partition: &Partition,
    clients: &[ClientProfile],
    client: usize,
    to: usize,
) -> Result<SwitchProposal, GameError> {
    if to >= partition.n_coalitions() {
        return Err(GameError::InvalidCoalition(to));
    }
    let from = partition.coalition_of(client);
    if to == from {
        return Err(GameError::InvalidCoalition(to));
    }
    let mut counts = coalition_counts(partition, clients);
    let before = avg_js_of(&counts)?;
    let profile = &clients[client];
    for (k, &c) in profile.label_counts.iter().enumerate() {
        counts[from][k] -= c;
        counts[to][k] += c;
    }
    if counts[from].iter().all(|&c| c == 0) {
        return Err(GameError::EmptyCoalition(from));
    }
    let after = avg_js_of(&counts)?;
    Ok(SwitchProposal {
        client,
        from,
        to,
        delta_avg_js: after - before,
    })
}

/// True when no client has a legal switch improving avg-JS by more than
/// [`IMPROVEMENT_EPS`].
pub fn is_stable(partition: &Partition, clients: &[ClientProfile]) -> Result<bool, GameError> {
    for client in 0..partition.n_clients() {
        let from = partition.coalition_of(client);
        for to in 0..partition.n_coalitions() {
            if to == from {
                continue;
            }
            match evaluate_switch(partition, clients, client, to) {
                Ok(p) if p.delta_avg_js < -IMPROVEMENT_EPS => return Ok(false),
                Ok(_) | Err(GameError::EmptyCoalition(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(true)
}

/// Run the formation dynamics from `initial` until a full sweep accepts no
/// switch or `max_iters` client visits have been spent.
///
/// Each sweep visits all clients in a freshly shuffled order. A visited
/// client moves to the coalition minimizing the post-move avg-JS; targets
/// tying the current coalition within [`IMPROVEMENT_EPS`] lose to it, other
/// ties resolve to the lowest index.
pub fn run_formation(
    initial: &Partition,
    clients: &[ClientProfile],
    max_iters: u64,
    rng: &RandomSource,
) -> Result<(Partition, GameTrace), GameError> {
    let m = initial.n_coalitions();
    if m < 2 {
        return Err(GameError::InsufficientCoalitions);
    }
    let mut partition = initial.clone();
    let mut base = avg_js_of(&coalition_counts(&partition, clients))?;
    let mut rng = rng.rng();
    let mut trace = GameTrace {
        iterations: 0,
        js_history: Vec::new(),
        switches: Vec::new(),
        converged: false,
    };

    'sweeps: loop {
        let mut order: Vec<usize> = (0..partition.n_clients()).collect();
        order.shuffle(&mut rng);
        let mut accepted_in_sweep = false;

        for &client in &order {
            if trace.iterations >= max_iters {
                break 'sweeps;
            }
            trace.iterations += 1;

            let from = partition.coalition_of(client);
            let mut best_to = from;
            let mut best_val = base;
            for to in 0..m {
                if to == from {
                    continue;
                }
                let proposal = match evaluate_switch(&partition, clients, client, to) {
                    Ok(p) => p,
                    Err(GameError::EmptyCoalition(_)) => continue,
                    Err(e) => return Err(e),
                };
                let val = base + proposal.delta_avg_js;
                if val < best_val - IMPROVEMENT_EPS {
                    best_val = val;
                    best_to = to;
                }
            }

            if best_to != from {
                let proposal = evaluate_switch(&partition, clients, client, best_to)?;
                partition
                    .reassign(client, best_to)
                    .expect("target index already validated");
                base = avg_js_of(&coalition_counts(&partition, clients))?;
                trace.js_history.push(base);
                trace.switches.push(proposal);
                accepted_in_sweep = true;
            }
        }

        if !accepted_in_sweep {
            trace.converged = true;
            break;
        }
    }

    Ok((partition, trace))
}
