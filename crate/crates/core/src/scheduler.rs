//! Virtual-queue coalition scheduling.
//!
//! Each coalition carries a backlog Λ_m that grows by its participation
//! target δ_m every round and drains by 1 when scheduled, clamped at zero.
//! The FedCure rule picks the available coalition maximizing
//! Λ_m + β·(1 − T̂_m/ℐ); greedy drops the queue term, fair drops the
//! efficiency term. Mean rate stability of the queues (Λ_m(t)/t → 0)
//! certifies the long-term participation floor.

use thiserror::Error;

use crate::config::{ClientProfile, Partition};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("no coalition is available for scheduling")]
    NoAvailableCoalition,
    #[error("mean rate is undefined before the first scheduling round")]
    UndefinedRate,
}

/// Per-coalition backlogs Λ plus targets δ. Constructed at round −1 with
/// Λ_m = −δ_m; the round-0 update schedules every coalition, landing all
/// queues at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualQueueState {
    lambda: Vec<f64>,
    delta: Vec<f64>,
    t: i64,
}

impl VirtualQueueState {
    pub fn new(delta: Vec<f64>) -> Self {
        let lambda = delta.iter().map(|&d| -d).collect();
        Self {
            lambda,
            delta,
            t: -1,
        }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Round index of the last update; −1 before round 0.
    pub fn round(&self) -> i64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }
}

/// Participation targets δ_m = κ·|D_m|/|D|.
pub fn compute_delta(partition: &Partition, clients: &[ClientProfile], kappa: f64) -> Vec<f64> {
    debug_assert!((0.0..=1.0).contains(&kappa));
    let mut sizes = vec![0u64; partition.n_coalitions()];
    for c in clients {
        sizes[partition.coalition_of(c.id)] += c.dataset_size;
    }
    let total: u64 = sizes.iter().sum();
    debug_assert!(total > 0, "coalitions hold no data");
    sizes
        .iter()
        .map(|&s| kappa * s as f64 / total as f64)
        .collect()
}

/// Advance the queues by one round. At round 0 every coalition counts as
/// scheduled (the initialization wave); afterwards only `scheduled` drains.
pub fn update_queue(state: &VirtualQueueState, scheduled: Option<usize>) -> VirtualQueueState {
    let round_zero = state.t < 0;
    let lambda = state
        .lambda
        .iter()
        .zip(&state.delta)
        .enumerate()
        .map(|(m, (&l, &d))| {
            let served = round_zero || scheduled == Some(m);
            let chi = if served { 1.0 } else { 0.0 };
            (l + d - chi).max(0.0)
        })
        .collect();
    VirtualQueueState {
        lambda,
        delta: state.delta.clone(),
        t: state.t + 1,
    }
}

/// One scheduling decision: the chosen coalition, the per-coalition scores
/// (None where unavailable), and the availability mask it was made under.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDecision {
    pub chosen: usize,
    pub scores: Vec<Option<f64>>,
    pub available: Vec<bool>,
}

fn decide(scores: Vec<Option<f64>>, available: &[bool]) -> Result<ScheduleDecision, ScheduleError> {
    let mut best: Option<(usize, f64)> = None;
    for (m, score) in scores.iter().enumerate() {
        if let Some(s) = score {
            // Strictly-greater keeps the lowest index on ties.
            if best.is_none_or(|(_, b)| *s > b) {
                best = Some((m, *s));
            }
        }
    }
    match best {
        Some((chosen, _)) => Ok(ScheduleDecision {
            chosen,
            scores,
            available: available.to_vec(),
        }),
        None => Err(ScheduleError::NoAvailableCoalition),
    }
}

/// FedCure rule: argmax over available m of Λ_m + β·(1 − T̂_m/ℐ).
pub fn fedcure_select(
    state: &VirtualQueueState,
    t_hat: &[f64],
    available: &[bool],
    beta: f64,
    avg_max_latency: f64,
) -> Result<ScheduleDecision, ScheduleError> {
    debug_assert!(avg_max_latency > 0.0);
    let scores = available
        .iter()
        .enumerate()
        .map(|(m, &a)| a.then(|| state.lambda[m] + beta * (1.0 - t_hat[m] / avg_max_latency)))
        .collect();
    decide(scores, available)
}

/// Greedy baseline: maximize estimated efficiency 1 − T̂_m/ℐ alone.
pub fn greedy_select(
    t_hat: &[f64],
    available: &[bool],
    avg_max_latency: f64,
) -> Result<ScheduleDecision, ScheduleError> {
    debug_assert!(avg_max_latency > 0.0);
    let scores = available
        .iter()
        .enumerate()
        .map(|(m, &a)| a.then(|| 1.0 - t_hat[m] / avg_max_latency))
        .collect();
    decide(scores, available)
}

/// Fair baseline: maximize the backlog alone.
pub fn fair_select(
    state: &VirtualQueueState,
    available: &[bool],
) -> Result<ScheduleDecision, ScheduleError> {
    let scores = available
        .iter()
        .enumerate()
        .map(|(m, &a)| a.then(|| state.lambda[m]))
        .collect();
    decide(scores, available)
}

/// Λ_m(t)/t per coalition; the certificate that goes to zero under mean rate
/// stability.
pub fn mean_rate(state: &VirtualQueueState) -> Result<Vec<f64>, ScheduleError> {
    if state.t < 1 {
        return Err(ScheduleError::UndefinedRate);
    }
    let t = state.t as f64;
    Ok(state.lambda.iter().map(|&l| l / t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn equal_state(m: usize, delta: f64) -> VirtualQueueState {
        VirtualQueueState::new(vec![delta; m])
    }

    fn with_lambda(lambda: Vec<f64>, delta: f64) -> VirtualQueueState {
        let n = lambda.len();
        VirtualQueueState {
            lambda,
            delta: vec![delta; n],
            t: 1,
        }
    }

    fn client(id: usize, size: u64) -> ClientProfile {
        ClientProfile::new(id, vec![size], 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn delta_symmetric_and_proportional() {
        let clients: Vec<_> = (0..5).map(|i| client(i, 10)).collect();
        let partition = Partition::new(vec![0, 1, 2, 3, 4], 5).unwrap();
        let d = compute_delta(&partition, &clients, 1.0);
        assert_eq!(d, vec![0.2; 5]);
        let sum: f64 = d.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);

        let clients = vec![client(0, 100), client(1, 300)];
        let partition = Partition::new(vec![0, 1], 2).unwrap();
        assert_eq!(compute_delta(&partition, &clients, 1.0), vec![0.25, 0.75]);
        assert_eq!(compute_delta(&partition, &clients, 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn round_zero_lands_all_queues_at_zero() {
        let state = equal_state(5, 0.2);
        assert_eq!(state.round(), -1);
        assert_eq!(state.lambda(), &[-0.2; 5]);
        let state = update_queue(&state, None);
        assert_eq!(state.round(), 0);
        assert_eq!(state.lambda(), &[0.0; 5]);
    }

    #[test]
    fn queue_update_hand_values() {
        let state = update_queue(&equal_state(2, 0.2), None);
        // Unscheduled coalition grows by δ.
        let next = update_queue(&state, Some(0));
        assert!((next.lambda()[1] - 0.2).abs() < 1e-15);
        // Scheduled coalition at Λ=0.2 drains to max{0.2+0.2−1, 0} = 0.
        let grown = with_lambda(vec![0.2, 0.0], 0.2);
        let next = update_queue(&grown, Some(0));
        assert_eq!(next.lambda()[0], 0.0);
    }

    #[test]
    fn queues_stay_nonnegative_with_bounded_steps() {
        let mut state = update_queue(&equal_state(3, 1.0 / 3.0), None);
        for t in 0..200 {
            let prev = state.lambda().to_vec();
            state = update_queue(&state, Some(t % 3));
            for (m, (&now, &before)) in state.lambda().iter().zip(&prev).enumerate() {
                assert!(now >= 0.0);
                let d = state.delta()[m];
                assert!((now - before).abs() <= d.max(1.0 - d) + 1e-15);
            }
        }
    }

    #[test]
    fn fedcure_hand_example() {
        let state = with_lambda(vec![0.5, 0.1, 0.0], 0.2);
        let t_hat = [10.0, 5.0, 2.0];
        let avail = [true, true, true];
        let d = fedcure_select(&state, &t_hat, &avail, 0.5, 10.0).unwrap();
        assert_eq!(d.chosen, 0);
        let scores: Vec<f64> = d.scores.iter().map(|s| s.unwrap()).collect();
        assert!((scores[0] - 0.5).abs() < 1e-12);
        assert!((scores[1] - 0.35).abs() < 1e-12);
        assert!((scores[2] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn fedcure_equal_queues_prefers_fast() {
        let state = with_lambda(vec![0.3, 0.3, 0.3], 0.2);
        let d = fedcure_select(&state, &[10.0, 5.0, 2.0], &[true, true, true], 0.5, 10.0).unwrap();
        assert_eq!(d.chosen, 2);
    }

    #[test]
    fn fedcure_small_beta_matches_fair() {
        let state = with_lambda(vec![0.5, 0.1, 0.7], 0.2);
        let t_hat = [10.0, 5.0, 2.0];
        let avail = [true, true, true];
        let fed = fedcure_select(&state, &t_hat, &avail, 1e-12, 10.0).unwrap();
        let fair = fair_select(&state, &avail).unwrap();
        assert_eq!(fed.chosen, fair.chosen);
    }

    #[test]
    fn greedy_examples() {
        let avail = [true, true, true];
        assert_eq!(
            greedy_select(&[10.0, 5.0, 2.0], &avail, 10.0)
                .unwrap()
                .chosen,
            2
        );
        assert_eq!(
            greedy_select(&[4.0, 4.0, 4.0], &avail, 10.0)
                .unwrap()
                .chosen,
            0
        );
        assert_eq!(
            greedy_select(&[10.0, 5.0, 2.0], &[false, true, false], 10.0)
                .unwrap()
                .chosen,
            1
        );
    }

    #[test]
    fn fair_examples() {
        let avail = [true, true, true];
        let state = with_lambda(vec![0.5, 0.1, 0.0], 0.2);
        assert_eq!(fair_select(&state, &avail).unwrap().chosen, 0);
        let zeros = with_lambda(vec![0.0, 0.0, 0.0], 0.2);
        assert_eq!(fair_select(&zeros, &avail).unwrap().chosen, 0);
    }

    #[test]
    fn empty_availability_errors() {
        let state = with_lambda(vec![0.1, 0.2], 0.2);
        let none = [false, false];
        assert_eq!(
            fedcure_select(&state, &[1.0, 1.0], &none, 0.5, 1.0).unwrap_err(),
            ScheduleError::NoAvailableCoalition
        );
        assert_eq!(
            greedy_select(&[1.0, 1.0], &none, 1.0).unwrap_err(),
            ScheduleError::NoAvailableCoalition
        );
        assert_eq!(
            fair_select(&state, &none).unwrap_err(),
            ScheduleError::NoAvailableCoalition
        );
    }

    #[test]
    fn mean_rate_values_and_guard() {
        let fresh = equal_state(2, 0.2);
        assert_eq!(mean_rate(&fresh).unwrap_err(), ScheduleError::UndefinedRate);
        let at_zero = update_queue(&fresh, None);
        assert_eq!(
            mean_rate(&at_zero).unwrap_err(),
            ScheduleError::UndefinedRate
        );

        let state = VirtualQueueState {
            lambda: vec![2.0, 0.0],
            delta: vec![0.2, 0.2],
            t: 200,
        };
        assert_eq!(mean_rate(&state).unwrap(), vec![0.01, 0.0]);
    }

    proptest! {
        #[test]
        fn argmax_invariant_to_common_shift(
            lambda in prop::collection::vec(0.0f64..5.0, 2..6),
            shift in -10.0f64..10.0,
        ) {
            let m = lambda.len();
            let t_hat: Vec<f64> = (0..m).map(|i| 1.0 + i as f64).collect();
            let avail = vec![true; m];
            let state = with_lambda(lambda.clone(), 0.1);
            let shifted = with_lambda(lambda.iter().map(|l| l + shift).collect(), 0.1);
            let a = fedcure_select(&state, &t_hat, &avail, 0.7, 10.0).unwrap().chosen;
            let b = fedcure_select(&shifted, &t_hat, &avail, 0.7, 10.0).unwrap().chosen;
            prop_assert_eq!(a, b);
        }

        #[test]
        fn doubling_beta_and_queues_preserves_choice(
            lambda in prop::collection::vec(0.0f64..5.0, 2..6),
            beta in 0.01f64..10.0,
        ) {
            let m = lambda.len();
            let t_hat: Vec<f64> = (0..m).map(|i| 0.5 + 1.3 * i as f64).collect();
            let avail = vec![true; m];
            let state = with_lambda(lambda.clone(), 0.1);
            let doubled = with_lambda(lambda.iter().map(|l| 2.0 * l).collect(), 0.1);
            let a = fedcure_select(&state, &t_hat, &avail, beta, 10.0).unwrap().chosen;
            let b = fedcure_select(&doubled, &t_hat, &avail, 2.0 * beta, 10.0).unwrap().chosen;
            prop_assert_eq!(a, b);
        }
    }
}
