//! Discrete-event loop of the semi-asynchronous hierarchy.
//!
//! Clients train synchronously under their edge server; edge models travel to
//! the cloud asynchronously. Uploaded models are buffered: a coalition whose
//! model is waiting at the cloud is *available*, and each global round the
//! scheduler picks exactly one available coalition, aggregates its (possibly
//! stale) model with weight ξ_φ = ℓ·𝕜^φ, hands back the fresh global model,
//! and the coalition trains again at the CPU frequencies the resource rule
//! assigns. Round 0 dispatches all coalitions at full frequency to seed the
//! latency beliefs.
//!
//! A round occupies the wall-clock span of the coalition it schedules: the
//! next boundary is π(t)'s return, and whatever else lands in between joins
//! the waiting buffer (total simulated time is therefore the sum of scheduled
//! latencies). Round 1 starts at the earliest arrival of the round-0 wave.
//! Anchoring rounds to arrival events instead would leave exactly one
//! coalition available at every selection and reduce all scheduling rules to
//! the same forced choice.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ClientProfile, ExperimentConfig, Partition, SchedulerKind};
use crate::latency::{
    belief_from_first_observation, realize_latency, LatencyBelief, LatencyError, LatencyModel,
};
use crate::learner::{self, LearnerData, LearnerError, ModelParams};
use crate::report::{
    participation_from_rows, AllocationRow, MetricsError, RoundRow, RunMetrics, RunSummary,
};
use crate::resource::{apply_allocation, UtilityParams};
use crate::rng::RandomSource;
use crate::scheduler::{
    compute_delta, fair_select, fedcure_select, greedy_select, mean_rate, update_queue,
    ScheduleError, VirtualQueueState,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("model dimension mismatch: expected {expected}, got {got}")]
    ShapeError { expected: usize, got: usize },
    #[error("coalition {0} has no members")]
    EmptyCoalition(usize),
    #[error(transparent)]
    Latency(#[from] LatencyError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Cloud-side model: a flat parameter vector plus the round of last update.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub weights: Vec<f64>,
    pub version: u64,
}

impl GlobalModel {
    pub fn new(weights: Vec<f64>) -> Self {
        Self {
            weights,
            version: 0,
        }
    }
}

/// ξ_φ = ℓ·𝕜^φ, the aggregation weight of a model with staleness φ.
pub fn staleness_weight(ell: f64, kpen: f64, phi: u64) -> f64 {
    debug_assert!(ell > 0.0 && ell < 1.0 && kpen > 0.0 && kpen < 1.0);
    ell * kpen.powi(phi as i32)
}

/// ω^t = (1 − ξ)·ω^{t−1} + ξ·ω_m.
pub fn global_aggregate(
    global: &GlobalModel,
    edge_model: &[f64],
    xi: f64,
) -> Result<GlobalModel, EngineError> {
    if edge_model.len() != global.weights.len() {
        return Err(EngineError::ShapeError {
            expected: global.weights.len(),
            got: edge_model.len(),
        });
    }
    let weights = global
        .weights
        .iter()
        .zip(edge_model)
        .map(|(&g, &e)| (1.0 - xi) * g + xi * e)
        .collect();
    Ok(GlobalModel {
        weights,
        version: global.version + 1,
    })
}

/// Size-weighted average of the members' local models.
pub fn edge_aggregate(local_models: &[Vec<f64>], sizes: &[u64]) -> Result<Vec<f64>, EngineError> {
    let first = local_models.first().ok_or(EngineError::EmptyCoalition(0))?;
    let dim = first.len();
    let total: u64 = sizes.iter().sum();
    debug_assert!(sizes.len() == local_models.len() && total > 0);
    let mut out = vec![0.0; dim];
    for (model, &size) in local_models.iter().zip(sizes) {
        if model.len() != dim {
            return Err(EngineError::ShapeError {
                expected: dim,
                got: model.len(),
            });
        }
        let w = size as f64 / total as f64;
        for (acc, &v) in out.iter_mut().zip(model) {
            *acc += w * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoalitionStatus {
    /// Training; its upload lands at `arrival_time`.
    InFlight,
    /// Upload buffered at the cloud, eligible for selection.
    Waiting,
    /// Aggregated this round, about to be redispatched.
    Idle,
}

#[derive(Debug, Clone)]
pub struct CoalitionRuntime {
    pub status: CoalitionStatus,
    /// Global round at which the coalition last received the global model.
    pub dispatched_at: u64,
    /// Simulated clock time of the pending (or upcoming) upload.
    pub arrival_time: f64,
    pub pending_model: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub now: f64,
    pub round: u64,
}

struct Trainer<'a> {
    data: Option<&'a LearnerData>,
    tau_c: u32,
    tau_e: u32,
    lr: f64,
    batch_size: usize,
    client_rngs: Vec<ChaCha8Rng>,
}

impl Trainer<'_> {
    /// Simulate the coalition's next upload: τ_e edge rounds of τ_c local
    /// steps each, with size-weighted edge aggregation in between. Returns
    /// the edge model (empty when the learner is off).
    fn train(
        &mut self,
        members: &[usize],
        sizes: &[u64],
        global_weights: &[f64],
    ) -> Result<Vec<f64>, EngineError> {
        let Some(data) = self.data else {
            return Ok(Vec::new());
        };
        let (k, d) = (data.dataset.n_classes, data.dataset.dim);
        let mut edge = global_weights.to_vec();
        for _ in 0..self.tau_e {
            let locals: Vec<Vec<f64>> = members
                .iter()
                .map(|&n| {
                    let model = ModelParams::from_weights(edge.clone(), k, d);
                    learner::local_train(
                        &model,
                        &data.dataset,
                        &data.shards[n],
                        self.tau_c,
                        self.lr,
                        self.batch_size,
                        &mut self.client_rngs[n],
                    )
                    .weights
                })
                .collect();
            edge = edge_aggregate(&locals, sizes)?;
        }
        Ok(edge)
    }
}

/// Run `tau_g` global rounds under the configured scheduler and return the
/// per-round metrics.
pub fn run_simulation(
    config: &ExperimentConfig,
    clients: &[ClientProfile],
    partition: &Partition,
    latency_model: &LatencyModel,
    data: Option<&LearnerData>,
    rng: &RandomSource,
) -> Result<RunMetrics, EngineError> {
    let m_count = partition.n_coalitions();
    let members: Vec<Vec<usize>> = (0..m_count).map(|m| partition.members(m)).collect();
    for (m, mem) in members.iter().enumerate() {
        if mem.is_empty() {
            return Err(EngineError::EmptyCoalition(m));
        }
    }
    let sizes: Vec<Vec<u64>> = members
        .iter()
        .map(|mem| mem.iter().map(|&n| clients[n].dataset_size).collect())
        .collect();

    let params = UtilityParams::new(config.alpha, config.gamma, config.varsigma);
    let mut queues = VirtualQueueState::new(compute_delta(partition, clients, config.kappa));
    let mut trainer = Trainer {
        data,
        tau_c: config.tau_c,
        tau_e: config.tau_e,
        lr: config.learner.lr,
        batch_size: config.learner.batch_size,
        client_rngs: (0..clients.len())
            .map(|n| rng.child_idx("client-train", n as u64).rng())
            .collect(),
    };
    let mut noise_rngs: Vec<ChaCha8Rng> = (0..m_count)
        .map(|m| rng.child_idx("coalition-noise", m as u64).rng())
        .collect();

    let mut global = GlobalModel::new(match data {
        Some(d) => ModelParams::zeros(d.dataset.n_classes, d.dataset.dim).weights,
        None => Vec::new(),
    });
    let evaluate_global = |weights: &[f64]| -> Result<(Option<f64>, Option<f64>), EngineError> {
        match data {
            Some(d) => {
                let model =
                    ModelParams::from_weights(weights.to_vec(), d.dataset.n_classes, d.dataset.dim);
                let (loss, acc) = learner::evaluate(&model, &d.dataset.test)?;
                Ok((Some(loss), Some(acc)))
            }
            None => Ok((None, None)),
        }
    };

    // Round 0: dispatch every coalition at full frequency and seed beliefs
    // from the first observed upload.
    let mut clock = SimClock { now: 0.0, round: 0 };
    let mut runtime: Vec<CoalitionRuntime> = Vec::with_capacity(m_count);
    let mut beliefs: Vec<LatencyBelief> = Vec::with_capacity(m_count);
    let mut allocations: Vec<AllocationRow> = Vec::new();
    let mut round0_slowest: f64 = 0.0;
    for m in 0..m_count {
        let freqs: Vec<f64> = members[m].iter().map(|&n| clients[n].f_max).collect();
        for (&n, &f) in members[m].iter().zip(&freqs) {
            allocations.push(AllocationRow {
                round: 0,
                coalition: m,
                member: n,
                freq: f,
                clamped: true,
            });
        }
        let latency = realize_latency(latency_model, m, &members[m], &freqs, &mut noise_rngs[m])?;
        let edge = trainer.train(&members[m], &sizes[m], &global.weights)?;
        runtime.push(CoalitionRuntime {
            status: CoalitionStatus::InFlight,
            dispatched_at: 0,
            arrival_time: latency,
            pending_model: Some(edge),
        });
        beliefs.push(belief_from_first_observation(
            latency,
            latency_model.noise_sigma,
        )?);
        round0_slowest = round0_slowest.max(latency);
    }
    // Running mean of the per-round maximum latency over the first M rounds,
    // then frozen: the ℐ normalizer of the scheduling rule.
    let mut warmup: Vec<f64> = vec![round0_slowest];
    queues = update_queue(&queues, None);

    let mut rows: Vec<RoundRow> = Vec::with_capacity(config.tau_g as usize + 1);
    let (loss, accuracy) = evaluate_global(&global.weights)?;
    rows.push(RoundRow {
        round: 0,
        clock: clock.now,
        chosen: -1,
        staleness: 0,
        weight: 0.0,
        latency: round0_slowest,
        loss,
        accuracy,
        lambda: queues.lambda().to_vec(),
        t_hat: beliefs.iter().map(LatencyBelief::estimate).collect(),
        available: vec![false; m_count],
    });

    let mut latencies = Vec::with_capacity(config.tau_g as usize);
    let mut max_queue: f64 = 0.0;

    for t in 1..=config.tau_g {
        clock.round = t;

        // The boundary of round t is the scheduled return of round t−1
        // (clock.now was advanced to it below); absorb everything that has
        // landed by then. Only round 1 can find an empty buffer, in which
        // case the boundary jumps to the earliest arrival of the initial
        // wave.
        loop {
            for r in runtime.iter_mut() {
                if r.status == CoalitionStatus::InFlight && r.arrival_time <= clock.now {
                    r.status = CoalitionStatus::Waiting;
                }
            }
            if runtime.iter().any(|r| r.status == CoalitionStatus::Waiting) {
                break;
            }
            let earliest = runtime
                .iter()
                .filter(|r| r.status == CoalitionStatus::InFlight)
                .map(|r| r.arrival_time)
                .fold(f64::INFINITY, f64::min);
            debug_assert!(earliest.is_finite(), "no upload will ever arrive");
            debug_assert!(earliest >= clock.now);
            clock.now = earliest;
        }

        let available: Vec<bool> = runtime
            .iter()
            .map(|r| r.status == CoalitionStatus::Waiting)
            .collect();
        let t_hat: Vec<f64> = beliefs.iter().map(LatencyBelief::estimate).collect();
        let cap_i = warmup.iter().sum::<f64>() / warmup.len() as f64;
        let decision = match config.scheduler_kind {
            SchedulerKind::FedCure => {
                fedcure_select(&queues, &t_hat, &available, config.beta, cap_i)?
            }
            SchedulerKind::Greedy => greedy_select(&t_hat, &available, cap_i)?,
            SchedulerKind::Fair => fair_select(&queues, &available)?,
        };
        let chosen = decision.chosen;

        // Aggregate the chosen coalition's buffered model at its staleness.
        let phi = t - runtime[chosen].dispatched_at;
        debug_assert!(phi >= 1);
        let xi = staleness_weight(config.ell, config.kpen, phi);
        let pending = runtime[chosen]
            .pending_model
            .take()
            .expect("waiting coalition carries a model");
        runtime[chosen].status = CoalitionStatus::Idle;
        global = global_aggregate(&global, &pending, xi)?;
        debug_assert_eq!(global.version, t);
        let (loss, accuracy) = evaluate_global(&global.weights)?;

        // Redispatch: allocate frequencies at the current estimate, train,
        // and put the coalition back in flight.
        let freqs = apply_allocation(&params, clients, &members[chosen], t_hat[chosen]);
        for (&n, &f) in members[chosen].iter().zip(&freqs) {
            allocations.push(AllocationRow {
                round: t,
                coalition: chosen,
                member: n,
                freq: f,
                clamped: f == clients[n].f_max,
            });
        }
        let latency = realize_latency(
            latency_model,
            chosen,
            &members[chosen],
            &freqs,
            &mut noise_rngs[chosen],
        )?;
        let edge = trainer.train(&members[chosen], &sizes[chosen], &global.weights)?;
        runtime[chosen] = CoalitionRuntime {
            status: CoalitionStatus::InFlight,
            dispatched_at: t,
            arrival_time: clock.now + latency,
            pending_model: Some(edge),
        };
        beliefs[chosen] = beliefs[chosen].update(latency)?;
        if warmup.len() < m_count {
            warmup.push(latency);
        }
        queues = update_queue(&queues, Some(chosen));
        for &l in queues.lambda() {
            max_queue = max_queue.max(l);
        }
        latencies.push(latency);

        rows.push(RoundRow {
            round: t,
            clock: clock.now,
            chosen: chosen as i64,
            staleness: phi,
            weight: xi,
            latency,
            loss,
            accuracy,
            lambda: queues.lambda().to_vec(),
            t_hat,
            available,
        });
        debug_assert_eq!(
            runtime
                .iter()
                .filter(|r| r.status != CoalitionStatus::Idle)
                .count(),
            m_count
        );
        // Round t ends when its scheduled upload returns.
        clock.now = runtime[chosen].arrival_time;
    }

    let cov_latency = crate::report::cov(&latencies)?;
    let participation = participation_from_rows(&rows, m_count);
    let final_avg_js = crate::coalition::average_js(partition, clients)
        .ok()
        .map(|v| v.nats());
    let last = rows.last().expect("at least the round-0 row");
    let summary = RunSummary {
        scheduler: config.scheduler_kind.to_string(),
        seed: config.seed,
        rounds: config.tau_g,
        beta: config.beta,
        kappa: config.kappa,
        cov_latency,
        participation,
        delta: queues.delta().to_vec(),
        mean_rate: mean_rate(&queues)?,
        max_queue,
        final_avg_js,
        initial_avg_js: None,
        formation_iterations: None,
        formation_converged: None,
        final_loss: last.loss,
        final_accuracy: last.accuracy,
    };
    Ok(RunMetrics {
        rounds: rows,
        allocations,
        formation: None,
        summary,
    })
}
