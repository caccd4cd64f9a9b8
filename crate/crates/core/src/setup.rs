//! Deterministic experiment assembly from an [`ExperimentConfig`].
//!
//! Every random ingredient (dataset, shard assignment, per-client hardware,
//! per-coalition delays) draws from its own child stream of the experiment
//! seed, so changing one knob never reshuffles unrelated draws.

use rand::Rng;
use thiserror::Error;

use crate::config::{ClientProfile, ConfigError, ExperimentConfig, Partition};
use crate::latency::LatencyModel;
use crate::learner::{self, LearnerData, LearnerError};
use crate::rng::RandomSource;

/// Labels owned by each coalition in the edge non-IID shard.
pub const LABELS_PER_COALITION: usize = 2;

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub clients: Vec<ClientProfile>,
    /// Contiguous-block assignment; the coalition game starts from here.
    pub initial_partition: Partition,
    pub latency_model: LatencyModel,
    pub data: Option<LearnerData>,
}

fn sample_range<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn build(config: &ExperimentConfig) -> Result<Experiment, SetupError> {
    let root = RandomSource::new(config.seed);
    let partition = Partition::blocks(config.n_clients, config.n_edges)?;

    let (label_counts, data) = if config.learner.enabled {
        let l = &config.learner;
        let mut data_rng = root.child("dataset").rng();
        let dataset = learner::generate(
            config.n_classes,
            l.dim,
            l.per_class_train,
            l.per_class_test,
            l.class_sep,
            &mut data_rng,
        )?;
        let mut shard_rng = root.child("shard").rng();
        let shards =
            learner::shard_non_iid(&dataset, &partition, LABELS_PER_COALITION, &mut shard_rng)?;
        let mut counts = vec![vec![0u64; config.n_classes]; config.n_clients];
        for (client, shard) in shards.iter().enumerate() {
            for &idx in shard {
                counts[client][dataset.train[idx].label] += 1;
            }
        }
        (counts, Some(LearnerData { dataset, shards }))
    } else {
        // Same count arithmetic as the real shard, without materializing data.
        let totals = vec![config.learner.per_class_train as u64; config.n_classes];
        let counts = learner::allocate_label_counts(&totals, &partition, LABELS_PER_COALITION)?;
        (counts, None)
    };

    let mut clients = Vec::with_capacity(config.n_clients);
    for (i, counts) in label_counts.into_iter().enumerate() {
        let mut hw = root.child_idx("client-hw", i as u64).rng();
        let comp_load = sample_range(&mut hw, config.latency.comp_load);
        let f_max = sample_range(&mut hw, config.latency.f_max);
        let comm_delay = sample_range(&mut hw, config.latency.comm_delay);
        clients.push(ClientProfile::new(i, counts, comp_load, f_max, comm_delay)?);
    }

    let edge_cloud_delay = (0..config.n_edges)
        .map(|m| {
            let mut rng = root.child_idx("edge-delay", m as u64).rng();
            sample_range(&mut rng, config.latency.edge_cloud_delay)
        })
        .collect();

    let latency_model = LatencyModel {
        tau_c: config.tau_c,
        tau_e: config.tau_e,
        comp_load: clients.iter().map(|c| c.comp_load).collect(),
        comm_delay: clients.iter().map(|c| c.comm_delay).collect(),
        edge_cloud_delay,
        noise_sigma: config.latency.noise_sigma,
    };

    Ok(Experiment {
        clients,
        initial_partition: partition,
        latency_model,
        data,
    })
}
