//! Synthetic non-IID data and a multinomial logistic regression learner.
//!
//! Gaussian blobs (one mean per class, unit covariance, pairwise mean
//! distance `class_sep`) stand in for image datasets so the training
//! dynamics of the simulator are observable end to end while staying convex
//! and seconds-fast. Sharding assigns each coalition a small set of labels,
//! producing the disjoint edge non-IID starting point the coalition game is
//! meant to repair.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::config::Partition;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LearnerError {
    #[error("dataset split is empty")]
    EmptyDataset,
    #[error("infeasible shard: {0}")]
    InfeasibleShard(String),
    #[error("feature dimension {dim} is smaller than the class count {n_classes}")]
    InvalidDimension { dim: usize, n_classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Generated dataset with a train split (sharded across clients) and a
/// held-out test split carrying the full label marginal.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub n_classes: usize,
    pub dim: usize,
}

/// Dataset plus the per-client index lists into its train split.
#[derive(Debug, Clone)]
pub struct LearnerData {
    pub dataset: SyntheticDataset,
    pub shards: Vec<Vec<usize>>,
}

/// Flattened K×d weight matrix followed by K biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub n_classes: usize,
    pub dim: usize,
}

impl ModelParams {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Self {
            weights: vec![0.0; n_classes * dim + n_classes],
            n_classes,
            dim,
        }
    }

    pub fn from_weights(weights: Vec<f64>, n_classes: usize, dim: usize) -> Self {
        debug_assert_eq!(weights.len(), n_classes * dim + n_classes);
        Self {
            weights,
            n_classes,
            dim,
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_classes);
        for k in 0..self.n_classes {
            let row = &self.weights[k * self.dim..(k + 1) * self.dim];
            let bias = self.weights[self.n_classes * self.dim + k];
            let dot: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
            out.push(dot + bias);
        }
        out
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy of the model over `samples`.
pub fn batch_loss(model: &ModelParams, samples: &[&Sample]) -> f64 {
    debug_assert!(!samples.is_empty());
    let mut loss = 0.0;
    for s in samples {
        let probs = softmax(&model.logits(&s.features));
        loss += -(probs[s.label].max(1e-300)).ln();
    }
    loss / samples.len() as f64
}

/// Analytic gradient of the mean cross-entropy, in the model's flattened
/// layout: ∂/∂W\[k\]\[j\] = mean (p_k − 1{k=y})·x_j, ∂/∂b\[k\] = mean (p_k − 1{k=y}).
pub fn batch_gradient(model: &ModelParams, samples: &[&Sample]) -> Vec<f64> {
    debug_assert!(!samples.is_empty());
    let (k_cls, dim) = (model.n_classes, model.dim);
    let mut grad = vec![0.0; model.weights.len()];
    for s in samples {
        let probs = softmax(&model.logits(&s.features));
        for k in 0..k_cls {
            let err = probs[k] - if k == s.label { 1.0 } else { 0.0 };
            for (j, &xj) in s.features.iter().enumerate() {
                grad[k * dim + j] += err * xj;
            }
            grad[k_cls * dim + k] += err;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    for g in &mut grad {
        *g *= inv;
    }
    grad
}

/// Generate Gaussian blobs: class k has mean (class_sep/√2)·e_k, so all
/// pairwise mean distances equal `class_sep` exactly (requires dim ≥ K).
pub fn generate<R: Rng>(
    n_classes: usize,
    dim: usize,
    per_class_train: usize,
    per_class_test: usize,
    class_sep: f64,
    rng: &mut R,
) -> Result<SyntheticDataset, LearnerError> {
    if dim < n_classes {
        return Err(LearnerError::InvalidDimension { dim, n_classes });
    }
    let scale = class_sep / std::f64::consts::SQRT_2;
    let mut draw = |label: usize| -> Sample {
        let features = (0..dim)
            .map(|j| {
                let noise: f64 = StandardNormal.sample(rng);
                if j == label {
                    scale + noise
                } else {
                    noise
                }
            })
            .collect();
        Sample { features, label }
    };
    let mut train = Vec::with_capacity(n_classes * per_class_train);
    for label in 0..n_classes {
        for _ in 0..per_class_train {
            train.push(draw(label));
        }
    }
    let mut test = Vec::with_capacity(n_classes * per_class_test);
    for label in 0..n_classes {
        for _ in 0..per_class_test {
            test.push(draw(label));
        }
    }
    Ok(SyntheticDataset {
        train,
        test,
        n_classes,
        dim,
    })
}

/// Which labels coalition `m` draws from. With K ≥ lpc·M, labels are dealt
/// out in contiguous blocks that wrap over the coalitions, so every label has
/// an owner (M = 1 receives them all); with K < lpc·M, each coalition takes
/// `lpc` labels cyclically and shares them.
pub fn coalition_labels(
    n_classes: usize,
    n_coalitions: usize,
    labels_per_coalition: usize,
) -> Vec<Vec<usize>> {
    let mut labels = vec![Vec::new(); n_coalitions];
    if n_classes >= labels_per_coalition * n_coalitions {
        for label in 0..n_classes {
            labels[(label / labels_per_coalition) % n_coalitions].push(label);
        }
    } else {
        for (m, set) in labels.iter_mut().enumerate() {
            for j in 0..labels_per_coalition {
                let label = (labels_per_coalition * m + j) % n_classes;
                if !set.contains(&label) {
                    set.push(label);
                }
            }
        }
    }
    labels
}

fn split_evenly(total: u64, parts: usize) -> Vec<u64> {
    let base = total / parts as u64;
    let rem = (total % parts as u64) as usize;
    (0..parts).map(|i| base + u64::from(i < rem)).collect()
}

/// Pure count arithmetic of the non-IID shard: how many samples of each
/// label every client receives. Label totals are split evenly over owner
/// coalitions (remainder round-robin by coalition order), then evenly over
/// the coalition's clients (remainder round-robin by client order).
pub fn allocate_label_counts(
    label_totals: &[u64],
    partition: &Partition,
    labels_per_coalition: usize,
) -> Result<Vec<Vec<u64>>, LearnerError> {
    let n_classes = label_totals.len();
    let m_count = partition.n_coalitions();
    let labels = coalition_labels(n_classes, m_count, labels_per_coalition);

    let members: Vec<Vec<usize>> = (0..m_count).map(|m| partition.members(m)).collect();
    for (m, mem) in members.iter().enumerate() {
        if mem.is_empty() {
            return Err(LearnerError::InfeasibleShard(format!(
                "coalition {m} has no clients"
            )));
        }
    }

    let mut owners = vec![Vec::new(); n_classes];
    for (m, set) in labels.iter().enumerate() {
        for &label in set {
            owners[label].push(m);
        }
    }

    let mut counts = vec![vec![0u64; n_classes]; partition.n_clients()];
    for (label, owner_list) in owners.iter().enumerate() {
        let total = label_totals[label];
        if total == 0 {
            continue;
        }
        if owner_list.is_empty() {
            return Err(LearnerError::InfeasibleShard(format!(
                "label {label} has samples but no owner coalition"
            )));
        }
        for (share, &m) in split_evenly(total, owner_list.len()).iter().zip(owner_list) {
            for (part, &client) in split_evenly(*share, members[m].len())
                .iter()
                .zip(&members[m])
            {
                counts[client][label] += part;
            }
        }
    }

    for (client, c) in counts.iter().enumerate() {
        if c.iter().sum::<u64>() == 0 {
            return Err(LearnerError::InfeasibleShard(format!(
                "client {client} would receive no samples"
            )));
        }
    }
    Ok(counts)
}

/// Shard the train split so each coalition's clients draw only from its
/// assigned labels. Returns per-client index lists into `dataset.train`; no
/// sample is duplicated or lost.
pub fn shard_non_iid<R: Rng>(
    dataset: &SyntheticDataset,
    partition: &Partition,
    labels_per_coalition: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, LearnerError> {
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes];
    for (idx, s) in dataset.train.iter().enumerate() {
        by_label[s.label].push(idx);
    }
    for pool in &mut by_label {
        // Uniformly random assignment of concrete samples to clients; the
        // counts themselves stay deterministic.
        use rand::seq::SliceRandom;
        pool.shuffle(rng);
    }
    let label_totals: Vec<u64> = by_label.iter().map(|v| v.len() as u64).collect();
    let counts = allocate_label_counts(&label_totals, partition, labels_per_coalition)?;

    let mut cursors = vec![0usize; dataset.n_classes];
    let mut shards = vec![Vec::new(); partition.n_clients()];
    for (client, client_counts) in counts.iter().enumerate() {
        for (label, &count) in client_counts.iter().enumerate() {
            let start = cursors[label];
            let end = start + count as usize;
            shards[client].extend_from_slice(&by_label[label][start..end]);
            cursors[label] = end;
        }
    }
    Ok(shards)
}

/// Run `tau_c` SGD steps on the client's shard. Batches smaller than the
/// shard are drawn uniformly with replacement; otherwise every step is a
/// full-batch gradient step.
pub fn local_train<R: Rng>(
    model: &ModelParams,
    dataset: &SyntheticDataset,
    shard: &[usize],
    tau_c: u32,
    lr: f64,
    batch_size: usize,
    rng: &mut R,
) -> ModelParams {
    debug_assert!(!shard.is_empty());
    let mut model = model.clone();
    for _ in 0..tau_c {
        let batch: Vec<&Sample> = if batch_size >= shard.len() {
            shard.iter().map(|&i| &dataset.train[i]).collect()
        } else {
            (0..batch_size)
                .map(|_| &dataset.train[shard[rng.random_range(0..shard.len())]])
                .collect()
        };
        let grad = batch_gradient(&model, &batch);
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= lr * g;
        }
    }
    model
}

/// Mean cross-entropy and top-1 accuracy over a split; argmax ties break to
/// the lowest class index.
pub fn evaluate(model: &ModelParams, split: &[Sample]) -> Result<(f64, f64), LearnerError> {
    if split.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    let refs: Vec<&Sample> = split.iter().collect();
    let loss = batch_loss(model, &refs);
    let mut correct = 0usize;
    for s in split {
        let logits = model.logits(&s.features);
        let mut arg = 0;
        for (k, &z) in logits.iter().enumerate() {
            if z > logits[arg] {
                arg = k;
            }
        }
        if arg == s.label {
            correct += 1;
        }
    }
    Ok((loss, correct as f64 / split.len() as f64))
}
