//! Desk-scale simulator for semi-asynchronous hierarchical federated learning.
//!
//! The library models a cloud–edge–client hierarchy in which clients train
//! synchronously under their edge server and edge models reach the cloud
//! asynchronously. Three mechanisms are implemented on top of that engine:
//!
//! - [`coalition`]: a hedonic coalition formation game that reassigns clients
//!   to edge servers so the average pairwise Jensen–Shannon divergence between
//!   coalition label distributions is driven down (an exact potential game).
//! - [`scheduler`]: virtual-queue scheduling of coalition uploads that trades
//!   off long-term participation balance against estimated training latency,
//!   plus greedy and fair baselines.
//! - [`resource`]: closed-form CPU frequency allocation for the clients of the
//!   scheduled coalition.
//!
//! [`latency`] provides the ground-truth latency model and the conjugate
//! Bayesian estimator the scheduler consumes, [`learner`] a synthetic non-IID
//! classification task so loss/accuracy dynamics are observable end to end,
//! and [`report`]/[`runner`] the metrics formats and experiment orchestration
//! behind the `fedcure` CLI.

pub mod coalition;
pub mod config;
pub mod divergence;
pub mod engine;
pub mod latency;
pub mod learner;
pub mod report;
pub mod resource;
pub mod rng;
pub mod runner;
pub mod scheduler;
pub mod setup;

pub use config::{ClientProfile, ExperimentConfig, LabelDistribution, Partition, SchedulerKind};
pub use divergence::DivergenceValue;
pub use rng::RandomSource;
