//! Experiment orchestration: formation phase, simulation, and sweeps.

use thiserror::Error;

use crate::coalition::{average_js, run_formation, GameError};
use crate::config::{ConfigError, ExperimentConfig};
use crate::engine::{run_simulation, EngineError};
use crate::report::RunMetrics;
use crate::rng::RandomSource;
use crate::setup::{self, SetupError};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Run one experiment: validate, assemble, optionally play the coalition
/// formation game, then simulate `tau_g` global rounds. The formation phase
/// draws from its own seed stream, so runs differing only in scheduler kind
/// share the formation byte for byte.
pub fn run_experiment(
    config: &ExperimentConfig,
    skip_formation: bool,
) -> Result<RunMetrics, RunnerError> {
    config.validate()?;
    let experiment = setup::build(config)?;
    let root = RandomSource::new(config.seed);

    let mut formation = None;
    let mut initial_avg_js = None;
    let partition = if skip_formation {
        experiment.initial_partition.clone()
    } else {
        initial_avg_js =
            Some(average_js(&experiment.initial_partition, &experiment.clients)?.nats());
        let (formed, trace) = run_formation(
            &experiment.initial_partition,
            &experiment.clients,
            config.max_game_iters,
            &root.child("formation"),
        )?;
        formation = Some(trace);
        formed
    };

    let mut metrics = run_simulation(
        config,
        &experiment.clients,
        &partition,
        &experiment.latency_model,
        experiment.data.as_ref(),
        &root.child("engine"),
    )?;
    if let Some(trace) = formation {
        metrics.summary.initial_avg_js = initial_avg_js;
        metrics.summary.formation_iterations = Some(trace.iterations);
        metrics.summary.formation_converged = Some(trace.converged);
        metrics.formation = Some(trace);
    }
    Ok(metrics)
}

/// Run the coalition formation phase only.
pub fn run_formation_only(
    config: &ExperimentConfig,
) -> Result<(crate::config::Partition, crate::coalition::GameTrace, f64), RunnerError> {
    config.validate()?;
    let experiment = setup::build(config)?;
    let root = RandomSource::new(config.seed);
    let initial = average_js(&experiment.initial_partition, &experiment.clients)?.nats();
    let (formed, trace) = run_formation(
        &experiment.initial_partition,
        &experiment.clients,
        config.max_game_iters,
        &root.child("formation"),
    )?;
    Ok((formed, trace, initial))
}

/// Independent runs of the same config with one numeric field swept over
/// `values`. Each run reuses the base seed, so sweeps compare like with like.
pub fn sweep(
    config: &ExperimentConfig,
    param: &str,
    values: &[f64],
    skip_formation: bool,
) -> Result<Vec<(f64, RunMetrics)>, RunnerError> {
    values
        .iter()
        .map(|&v| {
            let mut swept = config.clone();
            swept.set_numeric_field(param, v)?;
            run_experiment(&swept, skip_formation).map(|m| (v, m))
        })
        .collect()
}
