//! `fedcure`: experiment runner for the semi-asynchronous hierarchical FL
//! simulator.
//!
//! Subcommands: `run` (formation + simulation), `form` (formation only),
//! `sweep` (one numeric field over a value list), `validate` (config check).
//! Every config field has a CLI override flag of the same name; the output
//! directory defaults to `$FEDCURE_OUT_DIR` or `./out`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fedcure_core::config::{ExperimentConfig, SchedulerKind};
use fedcure_core::report::{self, RunMetrics};
use fedcure_core::runner;

#[derive(Parser)]
#[command(
    name = "fedcure",
    version,
    about = "Semi-asynchronous hierarchical FL simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run coalition formation (unless skipped) and the full simulation.
    Run(RunArgs),
    /// Run the coalition formation phase only.
    Form(CommonArgs),
    /// Run one experiment per value of a numeric config field.
    Sweep(SweepArgs),
    /// Check a config file plus overrides and exit.
    Validate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (TOML); defaults apply for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (default: $FEDCURE_OUT_DIR or ./out).
    #[arg(long)]
    out: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Simulate on the initial block partition without playing the game.
    #[arg(long)]
    skip_formation: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Numeric config field to sweep (e.g. beta, kappa, noise_sigma).
    #[arg(long)]
    param: String,

    /// Comma-separated values, e.g. --values 0.5,5,50.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,

    #[arg(long)]
    skip_formation: bool,
}

/// One flag per config field, overriding whatever the file says.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    n_clients: Option<usize>,
    #[arg(long)]
    n_edges: Option<usize>,
    #[arg(long)]
    n_classes: Option<usize>,
    #[arg(long)]
    tau_c: Option<u32>,
    #[arg(long)]
    tau_e: Option<u32>,
    /// Global rounds.
    #[arg(long, visible_alias = "rounds")]
    tau_g: Option<u64>,
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    kpen: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    varsigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// fedcure, greedy, or fair.
    #[arg(long, visible_alias = "scheduler")]
    scheduler_kind: Option<String>,
    #[arg(long)]
    max_game_iters: Option<u64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Enable or disable the synthetic learner.
    #[arg(long)]
    learner: Option<bool>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    config.$field = v;
                }
            };
        }
        set!(n_clients);
        set!(n_edges);
        set!(n_classes);
        set!(tau_c);
        set!(tau_e);
        set!(tau_g);
        set!(ell);
        set!(kpen);
        set!(beta);
        set!(kappa);
        set!(alpha);
        set!(gamma);
        set!(varsigma);
        set!(seed);
        set!(max_game_iters);
        if let Some(kind) = &self.scheduler_kind {
            config.scheduler_kind = kind.parse::<SchedulerKind>()?;
        }
        if let Some(sigma) = self.noise_sigma {
            config.latency.noise_sigma = sigma;
        }
        if let Some(enabled) = self.learner {
            config.learner.enabled = enabled;
        }
        Ok(())
    }
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    args.overrides.apply(&mut config)?;
    config.validate()?;
    Ok(config)
}

fn out_dir(args: &CommonArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os("FEDCURE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn print_summary(metrics: &RunMetrics) {
    let s = &metrics.summary;
    println!(
        "scheduler={} seed={} rounds={} beta={} kappa={}",
        s.scheduler, s.seed, s.rounds, s.beta, s.kappa
    );
    if let (Some(initial), Some(finl)) = (s.initial_avg_js, s.final_avg_js) {
        let (iters, converged) = (
            s.formation_iterations.unwrap_or(0),
            s.formation_converged.unwrap_or(false),
        );
        println!(
            "formation: avg-JS {initial:.6} -> {finl:.6} in {iters} visits (converged: {converged})"
        );
    } else if let Some(finl) = s.final_avg_js {
        println!("partition avg-JS: {finl:.6}");
    }
    println!(
        "{:<10} {:>10} {:>15} {:>12}",
        "coalition", "delta", "participation", "mean_rate"
    );
    for m in 0..s.delta.len() {
        println!(
            "{:<10} {:>10.4} {:>15.4} {:>12.6}",
            m, s.delta[m], s.participation[m], s.mean_rate[m]
        );
    }
    println!(
        "cov_latency={:.4} max_queue={:.4}",
        s.cov_latency, s.max_queue
    );
    if let (Some(loss), Some(acc)) = (s.final_loss, s.final_accuracy) {
        println!("final loss={loss:.4} accuracy={acc:.4}");
    }
}

fn write_and_report(metrics: &RunMetrics, dir: &Path) -> Result<()> {
    report::write_artifacts(metrics, dir)
        .with_context(|| format!("writing artifacts to {}", dir.display()))?;
    print_summary(metrics);
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let config = load_config(&args.common)?;
            let metrics = runner::run_experiment(&config, args.skip_formation)?;
            write_and_report(&metrics, &out_dir(&args.common))?;
        }
        Command::Form(args) => {
            let config = load_config(&args)?;
            let (partition, trace, initial) = runner::run_formation_only(&config)?;
            let dir = out_dir(&args);
            std::fs::create_dir_all(&dir)?;
            std::fs::write(
                dir.join(report::FORMATION_FILE),
                report::formation_to_csv(&trace),
            )?;
            let final_js = trace.js_history.last().copied().unwrap_or(initial);
            println!(
                "formation: avg-JS {initial:.6} -> {final_js:.6} in {} visits ({} switches, converged: {})",
                trace.iterations,
                trace.switches.len(),
                trace.converged
            );
            println!("coalition sizes: {:?}", partition.coalition_sizes());
            println!("artifacts: {}", dir.display());
        }
        Command::Sweep(args) => {
            let config = load_config(&args.common)?;
            if args.values.is_empty() {
                println!("no values given; nothing to run");
                return Ok(());
            }
            let runs = runner::sweep(&config, &args.param, &args.values, args.skip_formation)?;
            let dir = out_dir(&args.common);
            println!(
                "{:>12} {:>12} {:>12} {:>14}",
                args.param, "max_queue", "cov_latency", "min_particip."
            );
            for (value, metrics) in &runs {
                let sub = dir.join(format!("{}={}", args.param, value));
                report::write_artifacts(metrics, &sub)?;
                let s = &metrics.summary;
                let min_part = s
                    .participation
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                println!(
                    "{:>12} {:>12.4} {:>12.4} {:>14.4}",
                    value, s.max_queue, s.cov_latency, min_part
                );
            }
            println!("artifacts: {}", dir.display());
        }
        Command::Validate(args) => match load_config(&args) {
            Ok(config) => {
                println!(
                    "ok: {} clients, {} edges, {} classes, scheduler {}",
                    config.n_clients, config.n_edges, config.n_classes, config.scheduler_kind
                );
            }
            Err(e) => bail!("invalid config: {e:#}"),
        },
    }
    Ok(())
}
