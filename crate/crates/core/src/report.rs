//! Run metrics, derived statistics, and the on-disk artifact formats.
//!
//! A run produces up to four files in its output directory:
//!
//! - `rounds.csv`: one row per global round (round 0 included): round,
//!   clock, chosen coalition (−1 for the round-0 wave), staleness, staleness
//!   weight, realized latency of the dispatched training, loss/accuracy when
//!   the learner is on, then per-coalition column groups for the queue
//!   backlogs, the latency estimates the decision saw, and the availability
//!   mask.
//! - `formation.csv`: one row per accepted coalition switch: iteration,
//!   client, from, to, avg-JS after the switch.
//! - `allocations.csv`: one row per dispatched client: round, coalition,
//!   member, assigned frequency, whether it sits at the member's f_max.
//! - `summary.json`: the [`RunSummary`] document.
//!
//! Floats in the CSV files carry 9 significant digits; parsing a written file
//! and writing it again is byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coalition::{GameTrace, SwitchProposal};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metrics i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed metrics file: {0}")]
    Parse(String),
    #[error("summary (de)serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot compute a statistic: {0}")]
    Undefined(String),
}

/// One global round of the simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRow {
    pub round: u64,
    /// Simulated seconds at aggregation time.
    pub clock: f64,
    /// Aggregated coalition; −1 on the round-0 initialization wave.
    pub chosen: i64,
    /// Staleness φ of the aggregated model (0 at round 0).
    pub staleness: u64,
    /// ξ_φ = ℓ·𝕜^φ (0 at round 0).
    pub weight: f64,
    /// Realized latency of the training dispatched this round; at round 0,
    /// the slowest of the M initial dispatches.
    pub latency: f64,
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    /// Virtual queue backlogs after this round's update.
    pub lambda: Vec<f64>,
    /// Posterior-mean latency estimates at selection time.
    pub t_hat: Vec<f64>,
    /// Which coalitions had a buffered upload when this round selected.
    pub available: Vec<bool>,
}

/// One frequency assignment: emitted for every member of every dispatched
/// coalition, the round-0 wave included.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationRow {
    pub round: u64,
    pub coalition: usize,
    pub member: usize,
    pub freq: f64,
    /// True when the assignment sits at the member's maximum frequency.
    pub clamped: bool,
}

/// End-of-run digest plus enough formation state to reconstruct a
/// [`GameTrace`] from `formation.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheduler: String,
    pub seed: u64,
    pub rounds: u64,
    pub beta: f64,
    pub kappa: f64,
    /// Coefficient of variation of per-round latency over rounds t ≥ 1.
    pub cov_latency: f64,
    /// Fraction of rounds t ≥ 1 in which each coalition was scheduled.
    pub participation: Vec<f64>,
    /// Participation targets δ_m.
    pub delta: Vec<f64>,
    /// Λ_m(τ_g)/τ_g.
    pub mean_rate: Vec<f64>,
    /// Largest backlog observed anywhere in the run.
    pub max_queue: f64,
    /// avg-JS of the partition the simulation ran under (None when M < 2).
    pub final_avg_js: Option<f64>,
    /// avg-JS before formation, when formation ran.
    pub initial_avg_js: Option<f64>,
    pub formation_iterations: Option<u64>,
    pub formation_converged: Option<bool>,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub rounds: Vec<RoundRow>,
    pub allocations: Vec<AllocationRow>,
    pub formation: Option<GameTrace>,
    pub summary: RunSummary,
}

/// Population coefficient of variation: std/mean.
pub fn cov(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Undefined("COV of an empty series".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(MetricsError::Undefined("COV with zero mean".into()));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

/// 9 significant digits, scientific notation.
fn fmt_float(v: f64) -> String {
    format!("{:.8e}", v)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn parse_float(field: &str, ctx: &str) -> Result<f64, MetricsError> {
    field
        .parse()
        .map_err(|_| MetricsError::Parse(format!("bad float `{field}` in {ctx}")))
}

fn parse_int<T: std::str::FromStr>(field: &str, ctx: &str) -> Result<T, MetricsError> {
    field
        .parse()
        .map_err(|_| MetricsError::Parse(format!("bad integer `{field}` in {ctx}")))
}

fn parse_opt(field: &str, ctx: &str) -> Result<Option<f64>, MetricsError> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_float(field, ctx).map(Some)
    }
}

pub fn rounds_to_csv(rows: &[RoundRow]) -> String {
    let m = rows.first().map_or(0, |r| r.lambda.len());
    let mut out = String::from("round,clock,chosen,staleness,weight,latency,loss,accuracy");
    for prefix in ["lambda", "that", "avail"] {
        for i in 0..m {
            out.push_str(&format!(",{prefix}_{i}"));
        }
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            r.round,
            fmt_float(r.clock),
            r.chosen,
            r.staleness,
            fmt_float(r.weight),
            fmt_float(r.latency),
            fmt_opt(r.loss),
            fmt_opt(r.accuracy),
        ));
        for l in &r.lambda {
            out.push(',');
            out.push_str(&fmt_float(*l));
        }
        for t in &r.t_hat {
            out.push(',');
            out.push_str(&fmt_float(*t));
        }
        for a in &r.available {
            out.push(',');
            out.push(if *a { '1' } else { '0' });
        }
        out.push('\n');
    }
    out
}

pub fn rounds_from_csv(text: &str) -> Result<Vec<RoundRow>, MetricsError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| MetricsError::Parse("rounds.csv is empty".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 8 || cols[0] != "round" || !(cols.len() - 8).is_multiple_of(3) {
        return Err(MetricsError::Parse("unexpected rounds.csv header".into()));
    }
    let m = (cols.len() - 8) / 3;
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let ctx = format!("rounds.csv line {}", lineno + 2);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 + 3 * m {
            return Err(MetricsError::Parse(format!("wrong column count in {ctx}")));
        }
        let floats = |range: std::ops::Range<usize>| -> Result<Vec<f64>, MetricsError> {
            f[range].iter().map(|s| parse_float(s, &ctx)).collect()
        };
        let lambda = floats(8..8 + m)?;
        let t_hat = floats(8 + m..8 + 2 * m)?;
        let available = f[8 + 2 * m..]
            .iter()
            .map(|s| match *s {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(MetricsError::Parse(format!("bad flag `{other}` in {ctx}"))),
            })
            .collect::<Result<Vec<bool>, _>>()?;
        rows.push(RoundRow {
            round: parse_int(f[0], &ctx)?,
            clock: parse_float(f[1], &ctx)?,
            chosen: parse_int(f[2], &ctx)?,
            staleness: parse_int(f[3], &ctx)?,
            weight: parse_float(f[4], &ctx)?,
            latency: parse_float(f[5], &ctx)?,
            loss: parse_opt(f[6], &ctx)?,
            accuracy: parse_opt(f[7], &ctx)?,
            lambda,
            t_hat,
            available,
        });
    }
    Ok(rows)
}

pub fn allocations_to_csv(rows: &[AllocationRow]) -> String {
    let mut out = String::from("round,coalition,member,freq,clamped\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.round,
            r.coalition,
            r.member,
            fmt_float(r.freq),
            u8::from(r.clamped)
        ));
    }
    out
}

pub fn allocations_from_csv(text: &str) -> Result<Vec<AllocationRow>, MetricsError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| MetricsError::Parse("allocations.csv is empty".into()))?;
    if header != "round,coalition,member,freq,clamped" {
        return Err(MetricsError::Parse(
            "unexpected allocations.csv header".into(),
        ));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let ctx = format!("allocations.csv line {}", lineno + 2);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(MetricsError::Parse(format!("wrong column count in {ctx}")));
        }
        rows.push(AllocationRow {
            round: parse_int(f[0], &ctx)?,
            coalition: parse_int(f[1], &ctx)?,
            member: parse_int(f[2], &ctx)?,
            freq: parse_float(f[3], &ctx)?,
            clamped: match f[4] {
                "1" => true,
                "0" => false,
                other => return Err(MetricsError::Parse(format!("bad flag `{other}` in {ctx}"))),
            },
        });
    }
    Ok(rows)
}

pub fn formation_to_csv(trace: &GameTrace) -> String {
    let mut out = String::from("iteration,client,from,to,avg_js\n");
    debug_assert_eq!(trace.switches.len(), trace.js_history.len());
    for (i, (s, js)) in trace.switches.iter().zip(&trace.js_history).enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            s.client,
            s.from,
            s.to,
            fmt_float(*js)
        ));
    }
    out
}

/// Rebuild a [`GameTrace`] from its CSV rows plus the summary fields that
/// carry the scalar state (initial avg-JS, iteration count, convergence flag).
pub fn formation_from_csv(text: &str, summary: &RunSummary) -> Result<GameTrace, MetricsError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| MetricsError::Parse("formation.csv is empty".into()))?;
    if header != "iteration,client,from,to,avg_js" {
        return Err(MetricsError::Parse(
            "unexpected formation.csv header".into(),
        ));
    }
    let mut js_history = Vec::new();
    let mut switches = Vec::new();
    let mut prev = summary.initial_avg_js.ok_or_else(|| {
        MetricsError::Parse("summary lacks initial_avg_js for formation trace".into())
    })?;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let ctx = format!("formation.csv line {}", lineno + 2);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(MetricsError::Parse(format!("wrong column count in {ctx}")));
        }
        let js: f64 = parse_float(f[4], &ctx)?;
        switches.push(SwitchProposal {
            client: parse_int(f[1], &ctx)?,
            from: parse_int(f[2], &ctx)?,
            to: parse_int(f[3], &ctx)?,
            delta_avg_js: js - prev,
        });
        js_history.push(js);
        prev = js;
    }
    Ok(GameTrace {
        iterations: summary.formation_iterations.unwrap_or(0),
        js_history,
        switches,
        converged: summary.formation_converged.unwrap_or(false),
    })
}

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const FORMATION_FILE: &str = "formation.csv";
pub const ALLOCATIONS_FILE: &str = "allocations.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn write_artifacts(metrics: &RunMetrics, dir: &Path) -> Result<(), MetricsError> {
    fs::create_dir_all(dir)?;
    let mut rounds = fs::File::create(dir.join(ROUNDS_FILE))?;
    rounds.write_all(rounds_to_csv(&metrics.rounds).as_bytes())?;
    if let Some(trace) = &metrics.formation {
        let mut formation = fs::File::create(dir.join(FORMATION_FILE))?;
        formation.write_all(formation_to_csv(trace).as_bytes())?;
    }
    let mut allocations = fs::File::create(dir.join(ALLOCATIONS_FILE))?;
    allocations.write_all(allocations_to_csv(&metrics.allocations).as_bytes())?;
    let mut summary = fs::File::create(dir.join(SUMMARY_FILE))?;
    summary.write_all(serde_json::to_string_pretty(&metrics.summary)?.as_bytes())?;
    summary.write_all(b"\n")?;
    Ok(())
}

pub fn read_artifacts(dir: &Path) -> Result<RunMetrics, MetricsError> {
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE))?)?;
    let rounds = rounds_from_csv(&fs::read_to_string(dir.join(ROUNDS_FILE))?)?;
    let allocations = allocations_from_csv(&fs::read_to_string(dir.join(ALLOCATIONS_FILE))?)?;
    let formation_path = dir.join(FORMATION_FILE);
    let formation = if formation_path.exists() {
        Some(formation_from_csv(
            &fs::read_to_string(formation_path)?,
            &summary,
        )?)
    } else {
        None
    };
    Ok(RunMetrics {
        rounds,
        allocations,
        formation,
        summary,
    })
}

/// Participation fractions recomputed from the round rows (t ≥ 1).
pub fn participation_from_rows(rows: &[RoundRow], n_coalitions: usize) -> Vec<f64> {
    let mut counts = vec![0u64; n_coalitions];
    let mut total = 0u64;
    for r in rows.iter().filter(|r| r.round >= 1) {
        if r.chosen >= 0 {
            counts[r.chosen as usize] += 1;
            total += 1;
        }
    }
    counts
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        })
        .collect()
}
