//! Runs every (agent, sweep point, seed) combination and persists the results.
//!
//! Output layout under `output_dir`:
//!
//! * `runs/<run_id>/metrics.csv`: training rows of one run.
//! * `runs/<run_id>/eval.csv`: greedy evaluation rows, when `eval_episodes > 0`.
//! * `metrics.csv`: every training row of every run, in plan order.
//! * `summary.json`: per-run outcomes and their means across seeds.

use std::fs;
use std::path::Path;

use aerolink_core::agents::{evaluate, train, SlotRecord, TrainOptions};
use aerolink_core::AgentKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SweepPoint};
use crate::error::{io, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RUNS_DIR: &str = "runs";

/// Outcomes average over the last this-many training episodes.
pub const FINAL_WINDOW: usize = 10;

/// One slot of one run. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub seed: u64,
    pub episode: usize,
    pub slot: usize,
    pub reward: f64,
    pub mean_v2u_rate_bps: f64,
    pub energy_j: f64,
    pub moving_avg_energy_j: f64,
    pub queue: f64,
    pub outage_violations: usize,
    pub inference_ms: f64,
}

impl MetricsRecord {
    fn new(run_id: &str, seed: u64, r: &SlotRecord) -> Self {
        Self {
            run_id: run_id.to_owned(),
            seed,
            episode: r.episode,
            slot: r.slot,
            reward: r.reward,
            mean_v2u_rate_bps: r.mean_v2u_rate_bps,
            energy_j: r.energy_j,
            moving_avg_energy_j: r.moving_avg_energy_j,
            queue: r.queue,
            outage_violations: r.outage_violations,
            inference_ms: r.inference_ms,
        }
    }
}

/// Quantities reported per run and averaged per group. All of them can be
/// recomputed from the run's rows in `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Mean episode return over the final window.
    pub final_reward: f64,
    /// Mean per-slot V2U rate over the final window, bit/s.
    pub final_mean_v2u_rate_bps: f64,
    /// Moving-average energy at the last slot of the last episode, J.
    pub final_moving_avg_energy_j: f64,
    /// Queue backlog after the last slot of the last episode, J.
    pub final_queue: f64,
    /// Mean outage violations per episode over the final window.
    pub final_outage_violations: f64,
    /// Mean per-slot inference time over all training slots, ms.
    pub mean_inference_ms: f64,
    /// Mean episode return of the greedy evaluation episodes.
    pub eval_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub point: SweepPoint,
    pub updates: u64,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub agent: AgentKind,
    pub point: SweepPoint,
    pub seeds: Vec<u64>,
    pub run_ids: Vec<String>,
    /// Standard error of `final_reward` across seeds.
    pub final_reward_stderr: f64,
    /// Field-wise arithmetic means of the runs' outcomes.
    #[serde(flatten)]
    pub mean: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub swept_dimensions: Vec<String>,
    pub episodes: usize,
    pub slots: usize,
    pub final_window: usize,
    /// Constants needed to annotate the delay sweep.
    pub carrier_frequency: f64,
    pub light_speed: f64,
    pub s_rel_floor: f64,
    pub runs: Vec<RunSummary>,
    pub groups: Vec<GroupSummary>,
}

impl Summary {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
struct Job {
    agent: AgentKind,
    point: SweepPoint,
    seed: u64,
}

impl Job {
    fn run_id(&self) -> String {
        format!("{}-{}-s{}", self.agent, self.point.label(), self.seed)
    }
}

fn plan(cfg: &ExperimentConfig) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &agent in &cfg.agents {
        for point in cfg.sweep_points() {
            for &seed in &cfg.seeds {
                jobs.push(Job { agent, point, seed });
            }
        }
    }
    jobs
}

pub fn write_records(path: &Path, rows: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io(path))?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Standard error of the mean; zero for fewer than two samples.
pub fn stderr(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs.iter().copied());
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

/// Per-episode returns of a run, in episode order.
pub fn episode_returns(rows: &[MetricsRecord]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for r in rows {
        if r.episode == out.len() {
            out.push(0.0);
        }
        out[r.episode] += r.reward;
    }
    out
}

pub fn outcome_of(rows: &[MetricsRecord], eval_rows: &[MetricsRecord]) -> Outcome {
    let returns = episode_returns(rows);
    let first = returns.len().saturating_sub(FINAL_WINDOW);
    let window: Vec<&MetricsRecord> = rows.iter().filter(|r| r.episode >= first).collect();
    let last = rows.last();
    let eval_reward = (!eval_rows.is_empty()).then(|| mean(episode_returns(eval_rows)));
    Outcome {
        final_reward: mean(returns[first..].iter().copied()),
        final_mean_v2u_rate_bps: mean(window.iter().map(|r| r.mean_v2u_rate_bps)),
        final_moving_avg_energy_j: last.map_or(0.0, |r| r.moving_avg_energy_j),
        final_queue: last.map_or(0.0, |r| r.queue),
        final_outage_violations: window.iter().map(|r| r.outage_violations).sum::<usize>() as f64
            / (returns.len() - first).max(1) as f64,
        mean_inference_ms: mean(rows.iter().map(|r| r.inference_ms)),
        eval_reward,
    }
}

fn mean_outcome(items: &[&Outcome]) -> Outcome {
    let avg = |f: fn(&Outcome) -> f64| mean(items.iter().map(|o| f(o)));
    let eval = items.iter().map(|o| o.eval_reward).collect::<Option<Vec<_>>>().map(mean);
    Outcome {
        final_reward: avg(|o| o.final_reward),
        final_mean_v2u_rate_bps: avg(|o| o.final_mean_v2u_rate_bps),
        final_moving_avg_energy_j: avg(|o| o.final_moving_avg_energy_j),
        final_queue: avg(|o| o.final_queue),
        final_outage_violations: avg(|o| o.final_outage_violations),
        mean_inference_ms: avg(|o| o.mean_inference_ms),
        eval_reward: eval,
    }
}

fn run_job(cfg: &ExperimentConfig, job: &Job, trace: &std::sync::Arc<aerolink_core::MobilityTrace>) -> Result<(RunSummary, Vec<MetricsRecord>)> {
    let run_id = job.run_id();
    let env = cfg.env_for(&job.point);
    let hp = cfg.hyperparams_for(&job.point);
    let mut rows = Vec::with_capacity(cfg.episodes * env.scenario.slots);
    let opts = TrainOptions { episodes: cfg.episodes, record_timing: cfg.record_timing };
    let (report, mut agent) =
        train(job.agent, &env, trace.clone(), &hp, job.seed, &opts, &mut |r| rows.push(MetricsRecord::new(&run_id, job.seed, r)))?;

    let mut eval_rows = Vec::new();
    if cfg.eval_episodes > 0 {
        let opts = TrainOptions { episodes: cfg.eval_episodes, record_timing: cfg.record_timing };
        // A distinct environment stream, so evaluation does not replay the first training episode.
        let eval_seed = job.seed ^ 0x9e37_79b9_7f4a_7c15;
        evaluate(&mut agent, &env, trace.clone(), eval_seed, &opts, &mut |r| eval_rows.push(MetricsRecord::new(&run_id, job.seed, r)))?;
    }

    let dir = cfg.output_dir.join(RUNS_DIR).join(&run_id);
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    write_records(&dir.join(METRICS_FILE), &rows)?;
    if !eval_rows.is_empty() {
        write_records(&dir.join(EVAL_FILE), &eval_rows)?;
    }
    let summary = RunSummary {
        run_id,
        agent: job.agent,
        seed: job.seed,
        point: job.point,
        updates: report.updates,
        outcome: outcome_of(&rows, &eval_rows),
    };
    Ok((summary, rows))
}

/// Trains and evaluates every planned run in parallel, then writes the
/// combined metrics and the summary. Output bytes depend only on the config
/// (and on wall-clock time when `record_timing` is on).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    let trace = cfg.trace()?;
    fs::create_dir_all(&cfg.output_dir).map_err(io(&cfg.output_dir))?;
    let jobs = plan(cfg);
    let results: Vec<(RunSummary, Vec<MetricsRecord>)> =
        jobs.par_iter().map(|job| run_job(cfg, job, &trace)).collect::<Result<_>>()?;

    let mut w = csv::Writer::from_path(cfg.output_dir.join(METRICS_FILE))?;
    for (_, rows) in &results {
        for r in rows {
            w.serialize(r)?;
        }
    }
    w.flush().map_err(io(cfg.output_dir.join(METRICS_FILE)))?;

    let runs: Vec<RunSummary> = results.into_iter().map(|(s, _)| s).collect();
    let mut groups: Vec<GroupSummary> = Vec::new();
    for run in &runs {
        if groups.iter().any(|g| g.agent == run.agent && g.point == run.point) {
            continue;
        }
        let members: Vec<&RunSummary> = runs.iter().filter(|r| r.agent == run.agent && r.point == run.point).collect();
        let rewards: Vec<f64> = members.iter().map(|r| r.outcome.final_reward).collect();
        let outcomes: Vec<&Outcome> = members.iter().map(|r| &r.outcome).collect();
        groups.push(GroupSummary {
            agent: run.agent,
            point: run.point,
            seeds: members.iter().map(|r| r.seed).collect(),
            run_ids: members.iter().map(|r| r.run_id.clone()).collect(),
            final_reward_stderr: stderr(&rewards),
            mean: mean_outcome(&outcomes),
        });
    }

    let summary = Summary {
        swept_dimensions: cfg.sweep.dimensions().into_iter().map(String::from).collect(),
        episodes: cfg.episodes,
        slots: cfg.env.scenario.slots,
        final_window: FINAL_WINDOW,
        carrier_frequency: cfg.env.channel.carrier_frequency,
        light_speed: cfg.env.channel.light_speed,
        s_rel_floor: cfg.env.s_rel_floor,
        runs,
        groups,
    };
    let path = cfg.output_dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&path, text).map_err(io(&path))?;
    Ok(summary)
}
