//! Episode loop shared by every agent.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::replay::Transition;
use super::{Agent, AgentHyperparams, AgentKind};
use crate::env::{EnvConfig, Environment};
use crate::error::Result;
use crate::mobility::MobilityTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub episodes: usize,
    /// Measure per-slot inference wall time; otherwise the column is zero so
    /// output files stay reproducible.
    pub record_timing: bool,
}

/// One slot of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub episode: usize,
    pub slot: usize,
    pub reward: f64,
    pub mean_v2u_rate_bps: f64,
    pub energy_j: f64,
    /// `(1/t) Σ P Δ` since the start of the episode.
    pub moving_avg_energy_j: f64,
    /// Queue backlog after the slot.
    pub queue: f64,
    pub outage_violations: usize,
    pub inference_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub total_reward: f64,
    pub mean_v2u_rate_bps: f64,
    pub final_moving_avg_energy_j: f64,
    pub final_queue: f64,
    pub outage_violations: usize,
    pub min_altitude: f64,
    pub max_altitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub kind: AgentKind,
    pub episodes: Vec<EpisodeSummary>,
    pub updates: u64,
    pub transitions: usize,
}

impl TrainReport {
    /// Mean total reward over the last `n` episodes.
    pub fn final_mean_reward(&self, n: usize) -> f64 {
        let tail = &self.episodes[self.episodes.len().saturating_sub(n)..];
        tail.iter().map(|e| e.total_reward).sum::<f64>() / tail.len().max(1) as f64
    }
}

fn run_episode(
    agent: &mut Agent,
    env: &mut Environment,
    episode: usize,
    learn: bool,
    record_timing: bool,
    sink: &mut dyn FnMut(&SlotRecord),
) -> Result<EpisodeSummary> {
    let mut total_reward = 0.0;
    let mut rate_sum = 0.0;
    let mut energy_sum = 0.0;
    let mut violations = 0;
    let mut min_alt = env.uav().altitude;
    let mut max_alt = min_alt;
    let slots = env.scenario().slots;
    for slot in 0..slots {
        let start = record_timing.then(Instant::now);
        let (action, stored) = agent.act(env, learn)?;
        let inference_ms = start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
        let state = env.state().values.clone();
        let out = env.step(&action)?;
        if learn {
            agent.remember(Transition { state, action: stored, reward: out.reward.reward, next_state: out.next_state.values.clone() });
            agent.learn()?;
        }
        total_reward += out.reward.reward;
        rate_sum += out.reward.mean_v2u_rate;
        energy_sum += out.info.energy;
        violations += out.reward.outage_violations;
        min_alt = min_alt.min(out.info.altitude);
        max_alt = max_alt.max(out.info.altitude);
        sink(&SlotRecord {
            episode,
            slot,
            reward: out.reward.reward,
            mean_v2u_rate_bps: out.reward.mean_v2u_rate,
            energy_j: out.info.energy,
            moving_avg_energy_j: energy_sum / (slot + 1) as f64,
            queue: out.info.queue_after,
            outage_violations: out.reward.outage_violations,
            inference_ms,
        });
    }
    Ok(EpisodeSummary {
        episode,
        total_reward,
        mean_v2u_rate_bps: rate_sum / slots as f64,
        final_moving_avg_energy_j: energy_sum / slots as f64,
        final_queue: env.queue().q,
        outage_violations: violations,
        min_altitude: min_alt,
        max_altitude: max_alt,
    })
}

/// Trains an agent from scratch for `opts.episodes` episodes, streaming one
/// record per slot to `sink`. Returns the report and the trained agent.
pub fn train(
    kind: AgentKind,
    env_cfg: &EnvConfig,
    trace: Arc<MobilityTrace>,
    hp: &AgentHyperparams,
    seed: u64,
    opts: &TrainOptions,
    sink: &mut dyn FnMut(&SlotRecord),
) -> Result<(TrainReport, Agent)> {
    let mut env = Environment::new(env_cfg.clone(), trace, seed, kind.observes_aged_csi())?;
    let horizon = (opts.episodes * env_cfg.scenario.slots) as u64;
    let mut agent = Agent::new(kind, &env_cfg.scenario, hp, seed, horizon)?;
    let mut episodes = Vec::with_capacity(opts.episodes);
    for ep in 0..opts.episodes {
        if ep > 0 {
            env.reset()?;
        }
        episodes.push(run_episode(&mut agent, &mut env, ep, true, opts.record_timing, sink)?);
    }
    let report = TrainReport { kind, episodes, updates: agent.updates(), transitions: agent.transitions_stored() };
    Ok((report, agent))
}

/// Runs the agent greedily (no exploration, no learning) on a fresh environment.
pub fn evaluate(
    agent: &mut Agent,
    env_cfg: &EnvConfig,
    trace: Arc<MobilityTrace>,
    seed: u64,
    opts: &TrainOptions,
    sink: &mut dyn FnMut(&SlotRecord),
) -> Result<Vec<EpisodeSummary>> {
    let mut env = Environment::new(env_cfg.clone(), trace, seed, agent.kind().observes_aged_csi())?;
    let mut out = Vec::with_capacity(opts.episodes);
    for ep in 0..opts.episodes {
        if ep > 0 {
            env.reset()?;
        }
        out.push(run_episode(agent, &mut env, ep, false, opts.record_timing, sink)?);
    }
    Ok(out)
}
