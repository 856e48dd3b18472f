//! Learning agents and the training loop.
//!
//! * D3PG: a diffusion denoiser as the actor, trained by deterministic policy
//!   gradient through the whole reverse chain.
//! * D3PG-WCSI: the same agent observing the reported rather than the aged V2V CSI.
//! * DDPG: a plain tanh actor with decaying Gaussian exploration.
//! * H-DDQN: Hungarian channel assignment plus factored double-DQN heads for
//!   discrete powers and altitude steps.
//! * Random: uniform raw actions, used as a floor.

mod actor_critic;
mod hddqn;
mod hungarian;
mod replay;
mod train;

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use actor_critic::{actor_pg_update, critic_td_update, Actor, ActorCriticAgent, ActorTape};
pub use hddqn::{ddqn_update, reference_sinr_cost, HDdqnAgent, QHeads};
pub use hungarian::hungarian_assign;
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{evaluate, train, EpisodeSummary, SlotRecord, TrainOptions, TrainReport};

use crate::env::{Environment, MdpAction, NetworkScenario};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    D3pg,
    D3pgWcsi,
    Ddpg,
    HDdqn,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [AgentKind::D3pg, AgentKind::D3pgWcsi, AgentKind::Ddpg, AgentKind::HDdqn, AgentKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::D3pg => "d3pg",
            AgentKind::D3pgWcsi => "d3pg_wcsi",
            AgentKind::Ddpg => "ddpg",
            AgentKind::HDdqn => "h_ddqn",
            AgentKind::Random => "random",
        }
    }

    /// Whether the agent sees V2V gains aged across the feedback delay.
    pub fn observes_aged_csi(self) -> bool {
        !matches!(self, AgentKind::D3pgWcsi)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent `{s}`; expected one of d3pg, d3pg_wcsi, ddpg, h_ddqn, random")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentHyperparams {
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Discount ω.
    pub discount: f64,
    /// Soft-update rate τ.
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps before the first update.
    pub warmup_steps: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// Initial scale of the actor's output layer.
    pub actor_final_scale: f64,
    /// Rewards are multiplied by this inside TD targets.
    pub reward_scale: f64,
    /// Global gradient-norm clip; `0` disables.
    pub grad_clip: f64,
    pub diffusion_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub ddpg_sigma_start: f64,
    pub ddpg_sigma_end: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Per-link power levels as fractions of `p_max`.
    pub power_levels: Vec<f64>,
    /// Altitude steps as fractions of the maximum step.
    pub altitude_levels: Vec<f64>,
}

impl Default for AgentHyperparams {
    fn default() -> Self {
        Self {
            lr_actor: 3e-6,
            lr_critic: 1e-5,
            discount: 0.99,
            tau: 0.005,
            batch_size: 64,
            buffer_capacity: 50_000,
            warmup_steps: 1000,
            hidden_width: 256,
            hidden_layers: 3,
            actor_final_scale: 0.01,
            reward_scale: 1e-4,
            grad_clip: 0.0,
            diffusion_steps: 4,
            beta_min: 0.1,
            beta_max: 10.0,
            ddpg_sigma_start: 0.3,
            ddpg_sigma_end: 0.05,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            power_levels: vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
            altitude_levels: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
        }
    }
}

impl AgentHyperparams {
    /// Small networks for short desk-scale runs. The critic learns two orders
    /// of magnitude faster than the actor so the policy gradient follows a
    /// critic that has already caught up with the current policy.
    pub fn toy() -> Self {
        Self {
            lr_actor: 1e-5,
            lr_critic: 1e-3,
            hidden_width: 64,
            grad_clip: 10.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("agent.{field}: {msg}")));
        for (name, v) in [("lr_actor", self.lr_actor), ("lr_critic", self.lr_critic)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, format!("must be positive, got {v}"));
            }
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad("discount", format!("must lie in (0, 1), got {}", self.discount));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau", format!("must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity", "must be at least 1".into());
        }
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return bad("hidden_width", "networks need at least one non-empty hidden layer".into());
        }
        if !(self.reward_scale > 0.0) {
            return bad("reward_scale", format!("must be positive, got {}", self.reward_scale));
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip", format!("must be non-negative, got {}", self.grad_clip));
        }
        if self.diffusion_steps == 0 {
            return bad("diffusion_steps", "must be at least 1".into());
        }
        if !(self.beta_min > 0.0 && self.beta_min < self.beta_max) {
            return bad("beta_min", format!("need 0 < beta_min < beta_max, got {}, {}", self.beta_min, self.beta_max));
        }
        if self.power_levels.len() < 2 || self.power_levels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("power_levels", "need at least two fractions in [0, 1]".into());
        }
        if self.altitude_levels.is_empty() || self.altitude_levels.iter().any(|p| !(-1.0..=1.0).contains(p)) {
            return bad("altitude_levels", "need fractions in [-1, 1]".into());
        }
        Ok(())
    }

    pub(crate) fn hidden_sizes(&self) -> Vec<usize> {
        vec![self.hidden_width; self.hidden_layers]
    }
}

/// Linear interpolation from `start` to `end` over `horizon` steps.
pub(crate) fn linear_decay(start: f64, end: f64, step: u64, horizon: u64) -> f64 {
    let frac = if horizon == 0 { 1.0 } else { (step as f64 / horizon as f64).min(1.0) };
    start + (end - start) * frac
}

/// Losses reported by one learning step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

pub enum Agent {
    ActorCritic(Box<ActorCriticAgent>),
    HDdqn(Box<HDdqnAgent>),
    Random { rng: SimRng, action_dim: usize },
}

impl Agent {
    /// `horizon` is the number of environment steps exploration decays over.
    pub fn new(kind: AgentKind, scenario: &NetworkScenario, hp: &AgentHyperparams, seed: u64, horizon: u64) -> Result<Self> {
        hp.validate()?;
        let rng = rng::stream(seed, rng::AGENT_STREAM);
        Ok(match kind {
            AgentKind::D3pg | AgentKind::D3pgWcsi | AgentKind::Ddpg => {
                Agent::ActorCritic(Box::new(ActorCriticAgent::new(kind, scenario, hp, rng, horizon)?))
            }
            AgentKind::HDdqn => Agent::HDdqn(Box::new(HDdqnAgent::new(scenario, hp, rng, horizon)?)),
            AgentKind::Random => Agent::Random { rng, action_dim: scenario.action_dim() },
        })
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::ActorCritic(a) => a.kind(),
            Agent::HDdqn(_) => AgentKind::HDdqn,
            Agent::Random { .. } => AgentKind::Random,
        }
    }

    /// Chooses the raw action for the environment's current state. Returns
    /// the action and the value stored in replay (identical except for H-DDQN).
    pub fn act(&mut self, env: &Environment, explore: bool) -> Result<(MdpAction, Vec<f64>)> {
        match self {
            Agent::ActorCritic(a) => {
                let action = a.act(env.state(), explore)?;
                let stored = action.0.clone();
                Ok((action, stored))
            }
            Agent::HDdqn(a) => a.act(env, explore),
            Agent::Random { rng, action_dim } => {
                let action = MdpAction::uniform(*action_dim, rng);
                let stored = action.0.clone();
                Ok((action, stored))
            }
        }
    }

    pub fn remember(&mut self, t: Transition) {
        match self {
            Agent::ActorCritic(a) => a.remember(t),
            Agent::HDdqn(a) => a.remember(t),
            Agent::Random { .. } => {}
        }
    }

    /// One learning step if warmup has passed.
    pub fn learn(&mut self) -> Result<Option<UpdateStats>> {
        match self {
            Agent::ActorCritic(a) => a.learn(),
            Agent::HDdqn(a) => a.learn(),
            Agent::Random { .. } => Ok(None),
        }
    }

    pub fn transitions_stored(&self) -> usize {
        match self {
            Agent::ActorCritic(a) => a.buffer().len(),
            Agent::HDdqn(a) => a.buffer().len(),
            Agent::Random { .. } => 0,
        }
    }

    pub fn updates(&self) -> u64 {
        match self {
            Agent::ActorCritic(a) => a.updates(),
            Agent::HDdqn(a) => a.updates(),
            Agent::Random { .. } => 0,
        }
    }

    /// Writes every network (online and target) to a text checkpoint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let mut w = BufWriter::new(file);
        let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
        writeln!(w, "aerolink-agent 1 {}", self.kind()).map_err(io)?;
        for net in self.networks() {
            net.write_to(&mut w)?;
        }
        w.flush().map_err(io)
    }

    /// Loads networks saved by [`Agent::save`] into an agent of the same kind and shape.
    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let mut lines = BufReader::new(file).lines();
        let header = lines.next().transpose().map_err(|e| Error::Checkpoint(e.to_string()))?.unwrap_or_default();
        let expected = format!("aerolink-agent 1 {}", self.kind());
        if header != expected {
            return Err(Error::Checkpoint(format!("header `{header}` does not match `{expected}`")));
        }
        let mut loaded = Vec::new();
        for net in self.networks() {
            let n = crate::neural::DenseNet::read_from(&mut lines)?;
            if !n.same_architecture(net) {
                return Err(Error::Checkpoint("network shape differs from this agent".into()));
            }
            loaded.push(n);
        }
        for (slot, n) in self.networks_mut().into_iter().zip(loaded) {
            *slot = n;
        }
        Ok(())
    }

    fn networks(&self) -> Vec<&crate::neural::DenseNet> {
        match self {
            Agent::ActorCritic(a) => a.networks(),
            Agent::HDdqn(a) => a.networks(),
            Agent::Random { .. } => Vec::new(),
        }
    }

    fn networks_mut(&mut self) -> Vec<&mut crate::neural::DenseNet> {
        match self {
            Agent::ActorCritic(a) => a.networks_mut(),
            Agent::HDdqn(a) => a.networks_mut(),
            Agent::Random { .. } => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_through_names() {
        for k in AgentKind::ALL {
            assert_eq!(k.name().parse::<AgentKind>().unwrap(), k);
        }
        assert!("ppo".parse::<AgentKind>().is_err());
    }

    #[test]
    fn only_wcsi_ignores_aging() {
        assert!(!AgentKind::D3pgWcsi.observes_aged_csi());
        assert!(AgentKind::D3pg.observes_aged_csi());
    }

    #[test]
    fn hyperparameter_validation_names_field() {
        let hp = AgentHyperparams { discount: 1.0, ..Default::default() };
        let msg = hp.validate().unwrap_err().to_string();
        assert!(msg.contains("discount"), "{msg}");
        assert!(AgentHyperparams::toy().validate().is_ok());
    }

    #[test]
    fn decay_is_linear_and_saturates() {
        assert_eq!(linear_decay(1.0, 0.0, 0, 10), 1.0);
        assert_eq!(linear_decay(1.0, 0.0, 5, 10), 0.5);
        assert_eq!(linear_decay(1.0, 0.0, 50, 10), 0.0);
    }
}
