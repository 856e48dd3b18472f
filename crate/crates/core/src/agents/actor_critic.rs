//! Deterministic policy gradient with either a diffusion or a plain actor.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use super::replay::{Batch, ReplayBuffer, Transition};
use super::{linear_decay, AgentHyperparams, AgentKind, UpdateStats};
use crate::diffusion::{build_schedule, chain_backward, denoiser_input_dim, sample_chain, ChainTape, DiffusionSchedule};
use crate::env::{MdpAction, MdpState, NetworkScenario};
use crate::error::Result;
use crate::neural::{Activation, Adam, DenseNet, Gradients, Tape};
use crate::rng::{normal, SimRng};

#[derive(Debug, Clone)]
pub enum Actor {
    /// `state → tanh(·)`.
    Plain(DenseNet),
    /// Denoiser driving the reverse chain.
    Diffusion { net: DenseNet, schedule: DiffusionSchedule },
}

#[derive(Debug, Clone)]
pub enum ActorTape {
    Plain(Tape),
    Diffusion(ChainTape),
}

impl ActorTape {
    pub fn actions(&self) -> &Array2<f64> {
        match self {
            ActorTape::Plain(t) => t.output(),
            ActorTape::Diffusion(t) => t.actions(),
        }
    }
}

impl Actor {
    pub fn net(&self) -> &DenseNet {
        match self {
            Actor::Plain(n) | Actor::Diffusion { net: n, .. } => n,
        }
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        match self {
            Actor::Plain(n) | Actor::Diffusion { net: n, .. } => n,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.net().output_dim()
    }

    /// Differentiable policy output for a batch. `evaluate` only affects the
    /// diffusion chain, where it removes the intermediate noise.
    pub fn forward(&self, states: ArrayView2<f64>, evaluate: bool, rng: &mut SimRng) -> Result<ActorTape> {
        match self {
            Actor::Plain(n) => Ok(ActorTape::Plain(n.forward(&states.to_owned())?)),
            Actor::Diffusion { net, schedule } => {
                Ok(ActorTape::Diffusion(sample_chain(net, states, schedule, net.output_dim(), evaluate, rng)?))
            }
        }
    }

    pub fn backward(&self, tape: &ActorTape, d_actions: &Array2<f64>) -> Result<Gradients> {
        match (self, tape) {
            (Actor::Plain(n), ActorTape::Plain(t)) => Ok(n.backward(t, d_actions)?.0),
            (Actor::Diffusion { net, schedule }, ActorTape::Diffusion(t)) => chain_backward(net, t, d_actions, schedule),
            _ => Err(crate::Error::InvalidState("actor tape of the wrong kind".into())),
        }
    }
}

fn critic_input(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[states, actions]).expect("batch sizes agree")
}

fn clip(g: &mut Gradients, hp: &AgentHyperparams) {
    if hp.grad_clip > 0.0 {
        g.clip_norm(hp.grad_clip);
    }
}

/// One descent step on the mean squared TD error with targets
/// `y = reward_scale · r + ω Q'(s', a')`. Returns the loss before the step.
pub fn critic_td_update(
    critic: &mut DenseNet,
    opt: &mut Adam,
    target_critic: &DenseNet,
    batch: &Batch,
    next_actions: &Array2<f64>,
    hp: &AgentHyperparams,
) -> Result<f64> {
    let b = batch.len() as f64;
    let q_next = target_critic.predict(&critic_input(batch.next_states.view(), next_actions.view()))?;
    let y = &batch.rewards * hp.reward_scale + &(q_next.column(0).to_owned() * hp.discount);
    let tape = critic.forward(&critic_input(batch.states.view(), batch.actions.view()))?;
    let diff = &tape.output().column(0) - &y;
    let loss = diff.mapv(|d| d * d).sum() / b;
    let d_out = (diff * (2.0 / b)).insert_axis(Axis(1));
    let (mut g, _) = critic.backward(&tape, &d_out)?;
    clip(&mut g, hp);
    opt.step(critic, &g, false);
    Ok(loss)
}

/// One ascent step on `mean Q(s, π(s))`, differentiating through the actor's
/// output. Returns the objective before the step.
pub fn actor_pg_update(
    actor: &mut Actor,
    opt: &mut Adam,
    critic: &DenseNet,
    states: ArrayView2<f64>,
    hp: &AgentHyperparams,
    rng: &mut SimRng,
) -> Result<f64> {
    let b = states.nrows() as f64;
    let tape = actor.forward(states, false, rng)?;
    let ctape = critic.forward(&critic_input(states, tape.actions().view()))?;
    let objective = ctape.output().sum() / b;
    let (_, d_in) = critic.backward(&ctape, &Array2::from_elem((states.nrows(), 1), 1.0 / b))?;
    let d_actions = d_in.slice(s![.., states.ncols()..]).to_owned();
    let mut g = actor.backward(&tape, &d_actions)?;
    clip(&mut g, hp);
    opt.step(actor.net_mut(), &g, true);
    Ok(objective)
}

#[derive(Debug, Clone)]
pub struct ActorCriticAgent {
    kind: AgentKind,
    actor: Actor,
    target_actor: Actor,
    critic: DenseNet,
    target_critic: DenseNet,
    actor_opt: Adam,
    critic_opt: Adam,
    buffer: ReplayBuffer,
    hp: AgentHyperparams,
    rng: SimRng,
    stored: u64,
    horizon: u64,
    updates: u64,
}

impl ActorCriticAgent {
    pub fn new(kind: AgentKind, scenario: &NetworkScenario, hp: &AgentHyperparams, mut rng: SimRng, horizon: u64) -> Result<Self> {
        let (s_dim, a_dim) = (scenario.state_dim(), scenario.action_dim());
        let hidden = hp.hidden_sizes();
        let actor = match kind {
            AgentKind::Ddpg => {
                let sizes = [vec![s_dim], hidden.clone(), vec![a_dim]].concat();
                Actor::Plain(DenseNet::new(&sizes, Activation::Relu, Activation::Tanh, hp.actor_final_scale, &mut rng)?)
            }
            _ => {
                let schedule = build_schedule(hp.diffusion_steps, hp.beta_min, hp.beta_max)?;
                let input = denoiser_input_dim(a_dim, schedule.steps, s_dim);
                let sizes = [vec![input], hidden.clone(), vec![a_dim]].concat();
                let net = DenseNet::new(&sizes, Activation::Relu, Activation::Identity, hp.actor_final_scale, &mut rng)?;
                Actor::Diffusion { net, schedule }
            }
        };
        let sizes = [vec![s_dim + a_dim], hidden, vec![1]].concat();
        let critic = DenseNet::new(&sizes, Activation::Relu, Activation::Identity, 1.0, &mut rng)?;
        Ok(Self {
            kind,
            actor_opt: Adam::new(actor.net(), hp.lr_actor),
            critic_opt: Adam::new(&critic, hp.lr_critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            buffer: ReplayBuffer::new(hp.buffer_capacity),
            hp: hp.clone(),
            rng,
            stored: 0,
            horizon,
            updates: 0,
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn actor(&self) -> &Actor {
        &self.actor
    }

    pub fn critic(&self) -> &DenseNet {
        &self.critic
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Current DDPG exploration standard deviation.
    pub fn exploration_sigma(&self) -> f64 {
        linear_decay(self.hp.ddpg_sigma_start, self.hp.ddpg_sigma_end, self.stored, self.horizon)
    }

    pub fn act(&mut self, state: &MdpState, explore: bool) -> Result<MdpAction> {
        let s = ArrayView2::from_shape((1, state.len()), &state.values).expect("contiguous state");
        let tape = self.actor.forward(s, !explore, &mut self.rng)?;
        let mut a = tape.actions().row(0).to_vec();
        if explore && matches!(self.actor, Actor::Plain(_)) {
            let sigma = self.exploration_sigma();
            for v in &mut a {
                *v = (*v + sigma * normal(&mut self.rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(MdpAction(a))
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
        self.stored += 1;
    }

    pub fn learn(&mut self) -> Result<Option<UpdateStats>> {
        if (self.stored as usize) < self.hp.warmup_steps.max(1) {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.hp.batch_size, &mut self.rng);
        let next = self.target_actor.forward(batch.next_states.view(), false, &mut self.rng)?;
        let critic_loss = critic_td_update(&mut self.critic, &mut self.critic_opt, &self.target_critic, &batch, next.actions(), &self.hp)?;
        let actor_objective =
            actor_pg_update(&mut self.actor, &mut self.actor_opt, &self.critic, batch.states.view(), &self.hp, &mut self.rng)?;
        self.target_critic.soft_update_from(&self.critic, self.hp.tau)?;
        self.target_actor.net_mut().soft_update_from(self.actor.net(), self.hp.tau)?;
        self.updates += 1;
        Ok(Some(UpdateStats { critic_loss, actor_objective }))
    }

    pub(crate) fn networks(&self) -> Vec<&DenseNet> {
        vec![self.actor.net(), self.target_actor.net(), &self.critic, &self.target_critic]
    }

    pub(crate) fn networks_mut(&mut self) -> Vec<&mut DenseNet> {
        vec![self.actor.net_mut(), self.target_actor.net_mut(), &mut self.critic, &mut self.target_critic]
    }
}
