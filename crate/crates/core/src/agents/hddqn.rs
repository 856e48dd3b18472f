//! Hungarian channel assignment combined with double-DQN over discretised
//! powers and altitude steps.
//!
//! The Q-network has one head per power-controlled link and one for the
//! altitude step, each scoring its own discrete levels. All heads share the
//! slot reward and bootstrap from their own double-Q target.

use ndarray::{Array2, ArrayView1};
use rand::Rng;

use super::hungarian::hungarian_assign;
use super::replay::{Batch, ReplayBuffer, Transition};
use super::{linear_decay, AgentHyperparams, UpdateStats};
use crate::channel::{ChannelParams, LinkGains};
use crate::env::{Environment, MdpAction, NetworkScenario};
use crate::error::Result;
use crate::neural::{Activation, Adam, DenseNet};
use crate::rng::SimRng;

/// Output layout of the factored Q-network: `K` V2V power heads, `M` V2U
/// power heads (same order as the raw action), then the altitude head.
#[derive(Debug, Clone, PartialEq)]
pub struct QHeads {
    pub power_heads: usize,
    pub power_levels: usize,
    pub altitude_levels: usize,
}

impl QHeads {
    pub fn count(&self) -> usize {
        self.power_heads + 1
    }

    pub fn outputs(&self) -> usize {
        self.power_heads * self.power_levels + self.altitude_levels
    }

    /// `(offset, width)` of head `h`.
    pub fn span(&self, h: usize) -> (usize, usize) {
        if h < self.power_heads {
            (h * self.power_levels, self.power_levels)
        } else {
            (self.power_heads * self.power_levels, self.altitude_levels)
        }
    }

    fn argmax(&self, q: ArrayView1<f64>, h: usize) -> usize {
        let (off, w) = self.span(h);
        let mut best = 0;
        for i in 1..w {
            if q[off + i] > q[off + best] {
                best = i;
            }
        }
        best
    }
}

/// `cost[k, m]` = minus the reported-CSI SINR of V2V link `k` if it reused
/// channel `m`, with every transmitter at half the maximum power.
pub fn reference_sinr_cost(gains: &LinkGains, scenario: &NetworkScenario, params: &ChannelParams) -> Array2<f64> {
    let p = scenario.p_max() / 2.0;
    let noise = params.noise_power();
    Array2::from_shape_fn((scenario.k_links, scenario.m_links), |(k, m)| {
        -(p * gains.h_v_k_hat[k]) / (p * gains.h_v_mk_hat[[m, k]] + noise)
    })
}

/// One descent step on the squared double-Q error summed over heads and
/// averaged over the batch. `batch.actions` holds the chosen level per head.
pub fn ddqn_update(qnet: &mut DenseNet, opt: &mut Adam, target: &DenseNet, batch: &Batch, heads: &QHeads, hp: &AgentHyperparams) -> Result<f64> {
    let b = batch.len();
    let n_heads = heads.count();
    let online_next = qnet.predict(&batch.next_states)?;
    let target_next = target.predict(&batch.next_states)?;
    let tape = qnet.forward(&batch.states)?;
    let q = tape.output();
    let norm = (b * n_heads) as f64;
    let mut d = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for i in 0..b {
        let r = hp.reward_scale * batch.rewards[i];
        for h in 0..n_heads {
            let (off, _) = heads.span(h);
            let best = heads.argmax(online_next.row(i), h);
            let y = r + hp.discount * target_next[[i, off + best]];
            let taken = off + batch.actions[[i, h]] as usize;
            let diff = q[[i, taken]] - y;
            loss += diff * diff;
            d[[i, taken]] = 2.0 * diff / norm;
        }
    }
    let (mut g, _) = qnet.backward(&tape, &d)?;
    if hp.grad_clip > 0.0 {
        g.clip_norm(hp.grad_clip);
    }
    opt.step(qnet, &g, false);
    Ok(loss / norm)
}

#[derive(Debug, Clone)]
pub struct HDdqnAgent {
    qnet: DenseNet,
    target: DenseNet,
    opt: Adam,
    heads: QHeads,
    buffer: ReplayBuffer,
    hp: AgentHyperparams,
    rng: SimRng,
    m_links: usize,
    k_links: usize,
    stored: u64,
    horizon: u64,
    updates: u64,
}

impl HDdqnAgent {
    pub fn new(scenario: &NetworkScenario, hp: &AgentHyperparams, mut rng: SimRng, horizon: u64) -> Result<Self> {
        let heads = QHeads {
            power_heads: scenario.m_links + scenario.k_links,
            power_levels: hp.power_levels.len(),
            altitude_levels: hp.altitude_levels.len(),
        };
        let sizes = [vec![scenario.state_dim()], hp.hidden_sizes(), vec![heads.outputs()]].concat();
        let qnet = DenseNet::new(&sizes, Activation::Relu, Activation::Identity, 1.0, &mut rng)?;
        Ok(Self {
            opt: Adam::new(&qnet, hp.lr_critic),
            target: qnet.clone(),
            qnet,
            heads,
            buffer: ReplayBuffer::new(hp.buffer_capacity),
            hp: hp.clone(),
            rng,
            m_links: scenario.m_links,
            k_links: scenario.k_links,
            stored: 0,
            horizon,
            updates: 0,
        })
    }

    pub fn heads(&self) -> &QHeads {
        &self.heads
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn epsilon(&self) -> f64 {
        linear_decay(self.hp.epsilon_start, self.hp.epsilon_end, self.stored, self.horizon)
    }

    /// Raw action encoding the assignment and chosen levels; powers map back
    /// through the amender's affine law, so level fraction `f` becomes `2f − 1`.
    pub fn encode(&self, assignment: &[usize], levels: &[usize]) -> MdpAction {
        let (m, k) = (self.m_links, self.k_links);
        let mut raw = vec![-1.0; k * m];
        for (link, &ch) in assignment.iter().enumerate() {
            raw[link * m + ch] = 1.0;
        }
        for &l in &levels[..self.heads.power_heads] {
            raw.push(2.0 * self.hp.power_levels[l] - 1.0);
        }
        raw.push(self.hp.altitude_levels[levels[self.heads.power_heads]]);
        MdpAction(raw)
    }

    pub fn act(&mut self, env: &Environment, explore: bool) -> Result<(MdpAction, Vec<f64>)> {
        let cost = reference_sinr_cost(env.gains(), env.scenario(), &env.config().channel);
        let (assignment, _) = hungarian_assign(&cost)?;
        let state = env.state();
        let x = Array2::from_shape_vec((1, state.len()), state.values.clone()).expect("row vector");
        let q = self.qnet.predict(&x)?;
        let eps = if explore { self.epsilon() } else { 0.0 };
        let levels: Vec<usize> = (0..self.heads.count())
            .map(|h| {
                if eps > 0.0 && self.rng.random::<f64>() < eps {
                    self.rng.random_range(0..self.heads.span(h).1)
                } else {
                    self.heads.argmax(q.row(0), h)
                }
            })
            .collect();
        let action = self.encode(&assignment, &levels);
        Ok((action, levels.iter().map(|&l| l as f64).collect()))
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
        let loss = ddqn_update(&mut self.qnet, &mut self.opt, &self.target, &batch, &self.heads, &self.hp)?;
        self.target.soft_update_from(&self.qnet, self.hp.tau)?;
        self.updates += 1;
        Ok(Some(UpdateStats { critic_loss: loss, actor_objective: 0.0 }))
    }

    pub(crate) fn networks(&self) -> Vec<&DenseNet> {
        vec![&self.qnet, &self.target]
    }

    pub(crate) fn networks_mut(&mut self) -> Vec<&mut DenseNet> {
        vec![&mut self.qnet, &mut self.target]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::amend_action;
    use ndarray::Array1;
    use rand::SeedableRng;

    fn heads() -> QHeads {
        QHeads { power_heads: 2, power_levels: 3, altitude_levels: 2 }
    }

    #[test]
    fn spans_tile_the_output() {
        let h = heads();
        assert_eq!(h.outputs(), 8);
        assert_eq!(h.span(0), (0, 3));
        assert_eq!(h.span(1), (3, 3));
        assert_eq!(h.span(2), (6, 2));
    }

    fn fixed_batch(r: &mut SimRng) -> Batch {
        Batch {
            states: Array2::from_shape_simple_fn((16, 4), || r.random_range(-1.0..1.0)),
            actions: Array2::from_shape_fn((16, 3), |(i, h)| ((i + h) % if h < 2 { 3 } else { 2 }) as f64),
            rewards: Array1::from_shape_simple_fn(16, || r.random_range(-1.0..1.0)),
            next_states: Array2::from_shape_simple_fn((16, 4), || r.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn loss_decreases_on_a_fixed_batch() {
        let mut r = SimRng::seed_from_u64(3);
        let mut q = DenseNet::new(&[4, 32, 8], Activation::Relu, Activation::Identity, 1.0, &mut r).unwrap();
        let target = q.clone();
        let mut opt = Adam::new(&q, 1e-3);
        let batch = fixed_batch(&mut r);
        let hp = AgentHyperparams { reward_scale: 1.0, discount: 0.5, ..AgentHyperparams::toy() };
        let first = ddqn_update(&mut q, &mut opt, &target, &batch, &heads(), &hp).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = ddqn_update(&mut q, &mut opt, &target, &batch, &heads(), &hp).unwrap();
        }
        assert!(last < first * 0.5, "{first} -> {last}");
    }

    #[test]
    fn double_q_target_reduces_to_max_when_nets_agree() {
        let mut r = SimRng::seed_from_u64(4);
        let q = DenseNet::new(&[4, 8, 8], Activation::Relu, Activation::Identity, 1.0, &mut r).unwrap();
        let batch = fixed_batch(&mut r);
        let h = heads();
        let next = q.predict(&batch.next_states).unwrap();
        for i in 0..16 {
            for head in 0..3 {
                let (off, w) = h.span(head);
                let best = h.argmax(next.row(i), head);
                let max = (0..w).map(|j| next[[i, off + j]]).fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(next[[i, off + best]], max);
            }
        }
    }

    #[test]
    fn encoded_actions_amend_to_the_intended_decision() {
        let sc = NetworkScenario { m_links: 3, k_links: 2, ..Default::default() };
        let hp = AgentHyperparams::toy();
        let agent = HDdqnAgent::new(&sc, &hp, SimRng::seed_from_u64(0), 10).unwrap();
        let levels = vec![0, 3, 1, 2, 3, 4];
        let raw = agent.encode(&[2, 0], &levels);
        let a = amend_action(&raw, &sc);
        assert_eq!(a.channel_of, vec![2, 0]);
        let p = sc.p_max();
        let expect = |l: usize| hp.power_levels[l] * p;
        assert!((a.p_k[0] - expect(0)).abs() < 1e-12 && (a.p_k[1] - expect(3)).abs() < 1e-12);
        assert!((a.p_m[0] - expect(1)).abs() < 1e-12 && (a.p_m[2] - expect(3)).abs() < 1e-12);
        assert!((a.delta_h - 5.0).abs() < 1e-12);
    }
}
