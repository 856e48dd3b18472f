//! Noise schedule and the conditional reverse sampler used as a policy.
//!
//! Steps are indexed `1..=I` as in the usual DDPM notation. The sampler starts
//! from `π_I ~ N(0, I)`, subtracts the denoiser's noise estimate at each step
//! and squashes the final `π_0` through `tanh`. The whole chain is
//! differentiable with the Gaussian draws held fixed.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;

use crate::env::{MdpAction, MdpState};
use crate::error::{Error, Result};
use crate::neural::{DenseNet, Gradients, Tape};
use crate::rng::normal;

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// `β_i`, index `i − 1`.
    pub beta: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_bar: Vec<f64>,
    /// Posterior variances `β̄_i`; `β̄_1 = 0`.
    pub beta_bar: Vec<f64>,
}

pub fn build_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<DiffusionSchedule> {
    if steps == 0 {
        return Err(Error::InvalidArgument("diffusion needs at least one step".into()));
    }
    if !(beta_min > 0.0 && beta_min < beta_max && beta_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 < beta_min < beta_max, got {beta_min}, {beta_max}")));
    }
    let n = steps as f64;
    let beta: Vec<f64> = (1..=steps)
        .map(|i| {
            let e = beta_min / n + (2.0 * i as f64 - 1.0) / (2.0 * n * n) * (beta_max - beta_min);
            -(-e).exp_m1()
        })
        .collect();
    let phi: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut phi_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for p in &phi {
        acc *= p;
        phi_bar.push(acc);
    }
    let beta_bar = (0..steps)
        .map(|i| {
            let prev = if i == 0 { 1.0 } else { phi_bar[i - 1] };
            (1.0 - prev) / (1.0 - phi_bar[i]) * beta[i]
        })
        .collect();
    Ok(DiffusionSchedule { steps, beta_min, beta_max, beta, phi, phi_bar, beta_bar })
}

impl DiffusionSchedule {
    fn idx(&self, i: usize) -> usize {
        assert!((1..=self.steps).contains(&i), "step {i} outside 1..={}", self.steps);
        i - 1
    }

    /// Coefficient of the noise estimate inside the posterior mean.
    fn eps_coef(&self, i: usize) -> f64 {
        let j = self.idx(i);
        self.beta[j] / (1.0 - self.phi_bar[j]).sqrt()
    }
}

/// `π_i = √φ̄_i π_0 + √(1 − φ̄_i) ε`.
pub fn forward_marginal(pi0: &[f64], i: usize, schedule: &DiffusionSchedule, noise: &[f64]) -> Vec<f64> {
    let pb = schedule.phi_bar[schedule.idx(i)];
    let (a, b) = (pb.sqrt(), (1.0 - pb).sqrt());
    pi0.iter().zip(noise).map(|(p, e)| a * p + b * e).collect()
}

/// One forward transition `π_i = √φ_i π_{i−1} + √β_i ε`.
pub fn forward_step(pi_prev: &[f64], i: usize, schedule: &DiffusionSchedule, noise: &[f64]) -> Vec<f64> {
    let j = schedule.idx(i);
    let (a, b) = (schedule.phi[j].sqrt(), schedule.beta[j].sqrt());
    pi_prev.iter().zip(noise).map(|(p, e)| a * p + b * e).collect()
}

/// `μ = (π_i − β_i/√(1 − φ̄_i) · ε̂) / √φ_i`.
pub fn posterior_mean(pi_i: &[f64], eps_hat: &[f64], i: usize, schedule: &DiffusionSchedule) -> Vec<f64> {
    let c = schedule.eps_coef(i);
    let s = schedule.phi[schedule.idx(i)].sqrt();
    pi_i.iter().zip(eps_hat).map(|(p, e)| (p - c * e) / s).collect()
}

/// Width of the denoiser input: noisy action, one-hot step, state.
pub fn denoiser_input_dim(action_dim: usize, steps: usize, state_dim: usize) -> usize {
    action_dim + steps + state_dim
}

/// Rows `[π_i, onehot(i), state]` for a batch.
pub fn denoiser_input(pi_i: ArrayView2<f64>, i: usize, steps: usize, states: ArrayView2<f64>) -> Array2<f64> {
    let (b, a) = pi_i.dim();
    let d = states.ncols();
    let mut x = Array2::zeros((b, a + steps + d));
    x.slice_mut(s![.., ..a]).assign(&pi_i);
    x.column_mut(a + i - 1).fill(1.0);
    x.slice_mut(s![.., a + steps..]).assign(&states);
    x
}

/// Recorded reverse chain for one batch.
#[derive(Debug, Clone)]
pub struct ChainTape {
    /// Denoiser tape per step, index `i − 1`.
    tapes: Vec<Tape>,
    actions: Array2<f64>,
    action_dim: usize,
}

impl ChainTape {
    /// Squashed actions, one row per state.
    pub fn actions(&self) -> &Array2<f64> {
        &self.actions
    }
}

/// Runs the reverse chain for a batch of states.
///
/// `evaluate` zeroes the intermediate noise so the result depends on the rng
/// only through the initial draw `π_I`.
pub fn sample_chain<R: Rng + ?Sized>(
    denoiser: &DenseNet,
    states: ArrayView2<f64>,
    schedule: &DiffusionSchedule,
    action_dim: usize,
    evaluate: bool,
    rng: &mut R,
) -> Result<ChainTape> {
    let expected = denoiser_input_dim(action_dim, schedule.steps, states.ncols());
    if denoiser.input_dim() != expected || denoiser.output_dim() != action_dim {
        return Err(Error::InvalidArgument(format!(
            "denoiser is {}→{}, chain needs {expected}→{action_dim}",
            denoiser.input_dim(),
            denoiser.output_dim()
        )));
    }
    let b = states.nrows();
    let mut pi = Array2::from_shape_simple_fn((b, action_dim), || normal(rng));
    let mut tapes = Vec::with_capacity(schedule.steps);
    for i in (1..=schedule.steps).rev() {
        let x = denoiser_input(pi.view(), i, schedule.steps, states);
        let tape = denoiser.forward(&x)?;
        let j = i - 1;
        let c = schedule.eps_coef(i);
        let inv = 1.0 / schedule.phi[j].sqrt();
        let mut next = (&pi - &(tape.output() * c)) * inv;
        let sigma = schedule.beta_bar[j].sqrt();
        if !evaluate && sigma > 0.0 {
            next.mapv_inplace(|v| v + sigma * normal(rng));
        }
        tapes.push(tape);
        pi = next;
    }
    tapes.reverse();
    pi.mapv_inplace(f64::tanh);
    Ok(ChainTape { tapes, actions: pi, action_dim })
}

/// Back-propagates `∂L/∂action` through the squash and every denoising step,
/// accumulating the denoiser's parameter gradients.
pub fn chain_backward(denoiser: &DenseNet, tape: &ChainTape, d_actions: &Array2<f64>, schedule: &DiffusionSchedule) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(denoiser);
    let mut d_pi = d_actions * &tape.actions.mapv(|a| 1.0 - a * a);
    for i in 1..=schedule.steps {
        let j = i - 1;
        let inv = 1.0 / schedule.phi[j].sqrt();
        let d_mu = d_pi;
        let d_eps = &d_mu * (-schedule.eps_coef(i) * inv);
        let (g, d_in) = denoiser.backward(&tape.tapes[j], &d_eps)?;
        grads.add_assign(&g);
        d_pi = &d_mu * inv + &d_in.slice(s![.., ..tape.action_dim]);
    }
    Ok(grads)
}

/// Samples one action for one state.
pub fn sample_action<R: Rng + ?Sized>(
    denoiser: &DenseNet,
    state: &MdpState,
    schedule: &DiffusionSchedule,
    action_dim: usize,
    evaluate: bool,
    rng: &mut R,
) -> Result<MdpAction> {
    let s = ArrayView2::from_shape((1, state.len()), &state.values).expect("contiguous state");
    let tape = sample_chain(denoiser, s, schedule, action_dim, evaluate, rng)?;
    Ok(MdpAction(tape.actions.row(0).to_vec()))
}
