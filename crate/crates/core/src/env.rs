//! The per-slot decision problem as an MDP.
//!
//! A slot runs: observe gains and queue → amend the raw action into a feasible
//! one → apply the altitude change → rates, outage and propulsion power →
//! reward → queue update → advance mobility.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, dbm_to_watts, ChannelParams, FadingState, LinkGains, LinkGeometry};
use crate::energy::{propulsion_power, PowerModelParams};
use crate::error::{Error, Result};
use crate::lyapunov::{queue_update, LyapunovConfig, VirtualQueue};
use crate::mobility::{adjust_altitude, AltitudeLimits, MobilityTrace, Point2, UavState, VehicleState};
use crate::rng::{self, SimRng};

/// Vehicle roles: which trace ids transmit on the V2U links and which form V2V pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pairing {
    pub v2u_tx: Vec<u32>,
    /// `(transmitter, receiver)` per V2V link.
    pub v2v: Vec<(u32, u32)>,
}

impl Pairing {
    /// Walks the trace ids in order handing out roles round-robin: a V2V pair,
    /// then a V2U transmitter, so every V2U vehicle drives next to a V2V pair.
    pub fn interleaved(ids: &[u32], m_links: usize, k_links: usize) -> Result<Self> {
        let needed = m_links + 2 * k_links;
        if ids.len() < needed {
            return Err(Error::Config(format!(
                "trace has {} vehicles but M={m_links}, K={k_links} needs {needed}",
                ids.len()
            )));
        }
        let mut it = ids.iter().copied();
        let mut v2u_tx = Vec::with_capacity(m_links);
        let mut v2v = Vec::with_capacity(k_links);
        for r in 0..m_links.max(k_links) {
            if r < k_links {
                let tx = it.next().expect("counted above");
                let rx = it.next().expect("counted above");
                v2v.push((tx, rx));
            }
            if r < m_links {
                v2u_tx.push(it.next().expect("counted above"));
            }
        }
        Ok(Self { v2u_tx, v2v })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkScenario {
    pub m_links: usize,
    pub k_links: usize,
    /// Slots per episode.
    pub slots: usize,
    /// Slot duration, s.
    pub slot_duration: f64,
    pub p_max_dbm: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub dh_max: f64,
    pub initial_altitude: f64,
    /// Constant UAV ground speed, m/s.
    pub uav_speed: f64,
    pub gamma_v_th_db: f64,
    pub pr_v_th: f64,
    /// Per-slot energy budget, J.
    pub e_th: f64,
    /// Penalty per V2V link whose outage estimate exceeds the tolerance.
    pub penalty: f64,
    /// Monte-Carlo samples per outage estimate.
    pub outage_samples: usize,
    /// Multiplier applied to rates (bit/s) inside the reward; 1e-6 expresses them in Mbit/s.
    pub rate_scale: f64,
    /// Explicit vehicle roles; derived from the trace when absent.
    pub pairing: Option<Pairing>,
}

impl Default for NetworkScenario {
    fn default() -> Self {
        Self {
            m_links: 10,
            k_links: 10,
            slots: 100,
            slot_duration: 1.0,
            p_max_dbm: 23.0,
            h_min: 50.0,
            h_max: 200.0,
            dh_max: 5.0,
            initial_altitude: 100.0,
            uav_speed: 50.0 / 3.6,
            gamma_v_th_db: 10.0,
            pr_v_th: 0.01,
            e_th: 120.0,
            penalty: 10.0,
            outage_samples: 500,
            rate_scale: 1e-6,
            pairing: None,
        }
    }
}

impl NetworkScenario {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: String| Err(Error::Config(format!("scenario.{field}: {msg}")));
        if self.m_links == 0 {
            return err("m_links", "must be at least 1".into());
        }
        if self.k_links > self.m_links {
            return err("k_links", format!("K={} exceeds M={}", self.k_links, self.m_links));
        }
        if self.slots == 0 {
            return err("slots", "must be at least 1".into());
        }
        if !(self.slot_duration > 0.0) {
            return err("slot_duration", format!("must be positive, got {}", self.slot_duration));
        }
        if !self.p_max_dbm.is_finite() {
            return err("p_max_dbm", "must be finite".into());
        }
        if !(self.h_min > 0.0 && self.h_min < self.h_max) {
            return err("h_min", format!("need 0 < h_min < h_max, got [{}, {}]", self.h_min, self.h_max));
        }
        if !(self.dh_max >= 0.0) {
            return err("dh_max", format!("must be non-negative, got {}", self.dh_max));
        }
        if !(self.initial_altitude >= self.h_min && self.initial_altitude <= self.h_max) {
            return err("initial_altitude", format!("{} outside [{}, {}]", self.initial_altitude, self.h_min, self.h_max));
        }
        if !(self.uav_speed >= 0.0) {
            return err("uav_speed", format!("must be non-negative, got {}", self.uav_speed));
        }
        if !(self.pr_v_th > 0.0 && self.pr_v_th < 1.0) {
            return err("pr_v_th", format!("must lie in (0, 1), got {}", self.pr_v_th));
        }
        if !(self.e_th > 0.0) {
            return err("e_th", format!("must be positive, got {}", self.e_th));
        }
        if !(self.penalty >= 0.0) {
            return err("penalty", format!("must be non-negative, got {}", self.penalty));
        }
        if self.outage_samples == 0 {
            return err("outage_samples", "must be at least 1".into());
        }
        if !(self.rate_scale > 0.0) {
            return err("rate_scale", format!("must be positive, got {}", self.rate_scale));
        }
        if let Some(p) = &self.pairing {
            if p.v2u_tx.len() != self.m_links || p.v2v.len() != self.k_links {
                return err("pairing", format!("lists {} V2U and {} V2V links, scenario has M={}, K={}", p.v2u_tx.len(), p.v2v.len(), self.m_links, self.k_links));
            }
        }
        Ok(())
    }

    pub fn p_max(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }

    pub fn gamma_v_th(&self) -> f64 {
        channel::db_to_linear(self.gamma_v_th_db)
    }

    pub fn altitude_limits(&self) -> AltitudeLimits {
        AltitudeLimits { min: self.h_min, max: self.h_max, max_step: self.dh_max }
    }

    pub fn action_dim(&self) -> usize {
        action_dim(self.m_links, self.k_links)
    }

    pub fn state_dim(&self) -> usize {
        state_dim(self.m_links, self.k_links)
    }
}

/// `K·M` channel scores, `K` V2V powers, `M` V2U powers, one altitude step.
pub fn action_dim(m: usize, k: usize) -> usize {
    k * m + k + m + 1
}

/// `M + K` UAV-facing gains, `M·K + K` V2V gains and the queue.
pub fn state_dim(m: usize, k: usize) -> usize {
    m * k + 2 * k + m + 1
}

/// Raw policy output with every entry in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpAction(pub Vec<f64>);

impl MdpAction {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn uniform<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self((0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleAction {
    /// Channel (V2U link index) reused by each V2V link.
    pub channel_of: Vec<usize>,
    pub p_m: Vec<f64>,
    pub p_k: Vec<f64>,
    /// Altitude step, m.
    pub delta_h: f64,
    m_links: usize,
}

impl FeasibleAction {
    pub fn new(channel_of: Vec<usize>, p_m: Vec<f64>, p_k: Vec<f64>, delta_h: f64) -> Self {
        let m_links = p_m.len();
        Self { channel_of, p_m, p_k, delta_h, m_links }
    }

    pub fn x(&self, k: usize, m: usize) -> bool {
        self.channel_of[k] == m
    }

    /// `K × M` binary allocation matrix.
    pub fn matrix(&self) -> Array2<u8> {
        let mut x = Array2::zeros((self.channel_of.len(), self.m_links));
        for (k, &m) in self.channel_of.iter().enumerate() {
            x[[k, m]] = 1;
        }
        x
    }

    /// V2V links sharing channel `m`.
    pub fn sharers_of(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.channel_of.iter().enumerate().filter(move |(_, &c)| c == m).map(|(k, _)| k)
    }

    /// Channels used by V2V link `k` (exactly one for amended actions).
    pub fn channels_of(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.channel_of[k])
    }

    /// Lists every violated constraint among binary allocation, power boxes,
    /// altitude step, one channel per V2V link and one V2V link per channel.
    pub fn violations(&self, scenario: &NetworkScenario) -> Vec<String> {
        let mut out = Vec::new();
        let x = self.matrix();
        let p_max = scenario.p_max();
        if x.iter().any(|&v| v > 1) {
            out.push("non-binary allocation".to_string());
        }
        for (k, row) in x.rows().into_iter().enumerate() {
            if row.iter().map(|&v| v as usize).sum::<usize>() != 1 {
                out.push(format!("V2V link {k} does not hold exactly one channel"));
            }
        }
        for (m, col) in x.columns().into_iter().enumerate() {
            if col.iter().map(|&v| v as usize).sum::<usize>() > 1 {
                out.push(format!("channel {m} shared by more than one V2V link"));
            }
        }
        for (i, &p) in self.p_m.iter().enumerate() {
            if !(0.0..=p_max).contains(&p) {
                out.push(format!("p_m[{i}] = {p} outside [0, {p_max}]"));
            }
        }
        for (i, &p) in self.p_k.iter().enumerate() {
            if !(0.0..=p_max).contains(&p) {
                out.push(format!("p_k[{i}] = {p} outside [0, {p_max}]"));
            }
        }
        if self.delta_h.abs() > scenario.dh_max {
            out.push(format!("altitude step {} exceeds {}", self.delta_h, scenario.dh_max));
        }
        out
    }
}

/// Projects a raw action onto the feasible set.
///
/// Powers map affinely from `[-1, 1]` to `[0, p_max]` and the altitude step
/// scales by `dh_max`. Channels are handed out greedily: V2V links are visited
/// in descending order of their best score and each takes its highest-scoring
/// channel that is still free. Ties break toward the lower index.
pub fn amend_action(raw: &MdpAction, scenario: &NetworkScenario) -> FeasibleAction {
    let (m, k) = (scenario.m_links, scenario.k_links);
    debug_assert_eq!(raw.len(), action_dim(m, k));
    let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
    let a: Vec<f64> = raw.0.iter().copied().map(clamp).collect();
    let p_max = scenario.p_max();
    let power = |v: f64| ((v + 1.0) / 2.0 * p_max).clamp(0.0, p_max);

    let scores = &a[..k * m];
    let p_k = a[k * m..k * m + k].iter().map(|&v| power(v)).collect();
    let p_m = a[k * m + k..k * m + k + m].iter().map(|&v| power(v)).collect();
    let delta_h = a[k * m + k + m] * scenario.dh_max;

    let channel_of = greedy_assignment(scores, k, m);
    FeasibleAction { channel_of, p_m, p_k, delta_h, m_links: m }
}

fn greedy_assignment(scores: &[f64], k: usize, m: usize) -> Vec<usize> {
    let row = |i: usize| &scores[i * m..(i + 1) * m];
    let best = |i: usize| row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| best(b).total_cmp(&best(a)).then(a.cmp(&b)));
    let mut taken = vec![false; m];
    let mut channel_of = vec![0; k];
    for link in order {
        let mut pick = None;
        for (ch, &s) in row(link).iter().enumerate() {
            if taken[ch] {
                continue;
            }
            match pick {
                Some((_, best_s)) if s <= best_s => {}
                _ => pick = Some((ch, s)),
            }
        }
        let (ch, _) = pick.expect("K <= M leaves a free channel");
        taken[ch] = true;
        channel_of[link] = ch;
    }
    channel_of
}

fn sample_gain<R: Rng + ?Sized>(h_hat: f64, pl_linear: f64, rho: f64, rng: &mut R) -> f64 {
    if rho == 1.0 {
        return h_hat;
    }
    let magnitude = (h_hat * pl_linear).sqrt();
    let g = rng::complex_normal(rng, 1.0 - rho * rho) + rho * magnitude;
    g.norm_sqr() / pl_linear
}

/// Monte-Carlo estimate of `Pr{γ^V_k < γ_th}` over redraws of the CSI aging
/// discrepancy, with the reported fading, path loss and action held fixed.
pub fn estimate_outage<R: Rng + ?Sized>(
    k: usize,
    gains: &LinkGains,
    action: &FeasibleAction,
    params: &ChannelParams,
    gamma_th: f64,
    n_samples: usize,
    rng: &mut R,
) -> f64 {
    let noise = params.noise_power();
    let deterministic = gains.rho_v_k[k] == 1.0 && action.channels_of(k).all(|m| gains.rho_v_mk[[m, k]] == 1.0);
    let sample = |rng: &mut R| {
        let desired = action.p_k[k] * sample_gain(gains.h_v_k_hat[k], gains.pl_v_k_linear[k], gains.rho_v_k[k], rng);
        let interference: f64 = action
            .channels_of(k)
            .map(|m| {
                action.p_m[m]
                    * sample_gain(gains.h_v_mk_hat[[m, k]], gains.pl_v_mk_linear[[m, k]], gains.rho_v_mk[[m, k]], rng)
            })
            .sum();
        desired / (interference + noise) < gamma_th
    };
    if deterministic {
        return if sample(rng) { 1.0 } else { 0.0 };
    }
    let n = n_samples.max(1);
    let hits = (0..n).filter(|_| sample(rng)).count();
    hits as f64 / n as f64
}

/// Running per-feature standardisation of log-gains, frozen after `warmup` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct StateNormalizer {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    warmup: u64,
}

impl StateNormalizer {
    pub fn new(features: usize, warmup: u64) -> Self {
        Self { count: 0, mean: vec![0.0; features], m2: vec![0.0; features], warmup }
    }

    pub fn is_frozen(&self) -> bool {
        self.count >= self.warmup
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    fn update(&mut self, x: &[f64]) {
        if self.is_frozen() {
            return;
        }
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *mean;
            *mean += d / n;
            *m2 += d * (v - *mean);
        }
    }

    fn apply(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            let std = if self.count >= 2 { (self.m2[i] / (self.count - 1) as f64).sqrt().max(1e-3) } else { 1.0 };
            let mean = if self.count >= 1 { self.mean[i] } else { 0.0 };
            *v = (*v - mean) / std;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpState {
    /// Normalised observation fed to the networks.
    pub values: Vec<f64>,
    /// `log10` gains followed by the raw queue backlog.
    pub raw: Vec<f64>,
}

impl MdpState {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Observation vector: `h^U_m`, `h^U_k`, `h^V_{m,k}` (m-major), `h^V_k`, then
/// `Q / E_th`. With `observe_aged = false` the V2V entries come from the
/// reported (pre-delay) fading instead of the aged one.
pub fn build_state(
    gains: &LinkGains,
    queue: &VirtualQueue,
    scenario: &NetworkScenario,
    observe_aged: bool,
    normalizer: &mut StateNormalizer,
) -> MdpState {
    let (h_v_k, h_v_mk) = if observe_aged { (&gains.h_v_k, &gains.h_v_mk) } else { (&gains.h_v_k_hat, &gains.h_v_mk_hat) };
    let mut logs = Vec::with_capacity(scenario.state_dim());
    logs.extend(gains.h_u_m.iter().map(|h| h.log10()));
    logs.extend(gains.h_u_k.iter().map(|h| h.log10()));
    logs.extend(h_v_mk.iter().map(|h| h.log10()));
    logs.extend(h_v_k.iter().map(|h| h.log10()));
    normalizer.update(&logs);
    let mut values = logs.clone();
    normalizer.apply(&mut values);
    values.push(queue.q / queue.e_threshold);
    let mut raw = logs;
    raw.push(queue.q);
    MdpState { values, raw }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub reward: f64,
    /// Mean V2U rate, bit/s.
    pub mean_v2u_rate: f64,
    /// `V · rate_scale · mean_rate`.
    pub rate_term: f64,
    /// `Q (P Δ − E_th)`.
    pub queue_term: f64,
    pub outage_violations: usize,
    pub penalty_applied: f64,
}

impl RewardBreakdown {
    pub fn recomposed(&self) -> f64 {
        self.rate_term - self.queue_term - self.penalty_applied
    }
}

/// Per-slot diagnostics beyond the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotInfo {
    pub slot: usize,
    pub action: FeasibleAction,
    pub v2u_rates: Vec<f64>,
    pub v2v_sinr: Vec<f64>,
    pub outage: Vec<f64>,
    pub power: f64,
    /// `P Δ`, J.
    pub energy: f64,
    pub queue_before: f64,
    pub queue_after: f64,
    pub altitude: f64,
    pub v_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: MdpState,
    pub reward: RewardBreakdown,
    pub info: SlotInfo,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub scenario: NetworkScenario,
    pub channel: ChannelParams,
    pub energy: PowerModelParams,
    pub lyapunov: LyapunovConfig,
    /// Floor on the per-link relative speed used for CSI aging, m/s.
    pub s_rel_floor: f64,
    /// Observations used to fit the state standardisation before it freezes.
    pub normalizer_warmup: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            scenario: NetworkScenario::default(),
            channel: ChannelParams::default(),
            energy: PowerModelParams::default(),
            lyapunov: LyapunovConfig::default(),
            s_rel_floor: 1.5,
            normalizer_warmup: 1000,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.channel.validate()?;
        self.energy.validate()?;
        self.lyapunov.validate()?;
        if !(self.s_rel_floor >= 0.0) {
            return Err(Error::Config(format!("s_rel_floor must be non-negative, got {}", self.s_rel_floor)));
        }
        Ok(())
    }
}

/// One simulated world: trace, UAV, queue, fading and the seeded noise source.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    trace: Arc<MobilityTrace>,
    pairing: Pairing,
    v2u_idx: Vec<u32>,
    observe_aged: bool,
    rng: SimRng,
    normalizer: StateNormalizer,
    slot: usize,
    uav: UavState,
    queue: VirtualQueue,
    geometry: LinkGeometry,
    fading: FadingState,
    gains: LinkGains,
    state: MdpState,
}

impl Environment {
    pub fn new(cfg: EnvConfig, trace: Arc<MobilityTrace>, seed: u64, observe_aged: bool) -> Result<Self> {
        cfg.validate()?;
        let sc = &cfg.scenario;
        let pairing = match &sc.pairing {
            Some(p) => p.clone(),
            None => Pairing::interleaved(&trace.ids(), sc.m_links, sc.k_links)?,
        };
        for id in pairing.v2u_tx.iter().chain(pairing.v2v.iter().flat_map(|(a, b)| [a, b])) {
            if trace.vehicle(0, *id).is_none() {
                return Err(Error::Config(format!("pairing references vehicle {id} absent from the trace")));
            }
        }
        let normalizer = StateNormalizer::new(sc.state_dim() - 1, cfg.normalizer_warmup);
        let queue = VirtualQueue::new(sc.e_th, sc.slot_duration);
        let v2u_idx = pairing.v2u_tx.clone();
        let mut rng = rng::stream(seed, rng::ENV_STREAM);
        let uav = Self::initial_uav(&cfg, &trace, &v2u_idx);
        let (geometry, fading, gains) = Self::draw_slot(&cfg, &trace, &pairing, &uav, 0, &mut rng)?;
        let mut env = Self {
            cfg,
            trace,
            pairing,
            v2u_idx,
            observe_aged,
            rng,
            normalizer,
            slot: 0,
            uav,
            queue,
            geometry,
            fading,
            gains,
            state: MdpState { values: Vec::new(), raw: Vec::new() },
        };
        env.state = env.observe();
        Ok(env)
    }

    fn initial_uav(cfg: &EnvConfig, trace: &MobilityTrace, v2u: &[u32]) -> UavState {
        let c = channel::centroid(v2u.iter().filter_map(|id| trace.vehicle(0, *id)).map(|v| &v.position));
        UavState {
            horizontal_position: Point2::new(c.x, c.y),
            altitude: cfg.scenario.initial_altitude,
            velocity: [cfg.scenario.uav_speed, 0.0, 0.0],
        }
    }

    fn roles<'a>(
        trace: &'a MobilityTrace,
        pairing: &Pairing,
        slot: usize,
    ) -> (Vec<&'a VehicleState>, Vec<(&'a VehicleState, &'a VehicleState)>) {
        let get = |id: u32| trace.vehicle(slot, id).expect("pairing validated against the trace");
        let v2u = pairing.v2u_tx.iter().map(|&id| get(id)).collect();
        let v2v = pairing.v2v.iter().map(|&(a, b)| (get(a), get(b))).collect();
        (v2u, v2v)
    }

    fn draw_slot(
        cfg: &EnvConfig,
        trace: &MobilityTrace,
        pairing: &Pairing,
        uav: &UavState,
        slot: usize,
        rng: &mut SimRng,
    ) -> Result<(LinkGeometry, FadingState, LinkGains)> {
        let (v2u, v2v) = Self::roles(trace, pairing, slot);
        let geometry = LinkGeometry::resolve(uav, &v2u, &v2v, &cfg.channel, cfg.s_rel_floor)?;
        let fading = FadingState::draw(&geometry, rng);
        let gains = channel::assemble_gains(&geometry, &fading)?;
        Ok((geometry, fading, gains))
    }

    fn observe(&mut self) -> MdpState {
        build_state(&self.gains, &self.queue, &self.cfg.scenario, self.observe_aged, &mut self.normalizer)
    }

    /// Starts a new episode: slot 0 of the trace, initial altitude, empty queue.
    /// The noise source and the state normaliser carry over between episodes.
    pub fn reset(&mut self) -> Result<&MdpState> {
        self.slot = 0;
        self.queue.reset();
        self.uav = Self::initial_uav(&self.cfg, &self.trace, &self.v2u_idx);
        let (g, f, h) = Self::draw_slot(&self.cfg, &self.trace, &self.pairing, &self.uav, 0, &mut self.rng)?;
        self.geometry = g;
        self.fading = f;
        self.gains = h;
        self.state = self.observe();
        Ok(&self.state)
    }

    pub fn state(&self) -> &MdpState {
        &self.state
    }

    /// Gains observed at the start of the current slot.
    pub fn gains(&self) -> &LinkGains {
        &self.gains
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &NetworkScenario {
        &self.cfg.scenario
    }

    pub fn uav(&self) -> &UavState {
        &self.uav
    }

    pub fn queue(&self) -> &VirtualQueue {
        &self.queue
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn observe_aged(&self) -> bool {
        self.observe_aged
    }

    pub fn pairing(&self) -> &Pairing {
        &self.pairing
    }

    pub fn step(&mut self, raw: &MdpAction) -> Result<StepOutcome> {
        let sc = &self.cfg.scenario;
        if self.slot >= sc.slots {
            return Err(Error::EpisodeExhausted(sc.slots));
        }
        if raw.len() != sc.action_dim() {
            return Err(Error::InvalidArgument(format!("action has {} entries, expected {}", raw.len(), sc.action_dim())));
        }
        let action = amend_action(raw, sc);

        let adjusted = adjust_altitude(&self.uav, action.delta_h, sc.slot_duration, &sc.altitude_limits())?;
        let (v2u, v2v) = Self::roles(&self.trace, &self.pairing, self.slot);
        let v2v_tx: Vec<_> = v2v.iter().map(|(tx, _)| *tx).collect();
        let geometry = self.geometry.with_uav(&adjusted, &v2u, &v2v_tx, &self.cfg.channel)?;
        let gains = channel::assemble_gains(&geometry, &self.fading)?;

        let params = &self.cfg.channel;
        let v2u_rates: Vec<f64> = (0..sc.m_links)
            .map(|m| channel::v2u_rate(channel::v2u_sinr(m, &gains, &action, params), params))
            .collect();
        let v2v_sinr: Vec<f64> = (0..sc.k_links).map(|k| channel::v2v_sinr(k, &gains, &action, params)).collect();
        let gamma_th = sc.gamma_v_th();
        let outage: Vec<f64> = (0..sc.k_links)
            .map(|k| estimate_outage(k, &gains, &action, params, gamma_th, sc.outage_samples, &mut self.rng))
            .collect();
        let violations = outage.iter().filter(|&&p| p > sc.pr_v_th).count();

        let v_z = adjusted.velocity[2];
        let power = propulsion_power([sc.uav_speed, 0.0, v_z], &self.cfg.energy);
        let mean_rate = v2u_rates.iter().sum::<f64>() / sc.m_links as f64;
        let rate_term = self.cfg.lyapunov.v_weight * sc.rate_scale * mean_rate;
        let queue_term = self.queue.q * self.queue.excess(power);
        let penalty_applied = violations as f64 * sc.penalty;
        let reward = RewardBreakdown {
            reward: rate_term - queue_term - penalty_applied,
            mean_v2u_rate: mean_rate,
            rate_term,
            queue_term,
            outage_violations: violations,
            penalty_applied,
        };

        let queue_before = self.queue.q;
        self.queue = queue_update(&self.queue, power);
        let info = SlotInfo {
            slot: self.slot,
            action,
            v2u_rates,
            v2v_sinr,
            outage,
            power,
            energy: power * sc.slot_duration,
            queue_before,
            queue_after: self.queue.q,
            altitude: adjusted.altitude,
            v_z,
        };

        let mut uav = adjusted;
        uav.horizontal_position.x += sc.uav_speed * sc.slot_duration;
        uav.velocity[0] = sc.uav_speed;
        self.uav = uav;
        self.slot += 1;
        let done = self.slot >= sc.slots;

        let (g, f, h) = Self::draw_slot(&self.cfg, &self.trace, &self.pairing, &self.uav, self.slot, &mut self.rng)?;
        self.geometry = g;
        self.fading = f;
        self.gains = h;
        self.state = self.observe();

        Ok(StepOutcome { next_state: self.state.clone(), reward, info, done })
    }
}
