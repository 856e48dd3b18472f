//! TOML experiment configuration.
//!
//! Every block is optional except `[agent]`; missing fields take the simulation
//! defaults. Relative paths resolve against the directory of the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use aerolink_core::mobility::{generate_platoon, load_trace, PlatoonConfig};
use aerolink_core::{AgentHyperparams, AgentKind, ChannelParams, EnvConfig, LyapunovConfig, MobilityTrace, NetworkScenario, PowerModelParams};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Full-scale networks and learning rates.
    #[default]
    Full,
    /// Small networks tuned for the desk-scale toy scenario.
    Toy,
}

impl Preset {
    pub fn hyperparams(self) -> AgentHyperparams {
        match self {
            Preset::Full => AgentHyperparams::default(),
            Preset::Toy => AgentHyperparams::toy(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    kinds: Vec<AgentKind>,
    #[serde(default)]
    preset: Preset,
    /// Overrides applied on top of the preset.
    #[serde(default)]
    hyperparams: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityBlock {
    /// CSV trace with columns `slot,vehicle_id,x_m,y_m,speed_mps`.
    pub trace: Option<PathBuf>,
    /// Synthetic platoon used when no trace is given.
    #[serde(default)]
    pub platoon: PlatoonConfig,
    /// Seed of the synthetic platoon; shared by every run.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentBlock {
    /// m/s
    pub s_rel_floor: f64,
    pub normalizer_warmup: u64,
}

impl Default for EnvironmentBlock {
    fn default() -> Self {
        let d = EnvConfig::default();
        Self { s_rel_floor: d.s_rel_floor, normalizer_warmup: d.normalizer_warmup }
    }
}

/// Lists of values to sweep. Absent dimensions stay at the base config.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub k_links: Option<Vec<usize>>,
    pub v_weight: Option<Vec<f64>>,
    /// Seconds.
    pub t_delay: Option<Vec<f64>>,
    pub diffusion_steps: Option<Vec<usize>>,
}

impl SweepBlock {
    /// Names of the dimensions the config lists, in fixed order.
    pub fn dimensions(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.k_links.is_some() {
            out.push("k_links");
        }
        if self.v_weight.is_some() {
            out.push("v_weight");
        }
        if self.t_delay.is_some() {
            out.push("t_delay");
        }
        if self.diffusion_steps.is_some() {
            out.push("diffusion_steps");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    scenario: NetworkScenario,
    #[serde(default)]
    channel: ChannelParams,
    #[serde(default)]
    energy: PowerModelParams,
    #[serde(default)]
    lyapunov: LyapunovConfig,
    #[serde(default)]
    environment: EnvironmentBlock,
    agent: RawAgent,
    #[serde(default)]
    mobility: MobilityBlock,
    #[serde(default)]
    sweep: SweepBlock,
    seeds: Vec<u64>,
    episodes: usize,
    #[serde(default = "default_eval_episodes")]
    eval_episodes: usize,
    output_dir: PathBuf,
    #[serde(default)]
    record_timing: bool,
}

fn default_eval_episodes() -> usize {
    1
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agents: Vec<AgentKind>,
    pub preset: Preset,
    pub hyperparams: AgentHyperparams,
    pub mobility: MobilityBlock,
    pub sweep: SweepBlock,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub eval_episodes: usize,
    pub output_dir: PathBuf,
    pub record_timing: bool,
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{name}: {msg}"))
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses and validates `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

        let mut merged = toml::Table::try_from(raw.agent.preset.hyperparams()).map_err(|e| field("agent.hyperparams", e))?;
        merged.extend(raw.agent.hyperparams);
        let hyperparams: AgentHyperparams =
            toml::Value::Table(merged).try_into().map_err(|e| field("agent.hyperparams", e))?;

        let mut mobility = raw.mobility;
        mobility.trace = mobility.trace.map(|p| if p.is_absolute() { p } else { base.join(p) });
        let output_dir = if raw.output_dir.is_absolute() { raw.output_dir } else { base.join(raw.output_dir) };

        let cfg = Self {
            env: EnvConfig {
                scenario: raw.scenario,
                channel: raw.channel,
                energy: raw.energy,
                lyapunov: raw.lyapunov,
                s_rel_floor: raw.environment.s_rel_floor,
                normalizer_warmup: raw.environment.normalizer_warmup,
            },
            agents: raw.agent.kinds,
            preset: raw.agent.preset,
            hyperparams,
            mobility,
            sweep: raw.sweep,
            seeds: raw.seeds,
            episodes: raw.episodes,
            eval_episodes: raw.eval_episodes,
            output_dir,
            record_timing: raw.record_timing,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.env.s_rel_floor >= 0.0 && self.env.s_rel_floor.is_finite()) {
            return Err(field("environment.s_rel_floor", format!("must be non-negative, got {}", self.env.s_rel_floor)));
        }
        self.env.validate()?;
        self.hyperparams.validate()?;
        if self.agents.is_empty() {
            return Err(field("agent.kinds", "list is empty"));
        }
        let unique: BTreeSet<_> = self.agents.iter().collect();
        if unique.len() != self.agents.len() {
            return Err(field("agent.kinds", "lists an agent twice"));
        }
        if self.seeds.is_empty() {
            return Err(field("seeds", "list is empty"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(field("seeds", "contains duplicates"));
        }
        if self.episodes == 0 {
            return Err(field("episodes", "must be at least 1"));
        }
        if let Some(trace) = &self.mobility.trace {
            if !trace.is_file() {
                return Err(field("mobility.trace", format!("{} does not exist", trace.display())));
            }
        }
        self.validate_sweep()?;
        for point in self.sweep_points() {
            let env = self.env_for(&point);
            env.validate().map_err(|e| field(&format!("sweep point {}", point.label()), e))?;
        }
        Ok(())
    }

    fn validate_sweep(&self) -> Result<()> {
        let s = &self.sweep;
        let lens = [
            ("sweep.k_links", s.k_links.as_ref().map(Vec::len)),
            ("sweep.v_weight", s.v_weight.as_ref().map(Vec::len)),
            ("sweep.t_delay", s.t_delay.as_ref().map(Vec::len)),
            ("sweep.diffusion_steps", s.diffusion_steps.as_ref().map(Vec::len)),
        ];
        for (name, len) in lens {
            if len == Some(0) {
                return Err(field(name, "list is empty"));
            }
        }
        if let Some(ks) = &s.k_links {
            if let Some(&k) = ks.iter().find(|&&k| k > self.env.scenario.m_links) {
                return Err(field("sweep.k_links", format!("K={k} exceeds M={}", self.env.scenario.m_links)));
            }
        }
        if let Some(vs) = &s.v_weight {
            if let Some(v) = vs.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(field("sweep.v_weight", format!("must be non-negative, got {v}")));
            }
        }
        if let Some(ts) = &s.t_delay {
            if let Some(t) = ts.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
                return Err(field("sweep.t_delay", format!("must be non-negative seconds, got {t}")));
            }
        }
        if let Some(is) = &s.diffusion_steps {
            if is.contains(&0) {
                return Err(field("sweep.diffusion_steps", "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Cartesian product of the sweep lists, K outermost.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let s = &self.sweep;
        let ks = s.k_links.clone().unwrap_or_else(|| vec![self.env.scenario.k_links]);
        let vs = s.v_weight.clone().unwrap_or_else(|| vec![self.env.lyapunov.v_weight]);
        let ts = s.t_delay.clone().unwrap_or_else(|| vec![self.env.channel.t_delay]);
        let is = s.diffusion_steps.clone().unwrap_or_else(|| vec![self.hyperparams.diffusion_steps]);
        let mut out = Vec::with_capacity(ks.len() * vs.len() * ts.len() * is.len());
        for &k_links in &ks {
            for &v_weight in &vs {
                for &t_delay in &ts {
                    for &diffusion_steps in &is {
                        out.push(SweepPoint { k_links, v_weight, t_delay, diffusion_steps });
                    }
                }
            }
        }
        out
    }

    pub fn env_for(&self, point: &SweepPoint) -> EnvConfig {
        let mut env = self.env.clone();
        env.scenario.k_links = point.k_links;
        env.lyapunov.v_weight = point.v_weight;
        env.channel.t_delay = point.t_delay;
        env
    }

    pub fn hyperparams_for(&self, point: &SweepPoint) -> AgentHyperparams {
        AgentHyperparams { diffusion_steps: point.diffusion_steps, ..self.hyperparams.clone() }
    }

    /// Loads the CSV trace or generates the platoon.
    pub fn trace(&self) -> Result<Arc<MobilityTrace>> {
        let dt = self.env.scenario.slot_duration;
        let trace = match &self.mobility.trace {
            Some(path) => load_trace(path, dt)?,
            None => {
                let platoon = PlatoonConfig { slot_duration: dt, ..self.mobility.platoon.clone() };
                generate_platoon(&platoon, self.mobility.seed).map_err(|e| field("mobility.platoon", e))?
            }
        };
        Ok(Arc::new(trace))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k_links: usize,
    pub v_weight: f64,
    /// Seconds.
    pub t_delay: f64,
    pub diffusion_steps: usize,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        format!("k{}-v{}-d{}ms-i{}", self.k_links, self.v_weight, self.t_delay * 1e3, self.diffusion_steps)
    }

    pub fn value(&self, dimension: &str) -> Option<f64> {
        match dimension {
            "k_links" => Some(self.k_links as f64),
            "v_weight" => Some(self.v_weight),
            "t_delay" => Some(self.t_delay),
            "diffusion_steps" => Some(self.diffusion_steps as f64),
            _ => None,
        }
    }
}
