//! Simulation and learning toolkit for a UAV acting as an aerial base station
//! over a highway platoon.
//!
//! The crate is layered bottom-up:
//!
//! * [`mobility`]: vehicle traces (CSV or synthetic platoons) and UAV kinematics.
//! * [`channel`]: path loss, LoS probability, Rayleigh fading with
//!   Gauss-Markov aging of delayed V2V CSI, SINR and Shannon rates.
//! * [`energy`]: rotary-wing propulsion power.
//! * [`lyapunov`]: the virtual energy queue and drift-plus-penalty terms.
//! * [`env`]: the MDP (state assembly, action amender, outage check, reward).
//! * [`neural`]: a small dense-network engine with exact reverse-mode gradients.
//! * [`diffusion`]: the noise schedule and the conditional reverse sampler.
//! * [`agents`]: D3PG, DDPG, D3PG-WCSI and H-DDQN plus the training loop.

pub mod agents;
pub mod channel;
pub mod diffusion;
pub mod energy;
pub mod env;
mod error;
pub mod lyapunov;
pub mod mobility;
pub mod neural;
pub mod rng;

pub use error::{Error, Result};

pub use agents::{AgentHyperparams, AgentKind};
pub use channel::{ChannelParams, FadingState, LinkGains};
pub use energy::PowerModelParams;
pub use env::{EnvConfig, FeasibleAction, MdpAction, MdpState, NetworkScenario, RewardBreakdown};
pub use lyapunov::{LyapunovConfig, VirtualQueue};
pub use mobility::{MobilityTrace, UavState, VehicleState};
