//! D3PG and D3PG-WCSI differ only in which V2V gains they observe.

use std::sync::Arc;

use aerolink_core::agents::{train, AgentHyperparams, AgentKind, TrainOptions};
use aerolink_core::env::Environment;
use aerolink_core::mobility::{generate_platoon, PlatoonConfig};
use aerolink_core::{ChannelParams, EnvConfig, MdpAction, NetworkScenario};

fn config(t_delay: f64) -> (EnvConfig, Arc<aerolink_core::MobilityTrace>) {
    let scenario = NetworkScenario { m_links: 3, k_links: 2, slots: 8, outage_samples: 40, ..Default::default() };
    let cfg = EnvConfig { scenario, channel: ChannelParams { t_delay, ..Default::default() }, ..Default::default() };
    let trace = generate_platoon(&PlatoonConfig { n_vehicles: 7, slots: 9, ..Default::default() }, 5).unwrap();
    (cfg, Arc::new(trace))
}

#[test]
fn zero_delay_makes_both_agents_identical() {
    let (cfg, trace) = config(0.0);
    let hp = AgentHyperparams { warmup_steps: 6, batch_size: 4, hidden_width: 16, ..AgentHyperparams::toy() };
    let opts = TrainOptions { episodes: 2, record_timing: false };
    let run = |kind| {
        let mut rows = Vec::new();
        let (report, _) = train(kind, &cfg, trace.clone(), &hp, 21, &opts, &mut |r| rows.push(r.clone())).unwrap();
        (rows, report.episodes)
    };
    let a = run(AgentKind::D3pg);
    let b = run(AgentKind::D3pgWcsi);
    assert_eq!(a.0.len(), 16);
    for (x, y) in a.0.iter().zip(&b.0) {
        assert_eq!(x.reward.to_bits(), y.reward.to_bits());
        assert_eq!(x.energy_j.to_bits(), y.energy_j.to_bits());
        assert_eq!(x.queue.to_bits(), y.queue.to_bits());
    }
    assert_eq!(a.1, b.1);
}

#[test]
fn delayed_csi_changes_only_v2v_entries() {
    let (cfg, trace) = config(0.010);
    let (m, k) = (cfg.scenario.m_links, cfg.scenario.k_links);
    let mut aged = Environment::new(cfg.clone(), trace.clone(), 3, true).unwrap();
    let mut reported = Environment::new(cfg.clone(), trace, 3, false).unwrap();
    let action = MdpAction::zeros(cfg.scenario.action_dim());
    for _ in 0..4 {
        let (x, y) = (&aged.state().raw, &reported.state().raw);
        assert_eq!(x[..m + k], y[..m + k], "UAV-facing gains must agree");
        assert!(x[m + k..m + k + m * k + k].iter().zip(&y[m + k..m + k + m * k + k]).any(|(a, b)| a != b));
        aged.step(&action).unwrap();
        reported.step(&action).unwrap();
    }
}
