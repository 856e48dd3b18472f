use aerolink_core::agents::hungarian_assign;
use aerolink_core::diffusion::build_schedule;
use aerolink_core::env::{amend_action, MdpAction, NetworkScenario};
use aerolink_core::lyapunov::{quadratic_drift_bound_holds, queue_update, single_step_drift_holds, telescoped_bound_holds};
use aerolink_core::neural::{Activation, DenseNet};
use aerolink_core::{rng, VirtualQueue};
use ndarray::Array2;
use proptest::prelude::*;

fn scenario_and_action() -> impl Strategy<Value = (NetworkScenario, Vec<f64>)> {
    (1usize..7, 0usize..7, 0.0f64..30.0).prop_flat_map(|(m, k, dbm)| {
        let k = k.min(m);
        let sc = NetworkScenario { m_links: m, k_links: k, p_max_dbm: dbm, ..Default::default() };
        let dim = sc.action_dim();
        let entry = prop_oneof![8 => -3.0f64..3.0, 1 => Just(f64::NAN), 1 => Just(1.0), 1 => Just(-1.0)];
        (Just(sc), prop::collection::vec(entry, dim))
    })
}

fn brute_force(cost: &Array2<f64>) -> f64 {
    fn go(cost: &Array2<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.nrows() {
            *best = best.min(acc);
            return;
        }
        for c in 0..cost.ncols() {
            if !used[c] {
                used[c] = true;
                go(cost, row + 1, used, acc + cost[[row, c]], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.ncols()], 0.0, &mut best);
    best
}

proptest! {
    #[test]
    fn amended_actions_are_always_feasible((sc, raw) in scenario_and_action()) {
        let a = amend_action(&MdpAction(raw), &sc);
        prop_assert!(a.violations(&sc).is_empty(), "{:?}", a.violations(&sc));
        for k in 0..sc.k_links {
            prop_assert_eq!(a.channels_of(k).count(), 1);
        }
        for m in 0..sc.m_links {
            prop_assert!(a.sharers_of(m).count() <= 1);
        }
    }

    #[test]
    fn queue_transitions_satisfy_drift_inequalities(q in 0.0f64..1e4, power in 0.0f64..500.0, e_th in 1.0f64..300.0, dt in 0.1f64..2.0) {
        let before = VirtualQueue { q, e_threshold: e_th, slot_duration: dt };
        let after = queue_update(&before, power);
        prop_assert!(after.q >= 0.0);
        prop_assert!(single_step_drift_holds(&before, &after, power));
        prop_assert!(quadratic_drift_bound_holds(&before, &after, power));
    }

    #[test]
    fn telescoped_bound_holds_on_any_power_path(powers in prop::collection::vec(0.0f64..400.0, 1..200), q0 in 0.0f64..500.0) {
        let mut queue = VirtualQueue { q: q0, e_threshold: 120.0, slot_duration: 1.0 };
        let energies: Vec<f64> = powers.iter().map(|p| p * queue.slot_duration).collect();
        for &p in &powers {
            queue = queue_update(&queue, p);
        }
        prop_assert!(telescoped_bound_holds(&energies, 120.0, q0, queue.q));
    }

    #[test]
    fn schedule_identities(steps in 1usize..25, bmin in 0.01f64..1.0, span in 0.1f64..20.0) {
        let s = build_schedule(steps, bmin, bmin + span).unwrap();
        prop_assert_eq!(s.beta_bar[0], 0.0);
        let mut acc = 1.0;
        for i in 0..steps {
            prop_assert!(s.beta[i] > 0.0 && s.beta[i] < 1.0);
            prop_assert_eq!(s.phi[i], 1.0 - s.beta[i]);
            acc *= s.phi[i];
            prop_assert!((s.phi_bar[i] - acc).abs() <= 1e-15);
            prop_assert!(s.beta_bar[i] >= 0.0 && s.beta_bar[i] <= s.beta[i] + 1e-15);
            if i > 0 {
                prop_assert!(s.beta[i] > s.beta[i - 1]);
                prop_assert!(s.phi_bar[i] < s.phi_bar[i - 1]);
            }
        }
    }

    #[test]
    fn soft_update_contracts_toward_source(tau in 0.001f64..=1.0, seed in any::<u64>()) {
        let mut r = rng::stream(seed, 0);
        let source = DenseNet::new(&[3, 5, 2], Activation::Relu, Activation::Identity, 1.0, &mut r).unwrap();
        let mut target = DenseNet::new(&[3, 5, 2], Activation::Relu, Activation::Identity, 1.0, &mut r).unwrap();
        let dist = |a: &DenseNet, b: &DenseNet| -> f64 {
            a.layers().iter().zip(b.layers()).map(|(x, y)| {
                (&x.w - &y.w).mapv(|v| v * v).sum() + (&x.b - &y.b).mapv(|v| v * v).sum()
            }).sum::<f64>().sqrt()
        };
        let before = dist(&source, &target);
        target.soft_update_from(&source, tau).unwrap();
        let after = dist(&source, &target);
        prop_assert!((after - (1.0 - tau) * before).abs() <= 1e-12 * (1.0 + before));
    }

    #[test]
    fn hungarian_matches_brute_force(k in 1usize..6, extra in 0usize..3, seed in any::<u64>()) {
        use rand::Rng;
        let mut r = rng::stream(seed, 0);
        let cost = Array2::from_shape_simple_fn((k, k + extra), || r.random_range(-10.0..10.0));
        let (cols, total) = hungarian_assign(&cost).unwrap();
        let mut seen = cols.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), k);
        let recomputed: f64 = cols.iter().enumerate().map(|(row, &c)| cost[[row, c]]).sum();
        prop_assert!((recomputed - total).abs() < 1e-9);
        prop_assert!((total - brute_force(&cost)).abs() < 1e-9);
    }
}
