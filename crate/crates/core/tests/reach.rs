use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reachkit::fixtures;
use reachkit::flow::integrate;
use reachkit::reach::{classify_point, reach_tree, ReachConfig, ReachTree, Variant, Verdict};
use reachkit::system::BoxSet;

fn small_config(seed: u64, depth: usize) -> ReachConfig {
    ReachConfig::for_system(&fixtures::example22(), seed).with_depth(depth).with_prune_cell(0.02)
}

fn bits(tree: &ReachTree) -> Vec<Vec<u64>> {
    tree.states().map(|s| s.iter().map(|v| v.to_bits()).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trees_are_deterministic(x in prop::array::uniform2(-1.0..1.0f64), seed in 0u64..1000) {
        let sys = fixtures::example22();
        let cfg = small_config(seed, 3);
        let a = reach_tree(&sys, &x, &cfg, seed).unwrap();
        let b = reach_tree(&sys, &x, &cfg, seed).unwrap();
        prop_assert_eq!(&a.nodes, &b.nodes);
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn deeper_trees_contain_shallower(x in prop::array::uniform2(-1.0..1.0f64), seed in 0u64..1000, depth in 0usize..3) {
        let sys = fixtures::example22();
        let shallow = reach_tree(&sys, &x, &small_config(seed, depth), seed).unwrap();
        let deep = reach_tree(&sys, &x, &small_config(seed, depth + 1), seed).unwrap();
        let deep_states: std::collections::HashSet<Vec<u64>> = bits(&deep).into_iter().collect();
        for s in bits(&shallow) {
            prop_assert!(deep_states.contains(&s));
        }
    }

    #[test]
    fn constrained_nodes_and_paths_stay_in_omega(
        x in prop::array::uniform2(-0.5..0.5f64),
        radius in 0.05..0.5f64,
        t_max in 0.05..0.3f64,
        seed in 0u64..1000,
    ) {
        let sys = fixtures::example22();
        let omega = BoxSet::cube(&x, radius).unwrap();
        let cfg = small_config(seed, 4).with_omega(Some(omega.clone())).with_t_max(Some(t_max));
        let tree = reach_tree(&sys, &x, &cfg, seed).unwrap();
        for (k, node) in tree.nodes.iter().enumerate() {
            prop_assert_eq!(node.id, k);
            prop_assert!(omega.contains(&node.state));
            prop_assert!(node.elapsed <= t_max + 1e-12);
            let traj = integrate(&sys, &x, &tree.word_to(k), &cfg.integrator).unwrap();
            prop_assert!(traj.states().iter().all(|s| omega.contains(s)));
            prop_assert_eq!(traj.final_state(), node.state.as_slice());
        }
    }
}

#[test]
fn witnesses_replay_within_constraints() {
    let sys = fixtures::example22();
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let (eps, tol, t) = (0.03, 0.01, 0.6);
    let mut yes = 0;
    for trial in 0..10u64 {
        let r = rng.random_range(0.5..1.0);
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let x = [r * a.cos(), r * a.sin()];
        let omega = BoxSet::cube(&x, 0.3).unwrap();
        let cfg = ReachConfig::for_system(&sys, trial).with_depth(12).with_prune_cell(0.01);
        let variant = Variant::Stl { t, omega: omega.clone() };
        let c = classify_point(&sys, &x, &variant, &cfg, eps, tol, trial).unwrap();
        let Verdict::YesWithWitness { witnesses } = &c.verdict else { continue };
        yes += 1;
        assert_eq!(witnesses.len(), 9);
        for w in witnesses {
            let traj = integrate(&sys, &x, &w.word, &cfg.integrator).unwrap();
            assert_eq!(traj.final_state(), w.reached.as_slice());
            let d = w.reached.iter().zip(&w.probe).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d <= tol, "{d}");
            assert!(traj.states().iter().all(|s| omega.contains(s)));
            assert!(w.word.total_time() <= t + 1e-12);
        }
    }
    // away from the origin the system is locally controllable
    assert!(yes >= 8, "{yes} of 10");
}
