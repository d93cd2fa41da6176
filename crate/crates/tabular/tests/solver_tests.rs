mod common;

use common::*;
use tdlab_tabular::{occupancy, policy_return, value_iteration, PolicyTable, TabularMdp};

#[test]
fn zero_rewards_give_zero_q() {
    let mut r = rng(1);
    let mdp = random_mdp(&mut r, 5, 3, 0.9);
    let mdp = mdp.with_reward(vec![0.0; 15]).unwrap();
    let q = value_iteration(&mdp, 1e-10).unwrap();
    for &v in q.values() {
        assert!(v.abs() <= 1e-10, "zero-reward fixed point, got {v}");
    }
}

#[test]
fn absorbing_unit_reward_is_geometric_series() {
    // single absorbing state, R = 1 everywhere, gamma = 0.9 -> Q = 10
    let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 1.0], 0.9, vec![1.0]).unwrap();
    let q = value_iteration(&mdp, 1e-9).unwrap();
    assert!((q.q(0, 0) - 10.0).abs() <= 1e-9);
    assert!((q.q(0, 1) - 10.0).abs() <= 1e-9);
}

#[test]
fn value_iteration_matches_backward_induction_oracle() {
    for seed in 0..5 {
        let mut r = rng(100 + seed);
        let mdp = random_mdp(&mut r, 4, 2, 0.9);
        let oracle = backward_induction_q(&mdp, 10_000);
        let q = value_iteration(&mdp, 1e-8).unwrap();
        for (i, (&a, &b)) in oracle.iter().zip(q.values()).enumerate() {
            assert!(
                (a - b).abs() <= 1e-6,
                "seed {seed} entry {i}: oracle {a} vs solver {b}"
            );
        }
    }
}

#[test]
fn bellman_residual_within_tolerance() {
    for seed in 0..10 {
        let mut r = rng(200 + seed);
        let mdp = random_mdp(&mut r, 6, 3, 0.95);
        let tol = 1e-7;
        let q = value_iteration(&mdp, tol).unwrap();
        let res = q.bellman_residual(&mdp);
        assert!(res <= tol, "residual {res} exceeds tol {tol}");
    }
}

#[test]
fn value_iteration_is_deterministic() {
    let mut r = rng(7);
    let mdp = random_mdp(&mut r, 8, 3, 0.9);
    let q1 = value_iteration(&mdp, 1e-9).unwrap();
    let q2 = value_iteration(&mdp, 1e-9).unwrap();
    assert_eq!(q1.values(), q2.values());
}

#[test]
fn policy_return_zero_rewards() {
    let mut r = rng(2);
    let mdp = random_mdp(&mut r, 4, 2, 0.9).with_reward(vec![0.0; 8]).unwrap();
    let pi = random_policy(&mut r, 4, 2);
    assert!(policy_return(&mdp, &pi).unwrap().abs() <= 1e-12);
}

#[test]
fn greedy_policy_return_matches_optimal_value() {
    for seed in 0..5 {
        let mut r = rng(300 + seed);
        let mdp = random_mdp(&mut r, 5, 3, 0.9);
        let q = value_iteration(&mdp, 1e-10).unwrap();
        let pi = PolicyTable::greedy_from(&q);
        let j = policy_return(&mdp, &pi).unwrap();
        let expected: f64 = mdp
            .initial()
            .iter()
            .enumerate()
            .map(|(s, &p)| p * q.v(s))
            .sum();
        assert!(
            (j - expected).abs() <= 1e-8,
            "greedy return {j} vs E[max_a Q] {expected}"
        );
    }
}

#[test]
fn policy_return_matches_monte_carlo_oracle() {
    let mut r = rng(4);
    let mdp = random_mdp(&mut r, 4, 2, 0.9);
    let pi = PolicyTable::uniform(4, 2);
    let exact = policy_return(&mdp, &pi).unwrap();
    let (mc, se, _) = mc_policy_return(&mdp, &pi, 1_000_000, 42);
    assert!(
        (mc - exact).abs() <= 3.0 * se + 1e-9,
        "MC {mc} +- {se} vs exact {exact}"
    );
}

#[test]
fn occupancy_point_mass_on_absorbing_initial_state() {
    // initial state 0 absorbs under every action
    let dynamics = vec![
        1.0, 0.0, // s0 a0
        1.0, 0.0, // s0 a1
        0.5, 0.5, // s1 a0
        1.0, 0.0, // s1 a1
    ];
    let mdp = TabularMdp::new(2, 2, dynamics, vec![0.0; 4], 0.9, vec![1.0, 0.0]).unwrap();
    let pi = PolicyTable::uniform(2, 2);
    let d = occupancy(&mdp, &pi).unwrap();
    assert!((d.d()[0] - 1.0).abs() <= 1e-10);
    assert!(d.d()[1].abs() <= 1e-10);
}

#[test]
fn occupancy_normalizes_and_matches_monte_carlo() {
    let mut r = rng(5);
    let mdp = random_mdp(&mut r, 4, 2, 0.9);
    let pi = random_policy(&mut r, 4, 2);
    let d = occupancy(&mdp, &pi).unwrap();
    assert!((d.total() - 1.0).abs() <= 1e-10, "sums to {}", d.total());
    for &x in d.d() {
        assert!(x >= -1e-12);
    }
    let (mc, se) = mc_occupancy(&mdp, &pi, 300_000, 43);
    for s in 0..4 {
        assert!(
            (mc[s] - d.d()[s]).abs() <= 3.0 * se[s] + 1e-9,
            "state {s}: MC {} +- {} vs exact {}",
            mc[s],
            se[s],
            d.d()[s]
        );
    }
}

#[test]
fn occupancy_normalization_over_random_instances() {
    for seed in 0..20 {
        let mut r = rng(400 + seed);
        let mdp = random_mdp(&mut r, 7, 3, 0.97);
        let pi = random_policy(&mut r, 7, 3);
        let d = occupancy(&mdp, &pi).unwrap();
        assert!((d.total() - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn invalid_models_are_rejected() {
    // dynamics row not summing to one
    let bad = TabularMdp::new(1, 1, vec![0.5], vec![0.0], 0.9, vec![1.0]);
    assert!(bad.is_err());
    // gamma out of range
    let bad = TabularMdp::new(1, 1, vec![1.0], vec![0.0], 1.0, vec![1.0]);
    assert!(bad.is_err());
    // negative probability
    let bad = TabularMdp::new(
        2,
        1,
        vec![1.5, -0.5, 1.0, 0.0],
        vec![0.0, 0.0],
        0.9,
        vec![1.0, 0.0],
    );
    assert!(bad.is_err());
}
