mod common;

use common::*;
use rand::Rng;
use tdlab_tabular::{hypothesis_sets, TabularMdp, TransitionDataset};

/// Deterministic MDP from an explicit successor map.
fn det_mdp(map: &[usize], reward: Vec<f64>, s_n: usize, a_n: usize, gamma: f64) -> TabularMdp {
    let mut dynamics = vec![0.0; s_n * a_n * s_n];
    for (i, &sn) in map.iter().enumerate() {
        dynamics[i * s_n + sn] = 1.0;
    }
    let mut initial = vec![0.0; s_n];
    initial[0] = 1.0;
    TabularMdp::new(s_n, a_n, dynamics, reward, gamma, initial).unwrap()
}

/// Dataset for task `m` covering exactly the listed (s, a) pairs.
fn dataset_for(map: &[usize], task: &TabularMdp, pairs: &[(usize, usize)]) -> TransitionDataset {
    let a_n = task.n_actions();
    TransitionDataset::new(
        pairs
            .iter()
            .map(|&(s, a)| (s, a, task.r(s, a), map[s * a_n + a]))
            .collect(),
    )
}

#[test]
fn full_coverage_forces_unique_dynamics() {
    let mut r = rng(30);
    let (s_n, a_n) = (3usize, 2usize);
    let map: Vec<usize> = (0..s_n * a_n).map(|_| r.gen_range(0..s_n)).collect();
    let tasks: Vec<TabularMdp> = (0..2)
        .map(|_| {
            let reward: Vec<f64> = (0..s_n * a_n).map(|_| r.gen_range(-1.0..1.0)).collect();
            det_mdp(&map, reward, s_n, a_n, 0.9)
        })
        .collect();
    let all_pairs: Vec<(usize, usize)> = (0..s_n)
        .flat_map(|s| (0..a_n).map(move |a| (s, a)))
        .collect();
    let datasets: Vec<TransitionDataset> = tasks
        .iter()
        .map(|t| dataset_for(&map, t, &all_pairs))
        .collect();
    let sets = hypothesis_sets(&tasks, &datasets, 1_000_000).unwrap();
    let report = sets.verify(&datasets);
    assert_eq!(report.h3_count, 1);
    assert_eq!(report.h2_count, 1);
    assert!(report.pass, "{report:?}");
}

#[test]
fn disjoint_gaps_give_strictly_larger_middle_class() {
    // both tasks miss (0,1); task 0 additionally misses (1,0)
    let mut r = rng(31);
    let (s_n, a_n) = (2usize, 2usize);
    let map: Vec<usize> = (0..s_n * a_n).map(|_| r.gen_range(0..s_n)).collect();
    let tasks: Vec<TabularMdp> = (0..2)
        .map(|_| {
            let reward: Vec<f64> = (0..s_n * a_n).map(|_| r.gen_range(-1.0..1.0)).collect();
            det_mdp(&map, reward, s_n, a_n, 0.9)
        })
        .collect();
    let pairs0: Vec<(usize, usize)> = vec![(0, 0), (1, 1)];
    let pairs1: Vec<(usize, usize)> = vec![(0, 0), (1, 0), (1, 1)];
    let datasets = vec![
        dataset_for(&map, &tasks[0], &pairs0),
        dataset_for(&map, &tasks[1], &pairs1),
    ];
    let sets = hypothesis_sets(&tasks, &datasets, 1_000_000).unwrap();
    let report = sets.verify(&datasets);
    assert!(report.pass, "{report:?}");
    assert!(report.h3_count > 1, "shared gap leaves slack: {report:?}");
    assert!(
        report.h2_count > report.h3_count as u128,
        "per-task slack must exceed shared slack: {report:?}"
    );
}

#[test]
fn empty_datasets_still_contained() {
    let mut r = rng(32);
    let (s_n, a_n) = (2usize, 2usize);
    let map: Vec<usize> = (0..s_n * a_n).map(|_| r.gen_range(0..s_n)).collect();
    let tasks: Vec<TabularMdp> = (0..2)
        .map(|_| {
            let reward: Vec<f64> = (0..s_n * a_n).map(|_| r.gen_range(-1.0..1.0)).collect();
            det_mdp(&map, reward, s_n, a_n, 0.9)
        })
        .collect();
    let datasets = vec![TransitionDataset::default(), TransitionDataset::default()];
    let sets = hypothesis_sets(&tasks, &datasets, 1_000_000).unwrap();
    let report = sets.verify(&datasets);
    assert!(report.pass, "{report:?}");
    assert!(report.h3_count >= 1);
}

#[test]
fn containment_on_20_seeded_tiny_instances() {
    let mut gap_instances = 0;
    for seed in 0..20 {
        let mut r = rng(1600 + seed);
        let s_n = r.gen_range(2..=3);
        let a_n = 2;
        let m_n = r.gen_range(2..=3);
        let map: Vec<usize> = (0..s_n * a_n).map(|_| r.gen_range(0..s_n)).collect();
        let tasks: Vec<TabularMdp> = (0..m_n)
            .map(|_| {
                let reward: Vec<f64> = (0..s_n * a_n).map(|_| r.gen_range(-1.0..1.0)).collect();
                det_mdp(&map, reward, s_n, a_n, 0.9)
            })
            .collect();
        // per-task random partial coverage
        let datasets: Vec<TransitionDataset> = tasks
            .iter()
            .map(|t| {
                let pairs: Vec<(usize, usize)> = (0..s_n)
                    .flat_map(|s| (0..a_n).map(move |a| (s, a)))
                    .filter(|_| r.gen_bool(0.7))
                    .collect();
                dataset_for(&map, t, &pairs)
            })
            .collect();
        let sets = hypothesis_sets(&tasks, &datasets, 1_000_000).unwrap();
        let report = sets.verify(&datasets);
        assert!(report.pass, "seed {seed}: {report:?}");
        if report.h2_count > report.h3_count as u128 && report.h3_count > 1 {
            gap_instances += 1;
        }
    }
    assert!(gap_instances >= 1, "need an instance with |H2| > |H3| > 1");
}

#[test]
fn inconsistent_dataset_is_rejected() {
    let (s_n, a_n) = (2usize, 2usize);
    let map = vec![0usize, 1, 1, 0];
    let reward = vec![0.1, 0.2, 0.3, 0.4];
    let task = det_mdp(&map, reward, s_n, a_n, 0.9);
    // same (s, a) with two successors
    let dataset = TransitionDataset::new(vec![(0, 0, 0.1, 0), (0, 0, 0.1, 1)]);
    assert!(hypothesis_sets(&[task], &[dataset], 1_000_000).is_err());
}

#[test]
fn enumeration_guard_trips() {
    let mut r = rng(33);
    let (s_n, a_n) = (4usize, 2usize);
    let map: Vec<usize> = (0..s_n * a_n).map(|_| r.gen_range(0..s_n)).collect();
    let reward: Vec<f64> = (0..s_n * a_n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let task = det_mdp(&map, reward, s_n, a_n, 0.9);
    let err = hypothesis_sets(&[task], &[TransitionDataset::default()], 100);
    assert!(err.is_err());
}
