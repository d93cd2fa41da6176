//! Hypothesis classes of optimal Q functions under partial dynamics data.
//!
//! Candidate dynamics are deterministic maps `p : S x A -> S`. Three nested
//! classes of per-task Q tuples arise from how much structure is imposed:
//! a Bellman check only on recorded transitions; per-task dynamics each
//! consistent with that task's own dataset; and a single shared dynamics
//! consistent with the pooled data. Sharing can only shrink the class, and
//! the ordering is asserted by enumeration here, never assumed.

use std::collections::HashMap;

use crate::error::{Result, TabularError};
use crate::mdp::{QTable, TabularMdp};

/// Recorded transitions `(s, a, r, s')` from one task.
#[derive(Debug, Clone, Default)]
pub struct TransitionDataset {
    pub tuples: Vec<(usize, usize, f64, usize)>,
}

impl TransitionDataset {
    pub fn new(tuples: Vec<(usize, usize, f64, usize)>) -> Self {
        Self { tuples }
    }
}

/// Enumerated hypothesis classes for a shared-dynamics task set.
#[derive(Debug, Clone)]
pub struct HypothesisSets {
    /// Q tuples (one table per task) from shared consistent dynamics.
    pub h3: Vec<Vec<QTable>>,
    /// Per task: distinct Q tables from dynamics consistent with that task's
    /// own dataset. The product of these sets is the middle class.
    pub h2_per_task: Vec<Vec<QTable>>,
    /// `prod_m |h2_per_task[m]|` (saturating).
    pub h2_count: u128,
    gamma: f64,
}

/// Outcome of asserting the containment chain.
#[derive(Debug, Clone)]
pub struct ContainmentReport {
    pub h3_count: usize,
    pub h2_count: u128,
    pub h2_per_task_counts: Vec<usize>,
    pub all_h3_in_h2: bool,
    pub all_h3_pass_h1: bool,
    pub all_h2_pass_h1: bool,
    pub pass: bool,
}

const Q_SOLVE_TOL: f64 = 1e-12;
const MEMBER_TOL: f64 = 1e-8;
/// Quantization grid for deduplicating numerically solved Q tables.
const DEDUPE_GRID: f64 = 1e-7;

fn quantize(q: &QTable) -> Vec<i64> {
    q.values().iter().map(|&x| (x / DEDUPE_GRID).round() as i64).collect()
}

/// Exact optimal Q of a deterministic-dynamics MDP by value iteration.
fn solve_deterministic(map: &[usize], reward: &[f64], n_states: usize, n_actions: usize, gamma: f64) -> QTable {
    let r_max = reward.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1e-300);
    let iters = ((Q_SOLVE_TOL * (1.0 - gamma) / r_max).ln() / gamma.ln()).ceil() as usize + 2;
    let mut v = vec![0.0f64; n_states];
    for _ in 0..iters {
        let mut next = vec![f64::NEG_INFINITY; n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                let q = reward[s * n_actions + a] + gamma * v[map[s * n_actions + a]];
                if q > next[s] {
                    next[s] = q;
                }
            }
        }
        v = next;
    }
    let mut q = vec![0.0f64; n_states * n_actions];
    for s in 0..n_states {
        for a in 0..n_actions {
            q[s * n_actions + a] = reward[s * n_actions + a] + gamma * v[map[s * n_actions + a]];
        }
    }
    QTable::new(n_states, n_actions, q)
}

/// Bellman optimality check restricted to a dataset's recorded transitions.
pub fn h1_membership_test(q: &QTable, dataset: &TransitionDataset, gamma: f64) -> bool {
    dataset.tuples.iter().all(|&(s, a, r, sn)| {
        (q.q(s, a) - (r + gamma * q.v(sn))).abs() <= MEMBER_TOL
    })
}

struct Enumerator {
    n_states: usize,
    /// fixed[s*A+a] = Some(s') where data pins the successor
    fixed: Vec<Option<usize>>,
}

impl Enumerator {
    fn new(n_states: usize, n_actions: usize, datasets: &[&TransitionDataset]) -> Result<Self> {
        let mut fixed = vec![None; n_states * n_actions];
        for d in datasets {
            for &(s, a, _, sn) in &d.tuples {
                if s >= n_states || a >= n_actions || sn >= n_states {
                    return Err(TabularError::InvalidParams(
                        "dataset index out of range".into(),
                    ));
                }
                match fixed[s * n_actions + a] {
                    None => fixed[s * n_actions + a] = Some(sn),
                    Some(prev) if prev == sn => {}
                    Some(prev) => {
                        return Err(TabularError::InvalidModel(format!(
                            "dataset inconsistent with deterministic dynamics at (s={s}, a={a}): \
                             successors {prev} and {sn}"
                        )))
                    }
                }
            }
        }
        Ok(Self { n_states, fixed })
    }

    fn candidate_count(&self) -> u128 {
        let free = self.fixed.iter().filter(|x| x.is_none()).count();
        (self.n_states as u128).saturating_pow(free as u32)
    }

    /// Visit every deterministic map consistent with the pinned successors.
    fn for_each(&self, mut f: impl FnMut(&[usize])) {
        let free: Vec<usize> = (0..self.fixed.len())
            .filter(|&i| self.fixed[i].is_none())
            .collect();
        let mut map: Vec<usize> = self.fixed.iter().map(|x| x.unwrap_or(0)).collect();
        let mut counters = vec![0usize; free.len()];
        loop {
            f(&map);
            let mut i = 0;
            loop {
                if i == free.len() {
                    return;
                }
                counters[i] += 1;
                if counters[i] < self.n_states {
                    map[free[i]] = counters[i];
                    break;
                }
                counters[i] = 0;
                map[free[i]] = 0;
                i += 1;
            }
        }
    }
}

/// Enumerate the three hypothesis classes.
///
/// `tasks` supplies the shared discount and the fully known per-task reward
/// tables; `datasets` supply the observed transitions. The candidate space
/// is every deterministic dynamics map, guarded by `candidate_cap`.
pub fn hypothesis_sets(
    tasks: &[TabularMdp],
    datasets: &[TransitionDataset],
    candidate_cap: u128,
) -> Result<HypothesisSets> {
    if tasks.is_empty() || tasks.len() != datasets.len() {
        return Err(TabularError::InvalidParams(
            "need one dataset per task".into(),
        ));
    }
    let gamma = tasks[0].gamma();
    let n_states = tasks[0].n_states();
    let n_actions = tasks[0].n_actions();
    for t in tasks {
        if t.gamma() != gamma || t.n_states() != n_states || t.n_actions() != n_actions {
            return Err(TabularError::InvalidParams(
                "tasks must share shape and gamma".into(),
            ));
        }
    }

    // Shared dynamics consistent with the pooled data -> tuple class.
    let pooled: Vec<&TransitionDataset> = datasets.iter().collect();
    let shared_enum = Enumerator::new(n_states, n_actions, &pooled)?;
    if shared_enum.candidate_count() > candidate_cap {
        return Err(TabularError::EnumerationTooLarge {
            count: shared_enum.candidate_count(),
            cap: candidate_cap,
        });
    }
    let mut h3: Vec<Vec<QTable>> = Vec::new();
    let mut seen: HashMap<Vec<i64>, ()> = HashMap::new();
    shared_enum.for_each(|map| {
        let tuple: Vec<QTable> = tasks
            .iter()
            .map(|t| solve_deterministic(map, t.reward_table(), n_states, n_actions, gamma))
            .collect();
        let key: Vec<i64> = tuple.iter().flat_map(quantize).collect();
        if seen.insert(key, ()).is_none() {
            h3.push(tuple);
        }
    });

    // Per-task dynamics consistent with each task's own data -> factor sets.
    let mut h2_per_task: Vec<Vec<QTable>> = Vec::new();
    for (task, dataset) in tasks.iter().zip(datasets) {
        let single = Enumerator::new(n_states, n_actions, &[dataset])?;
        if single.candidate_count() > candidate_cap {
            return Err(TabularError::EnumerationTooLarge {
                count: single.candidate_count(),
                cap: candidate_cap,
            });
        }
        let mut qs: Vec<QTable> = Vec::new();
        let mut seen: HashMap<Vec<i64>, ()> = HashMap::new();
        single.for_each(|map| {
            let q = solve_deterministic(map, task.reward_table(), n_states, n_actions, gamma);
            if seen.insert(quantize(&q), ()).is_none() {
                qs.push(q);
            }
        });
        h2_per_task.push(qs);
    }
    let h2_count = h2_per_task
        .iter()
        .fold(1u128, |acc, qs| acc.saturating_mul(qs.len() as u128));
    Ok(HypothesisSets {
        h3,
        h2_per_task,
        h2_count,
        gamma,
    })
}

impl HypothesisSets {
    /// Assert the containment chain against the datasets that produced this.
    pub fn verify(&self, datasets: &[TransitionDataset]) -> ContainmentReport {
        let membership: Vec<HashMap<Vec<i64>, ()>> = self
            .h2_per_task
            .iter()
            .map(|qs| qs.iter().map(|q| (quantize(q), ())).collect())
            .collect();
        let all_h3_in_h2 = self.h3.iter().all(|tuple| {
            tuple
                .iter()
                .zip(&membership)
                .all(|(q, set)| set.contains_key(&quantize(q)))
        });
        let all_h3_pass_h1 = self.h3.iter().all(|tuple| {
            tuple
                .iter()
                .zip(datasets)
                .all(|(q, d)| h1_membership_test(q, d, self.gamma))
        });
        // the recorded-transition check factorizes per task, so checking each
        // factor covers every tuple in the product class
        let all_h2_pass_h1 = self
            .h2_per_task
            .iter()
            .zip(datasets)
            .all(|(qs, d)| qs.iter().all(|q| h1_membership_test(q, d, self.gamma)));
        ContainmentReport {
            h3_count: self.h3.len(),
            h2_count: self.h2_count,
            h2_per_task_counts: self.h2_per_task.iter().map(|q| q.len()).collect(),
            all_h3_in_h2,
            all_h3_pass_h1,
            all_h2_pass_h1,
            pass: all_h3_in_h2 && all_h3_pass_h1 && all_h2_pass_h1,
        }
    }
}
