//! The consistency-set MDP: a finite quotient of the history MDP.
//!
//! With shared dynamics and deterministic per-task rewards, the posterior
//! after any history depends on it only through the terminal shared state
//! and the set of tasks consistent with the observed rewards. Augmented
//! states are therefore `(shared state, consistent task subset)`; taking an
//! action branches on the realized reward value, and each branch shrinks the
//! consistent set to the tasks predicting that value. The optimal return of
//! this MDP realizes the best return attainable with full
//! state-action-reward memory.

use std::collections::HashMap;

use crate::distribution::TaskDistribution;
use crate::error::{Result, TabularError};
use crate::mdp::TabularMdp;
use crate::solver::{optimal_values, q_from_values, SparseDynamics};

/// Default cap on reachable augmented states.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Subset of consistent tasks as a bitmask (at most 64 tasks).
pub type TaskSet = u64;

/// Reachable quotient of the history MDP for a task distribution.
#[derive(Debug, Clone)]
pub struct AugmentedMdp {
    /// `(shared state, consistent set)` per augmented index, in BFS order.
    states: Vec<(usize, TaskSet)>,
    index: HashMap<(usize, TaskSet), usize>,
    /// Sparse transitions and discount over augmented indices.
    dynamics: SparseDynamics,
    /// Posterior-expected reward per (augmented state, action).
    reward: Vec<f64>,
    /// Initial distribution as (augmented index, probability) pairs.
    initial: Vec<(usize, f64)>,
    n_actions: usize,
}

impl AugmentedMdp {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn states(&self) -> &[(usize, TaskSet)] {
        &self.states
    }

    pub fn dynamics(&self) -> &SparseDynamics {
        &self.dynamics
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial(&self) -> &[(usize, f64)] {
        &self.initial
    }

    pub fn gamma(&self) -> f64 {
        self.dynamics.gamma()
    }

    /// Index lookup for `(shared state, consistent set)` pairs.
    pub fn index_of(&self, shared: usize, set: TaskSet) -> Option<usize> {
        self.index.get(&(shared, set)).copied()
    }

    /// Optimal state values solved to `tol`.
    pub fn optimal_values(&self, tol: f64) -> Result<Vec<f64>> {
        optimal_values(&self.dynamics, &self.reward, tol)
    }

    /// Greedy optimal action per augmented state (lowest index on ties).
    pub fn greedy_policy(&self, values: &[f64]) -> Vec<usize> {
        let q = q_from_values(&self.dynamics, &self.reward, values);
        (0..self.n_states()).map(|s| q.greedy_action(s)).collect()
    }

    /// Export as a single-task distribution in dense form so the generic
    /// solver can cross-validate the augmented construction. Refuses sizes
    /// where the dense table would be unreasonable.
    pub fn to_task_distribution(&self) -> Result<TaskDistribution> {
        let k = self.n_states();
        let a_n = self.n_actions;
        if k * k * a_n > 10_000_000 {
            return Err(TabularError::ExportTooLarge {
                states: k,
                actions: a_n,
            });
        }
        let mut dyn_table = vec![0.0f64; k * a_n * k];
        for s in 0..k {
            for a in 0..a_n {
                for &(sn, p) in self.dynamics.row(s, a) {
                    dyn_table[(s * a_n + a) * k + sn as usize] += p;
                }
            }
        }
        let mut initial = vec![0.0f64; k];
        for &(s, p) in &self.initial {
            initial[s] = p;
        }
        let base = TabularMdp::new(
            k,
            a_n,
            dyn_table,
            vec![0.0; k * a_n],
            self.gamma(),
            initial,
        )?;
        TaskDistribution::new(base, vec![self.reward.clone()], vec![1.0])
    }
}

fn full_set(n_tasks: usize) -> TaskSet {
    if n_tasks == 64 {
        u64::MAX
    } else {
        (1u64 << n_tasks) - 1
    }
}

/// Group the tasks of `set` by the reward they assign to `(s, a)`.
///
/// Values are grouped by exact bit pattern: the theory engine only supports
/// deterministic reward tables, where ties are written identically.
fn reward_branches(dist: &TaskDistribution, set: TaskSet, s: usize, a: usize) -> Vec<(f64, TaskSet)> {
    let mut groups: Vec<(u64, f64, TaskSet)> = Vec::new();
    for m in 0..dist.n_tasks() {
        if set & (1 << m) == 0 {
            continue;
        }
        let r = dist.reward(m, s, a);
        let bits = r.to_bits();
        match groups.iter_mut().find(|g| g.0 == bits) {
            Some(g) => g.2 |= 1 << m,
            None => groups.push((bits, r, 1 << m)),
        }
    }
    groups.into_iter().map(|(_, r, g)| (r, g)).collect()
}

/// Prior mass of a task subset.
fn set_weight(dist: &TaskDistribution, set: TaskSet) -> f64 {
    (0..dist.n_tasks())
        .filter(|m| set & (1 << m) != 0)
        .map(|m| dist.weights()[m])
        .sum()
}

/// Enumerate the reachable consistency-set MDP breadth-first.
///
/// Fails with a size report if more than `state_cap` augmented states become
/// reachable. Tasks with zero prior weight are dropped from the initial
/// consistent set (they never carry posterior mass).
pub fn build_augmented_mdp(dist: &TaskDistribution, state_cap: usize) -> Result<AugmentedMdp> {
    if dist.n_tasks() > 64 {
        return Err(TabularError::InvalidParams(
            "augmented construction supports at most 64 tasks".into(),
        ));
    }
    let mut start_set = full_set(dist.n_tasks());
    for m in 0..dist.n_tasks() {
        if dist.weights()[m] == 0.0 {
            start_set &= !(1 << m);
        }
    }

    let base_sparse = SparseDynamics::from_mdp(dist.base());
    let mut index: HashMap<(usize, TaskSet), usize> = HashMap::new();
    let mut states: Vec<(usize, TaskSet)> = Vec::new();
    let mut initial = Vec::new();
    for (s, &p) in dist.base().initial().iter().enumerate() {
        if p > 0.0 {
            let id = intern(&mut index, &mut states, (s, start_set));
            initial.push((id, p));
        }
    }

    let a_n = dist.n_actions();
    let mut offsets: Vec<usize> = vec![0];
    let mut entries: Vec<(u32, f64)> = Vec::new();
    let mut reward: Vec<f64> = Vec::new();
    let mut cursor = 0usize;
    while cursor < states.len() {
        if states.len() > state_cap {
            return Err(TabularError::AugmentedTooLarge {
                cap: state_cap,
                reached: states.len(),
            });
        }
        let (s, set) = states[cursor];
        let w_set = set_weight(dist, set);
        for a in 0..a_n {
            let branches = reward_branches(dist, set, s, a);
            let mut expected_r = 0.0;
            let row_start = entries.len();
            for (r, group) in branches {
                let w_group = set_weight(dist, group) / w_set;
                expected_r += w_group * r;
                for &(sn, p) in base_sparse.row(s, a) {
                    let id = intern(&mut index, &mut states, (sn as usize, group));
                    entries.push((id as u32, w_group * p));
                }
            }
            // merge duplicate successors for a compact CSR row
            let row = &mut entries[row_start..];
            row.sort_unstable_by_key(|&(id, _)| id);
            let mut write = row_start;
            for read in row_start..entries.len() {
                if write < row_start + 1 || entries[write - 1].0 != entries[read].0 {
                    entries[write] = entries[read];
                    write += 1;
                } else {
                    entries[write - 1].1 += entries[read].1;
                }
            }
            entries.truncate(write);
            offsets.push(entries.len());
            reward.push(expected_r);
        }
        cursor += 1;
    }
    if states.len() > state_cap {
        return Err(TabularError::AugmentedTooLarge {
            cap: state_cap,
            reached: states.len(),
        });
    }

    let dynamics = SparseDynamics::from_csr(states.len(), a_n, dist.gamma(), offsets, entries);
    Ok(AugmentedMdp {
        states,
        index,
        dynamics,
        reward,
        initial,
        n_actions: a_n,
    })
}

fn intern(
    index: &mut HashMap<(usize, TaskSet), usize>,
    states: &mut Vec<(usize, TaskSet)>,
    key: (usize, TaskSet),
) -> usize {
    *index.entry(key).or_insert_with(|| {
        states.push(key);
        states.len() - 1
    })
}

/// Optimal return with full state-action-reward memory, via the augmented MDP.
pub fn pi3_optimal_return(dist: &TaskDistribution, tol: f64) -> Result<f64> {
    pi3_optimal_return_capped(dist, tol, DEFAULT_STATE_CAP)
}

pub fn pi3_optimal_return_capped(
    dist: &TaskDistribution,
    tol: f64,
    state_cap: usize,
) -> Result<f64> {
    let aug = build_augmented_mdp(dist, state_cap)?;
    let v = aug.optimal_values(tol)?;
    Ok(aug.initial.iter().map(|&(s, p)| p * v[s]).sum())
}
