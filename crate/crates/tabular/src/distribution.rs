//! Task distributions: finitely many MDPs sharing dynamics, gamma and the
//! initial distribution, differing only in their reward tables.
//!
//! Houses the state-wise task-distribution relevance metric
//! `tdr(s) = E_M[max_a Q*_M(s,a)] - max_a E_M[Q*_M(s,a)]`,
//! the average MDP whose reward is the weighted mean of the task rewards,
//! the best Markovian return obtained by solving that average MDP, and the
//! occupancy-weighted gap certificate relating the two.

use crate::error::{Result, TabularError};
use crate::mdp::{check_distribution, PolicyTable, QTable, TabularMdp};
use crate::solver::{occupancy, optimal_values, policy_return, q_from_values, SparseDynamics};

/// A finite distribution over MDPs with shared dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDistribution {
    /// Carries S, A, P, gamma and the initial distribution. Its reward table
    /// is ignored; per-task rewards live in `rewards`.
    base: TabularMdp,
    rewards: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TaskDistribution {
    pub fn new(base: TabularMdp, rewards: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(TabularError::InvalidModel("no tasks".into()));
        }
        if weights.len() != rewards.len() {
            return Err(TabularError::ShapeMismatch(format!(
                "{} weights for {} tasks",
                weights.len(),
                rewards.len()
            )));
        }
        let expect = base.n_states() * base.n_actions();
        for (m, r) in rewards.iter().enumerate() {
            if r.len() != expect {
                return Err(TabularError::ShapeMismatch(format!(
                    "task {m} reward has {} entries, expected {expect}",
                    r.len()
                )));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(TabularError::InvalidModel(format!(
                    "task {m} has a non-finite reward entry"
                )));
            }
        }
        check_distribution(&weights, "task weights")?;
        Ok(Self {
            base,
            rewards,
            weights,
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.rewards.len()
    }

    pub fn base(&self) -> &TabularMdp {
        &self.base
    }

    pub fn n_states(&self) -> usize {
        self.base.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.base.n_actions()
    }

    pub fn gamma(&self) -> f64 {
        self.base.gamma()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn task_reward(&self, m: usize) -> &[f64] {
        &self.rewards[m]
    }

    pub fn reward(&self, m: usize, s: usize, a: usize) -> f64 {
        self.rewards[m][s * self.base.n_actions() + a]
    }

    /// The MDP of task `m`.
    pub fn task_mdp(&self, m: usize) -> TabularMdp {
        self.base
            .with_reward(self.rewards[m].clone())
            .expect("validated at construction")
    }

    /// Largest absolute reward over all tasks.
    pub fn reward_max_abs(&self) -> f64 {
        self.rewards
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |acc, &x| acc.max(x.abs()))
    }

    /// The MDP whose reward is the weight-averaged task reward.
    pub fn average_mdp(&self) -> TabularMdp {
        let n = self.base.n_states() * self.base.n_actions();
        let mut avg = vec![0.0f64; n];
        for (w, r) in self.weights.iter().zip(&self.rewards) {
            for (acc, &x) in avg.iter_mut().zip(r) {
                *acc += w * x;
            }
        }
        self.base.with_reward(avg).expect("same shape")
    }

    /// Solve every task's optimal Q table once, for reuse by the metrics below.
    pub fn solve_tasks(&self, tol: f64) -> Result<SolvedTasks> {
        let dyn_ = SparseDynamics::from_mdp(&self.base);
        let mut q_stars = Vec::with_capacity(self.n_tasks());
        for r in &self.rewards {
            let v = optimal_values(&dyn_, r, tol)?;
            q_stars.push(q_from_values(&dyn_, r, &v));
        }
        Ok(SolvedTasks { q_stars, tol })
    }
}

/// Per-task optimal Q tables solved to a common tolerance.
#[derive(Debug, Clone)]
pub struct SolvedTasks {
    q_stars: Vec<QTable>,
    tol: f64,
}

impl SolvedTasks {
    pub fn q_star(&self, m: usize) -> &QTable {
        &self.q_stars[m]
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn tables(&self) -> &[QTable] {
        &self.q_stars
    }
}

/// Gap certificate for the occupancy-weighted relevance bound.
#[derive(Debug, Clone, Copy)]
pub struct GapCertificate {
    /// `J*_T - E_M[J_M(policy)]`.
    pub gap: f64,
    /// `1/(1-gamma) * sum_s d_policy(s) * tdr(s)`.
    pub bound: f64,
    /// Whether `gap >= bound - 1e-6`.
    pub pass: bool,
}

/// Result of checking the exact performance-difference identity.
#[derive(Debug, Clone, Copy)]
pub struct PerfDiffReport {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl TaskDistribution {
    /// State-wise task-distribution relevance at `state`.
    ///
    /// Values within solver tolerance of zero are clamped to exactly zero;
    /// the raw quantity cannot fall below `-2 tol` for correctly solved
    /// tables (max is convex).
    pub fn tdr(&self, solved: &SolvedTasks, state: usize) -> Result<f64> {
        if state >= self.n_states() {
            return Err(TabularError::StateOutOfRange {
                state,
                n_states: self.n_states(),
            });
        }
        let mut expected_max = 0.0f64;
        let mut mean_q = vec![0.0f64; self.n_actions()];
        for (m, w) in self.weights.iter().enumerate() {
            let q = solved.q_star(m);
            expected_max += w * q.v(state);
            for (a, acc) in mean_q.iter_mut().enumerate() {
                *acc += w * q.q(state, a);
            }
        }
        let max_expected = mean_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw = expected_max - max_expected;
        if raw.abs() <= 2.0 * solved.tol {
            Ok(0.0)
        } else {
            Ok(raw)
        }
    }

    /// TDR at every state.
    pub fn tdr_all(&self, solved: &SolvedTasks) -> Result<Vec<f64>> {
        (0..self.n_states()).map(|s| self.tdr(solved, s)).collect()
    }

    /// Best return attainable by Markovian (and, equivalently, state-action
    /// history) policies: solve the average MDP, evaluate its greedy policy.
    /// Greedy ties break toward the lowest action index.
    pub fn best_markovian_return(&self, tol: f64) -> Result<(f64, PolicyTable)> {
        let avg = self.average_mdp();
        let q = crate::solver::value_iteration(&avg, tol)?;
        let policy = PolicyTable::greedy_from(&q);
        let j = policy_return(&avg, &policy)?;
        Ok((j, policy))
    }

    /// `J*_T = E_M[max_pi J_M(pi)]`: weight-averaged per-task optimal returns.
    pub fn optimal_distribution_return(&self, solved: &SolvedTasks) -> f64 {
        let mut total = 0.0;
        for (m, w) in self.weights.iter().enumerate() {
            let q = solved.q_star(m);
            let j: f64 = self
                .base
                .initial()
                .iter()
                .enumerate()
                .map(|(s, &p)| p * q.v(s))
                .sum();
            total += w * j;
        }
        total
    }

    /// Expected return of a Markovian policy across tasks, `E_M[J_M(policy)]`.
    pub fn expected_policy_return(&self, policy: &PolicyTable) -> Result<f64> {
        let mut total = 0.0;
        for m in 0..self.n_tasks() {
            total += self.weights[m] * policy_return(&self.task_mdp(m), policy)?;
        }
        Ok(total)
    }

    /// Occupancy-weighted relevance bound versus the realized gap.
    ///
    /// The occupancy is computed in the shared-dynamics MDP, which makes it
    /// identical across tasks for a fixed Markovian policy.
    pub fn gap_certificate(
        &self,
        solved: &SolvedTasks,
        policy: &PolicyTable,
    ) -> Result<GapCertificate> {
        let j_star = self.optimal_distribution_return(solved);
        let j_pi = self.expected_policy_return(policy)?;
        let gap = j_star - j_pi;
        let occ = occupancy(&self.base, policy)?;
        let mut bound = 0.0;
        for (s, &ds) in occ.d().iter().enumerate() {
            bound += ds * self.tdr(solved, s)?;
        }
        bound /= 1.0 - self.gamma();
        Ok(GapCertificate {
            gap,
            bound,
            pass: gap >= bound - 1e-6,
        })
    }
}

/// Verify `J(pi) - J(pi*) = 1/(1-gamma) sum_s d_pi(s) [sum_a pi(a|s) Q*(s,a) - max_a Q*(s,a)]`.
///
/// Both sides are computed by independent solver paths: returns via linear
/// policy evaluation, the right side via the occupancy system and the optimal
/// Q table.
pub fn performance_difference_check(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    tol: f64,
) -> Result<PerfDiffReport> {
    let q = crate::solver::value_iteration(mdp, tol.min(1e-9))?;
    let opt_policy = PolicyTable::greedy_from(&q);
    let lhs = policy_return(mdp, policy)? - policy_return(mdp, &opt_policy)?;
    let occ = occupancy(mdp, policy)?;
    let mut rhs = 0.0;
    for s in 0..mdp.n_states() {
        let mut weighted = 0.0;
        for a in 0..mdp.n_actions() {
            weighted += policy.prob(s, a) * q.q(s, a);
        }
        rhs += occ.d()[s] * (weighted - q.v(s));
    }
    rhs /= 1.0 - mdp.gamma();
    Ok(PerfDiffReport {
        lhs,
        rhs,
        pass: (lhs - rhs).abs() <= tol,
    })
}
