//! Gap decomposition over histories and finite-horizon belief search.
//!
//! The decomposition writes the gap between the distribution-optimal return
//! and a history policy's expected return as a posterior-weighted relevance
//! integral over visited histories. Histories are quotiented to
//! `(terminal shared state, consistent task set)`: with shared dynamics and
//! deterministic rewards, both the posterior and the per-task optimal Q
//! values depend on a history only through that pair. The integral is
//! realized as a finite sum over truncated histories with an explicit
//! geometric tail bound, which is always reported rather than absorbed.

use std::collections::HashMap;

use crate::augmented::{build_augmented_mdp, AugmentedMdp, TaskSet};
use crate::belief::REWARD_MATCH_TOL;
use crate::distribution::{SolvedTasks, TaskDistribution};
use crate::error::{Result, TabularError};

/// Two-sided report of the history decomposition at a truncation horizon.
#[derive(Debug, Clone, Copy)]
pub struct Thm4Report {
    /// `J*_T - E_M[J_M(pi)]`, computed by per-task policy evaluation.
    pub lhs: f64,
    /// Truncated posterior-relevance sum over reachable histories.
    pub rhs: f64,
    /// `2 gamma^horizon R_max / (1-gamma)^2`.
    pub residual_bound: f64,
    /// Whether `|lhs - rhs| <= residual_bound + 1e-6`.
    pub pass: bool,
}

/// Task-specific successor of an augmented state under one action.
///
/// Returns the realized reward and the consistent set that survives it.
fn task_branch(
    dist: &TaskDistribution,
    set: TaskSet,
    task: usize,
    s: usize,
    a: usize,
) -> (f64, TaskSet) {
    let r = dist.reward(task, s, a);
    let mut survivors: TaskSet = 0;
    for m in 0..dist.n_tasks() {
        if set & (1 << m) != 0 && (dist.reward(m, s, a) - r).abs() <= REWARD_MATCH_TOL {
            survivors |= 1 << m;
        }
    }
    (r, survivors)
}

/// Evaluate a deterministic augmented policy inside one task by iterative
/// fixed-point evaluation over the reachable augmented states.
fn task_policy_return(
    dist: &TaskDistribution,
    aug: &AugmentedMdp,
    policy: &[usize],
    task: usize,
    tol: f64,
) -> Result<f64> {
    let gamma = dist.gamma();
    let r_max = dist.reward_max_abs().max(1e-300);
    let iters = (((tol * (1.0 - gamma)) / r_max).ln() / gamma.ln()).ceil() as usize + 1;

    // membership restriction: only states whose consistent set contains the task
    let live: Vec<bool> = aug
        .states()
        .iter()
        .map(|&(_, set)| set & (1 << task) != 0)
        .collect();
    let mut v = vec![0.0f64; aug.n_states()];
    let mut next = v.clone();
    for _ in 0..iters {
        for i in 0..aug.n_states() {
            if !live[i] {
                continue;
            }
            let (s, set) = aug.states()[i];
            let a = policy[i];
            let (r, survivors) = task_branch(dist, set, task, s, a);
            let mut val = r;
            for (sn, &p) in dist.base().p(s, a).iter().enumerate() {
                if p > 0.0 {
                    let j = aug.index_of(sn, survivors).ok_or_else(|| {
                        TabularError::InvalidParams(
                            "augmented successor missing; state not reachable in build".into(),
                        )
                    })?;
                    val += gamma * p * v[j];
                }
            }
            next[i] = val;
        }
        std::mem::swap(&mut v, &mut next);
    }
    Ok(aug
        .initial()
        .iter()
        .map(|&(i, p)| if live[i] { p * v[i] } else { 0.0 })
        .sum())
}

/// Posterior-relevance bracket of an augmented state:
/// `sum_m w~_m max_a Q*_m(s,a) - max_a sum_m w~_m Q*_m(s,a)`
/// with `w~` the prior renormalized to the consistent set.
fn bracket(
    dist: &TaskDistribution,
    solved: &SolvedTasks,
    shared: usize,
    set: TaskSet,
) -> f64 {
    let mut w_total = 0.0;
    let mut expected_max = 0.0;
    let mut mean_q = vec![0.0f64; dist.n_actions()];
    for m in 0..dist.n_tasks() {
        if set & (1 << m) == 0 {
            continue;
        }
        let w = dist.weights()[m];
        w_total += w;
        let q = solved.q_star(m);
        expected_max += w * q.v(shared);
        for (a, acc) in mean_q.iter_mut().enumerate() {
            *acc += w * q.q(shared, a);
        }
    }
    let max_mean = mean_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (expected_max - max_mean) / w_total
}

/// Verify the history decomposition for the augmented-optimal policy.
///
/// Both sides are produced by independent code paths: the left side by
/// backward policy evaluation per task, the right side by forward occupancy
/// enumeration over truncated histories against per-task optimal Q tables.
pub fn theorem4_decomposition(
    dist: &TaskDistribution,
    horizon: usize,
    state_cap: usize,
) -> Result<Thm4Report> {
    if horizon < 1 {
        return Err(TabularError::InvalidParams("horizon must be >= 1".into()));
    }
    let gamma = dist.gamma();
    let tol = 1e-10;
    let aug = build_augmented_mdp(dist, state_cap)?;
    let values = aug.optimal_values(tol)?;
    let policy = aug.greedy_policy(&values);
    let solved = dist.solve_tasks(tol)?;

    let j_star = dist.optimal_distribution_return(&solved);
    let mut expected = 0.0;
    for m in 0..dist.n_tasks() {
        if dist.weights()[m] > 0.0 {
            expected += dist.weights()[m] * task_policy_return(dist, &aug, &policy, m, tol)?;
        }
    }
    let lhs = j_star - expected;

    // Forward pass: discounted mass over (terminal state, consistent set),
    // truncated at the horizon and mixed over tasks.
    let mut occupancy = vec![0.0f64; aug.n_states()];
    for task in 0..dist.n_tasks() {
        let w_task = dist.weights()[task];
        if w_task == 0.0 {
            continue;
        }
        let mut mu: HashMap<usize, f64> = HashMap::new();
        for &(i, p) in aug.initial() {
            *mu.entry(i).or_insert(0.0) += p;
        }
        let mut discount = 1.0;
        for _ in 0..horizon {
            for (&i, &mass) in &mu {
                occupancy[i] += w_task * (1.0 - gamma) * discount * mass;
            }
            let mut next: HashMap<usize, f64> = HashMap::new();
            for (&i, &mass) in &mu {
                let (s, set) = aug.states()[i];
                let a = policy[i];
                let (_, survivors) = task_branch(dist, set, task, s, a);
                for (sn, &p) in dist.base().p(s, a).iter().enumerate() {
                    if p > 0.0 {
                        let j = aug.index_of(sn, survivors).expect("reachable successor");
                        *next.entry(j).or_insert(0.0) += mass * p;
                    }
                }
            }
            mu = next;
            discount *= gamma;
        }
    }
    let mut rhs = 0.0;
    for (i, &mass) in occupancy.iter().enumerate() {
        if mass > 0.0 {
            let (s, set) = aug.states()[i];
            rhs += mass * bracket(dist, &solved, s, set);
        }
    }
    rhs /= 1.0 - gamma;

    let r_max = dist.reward_max_abs();
    let residual_bound = 2.0 * gamma.powi(horizon as i32) * r_max / ((1.0 - gamma) * (1.0 - gamma));
    Ok(Thm4Report {
        lhs,
        rhs,
        residual_bound,
        pass: (lhs - rhs).abs() <= residual_bound + 1e-6,
    })
}

/// Best expected return of any history policy over the first `horizon` steps,
/// by belief backward induction memoized on `(t, state, consistent set)`.
pub fn finite_horizon_best_return(
    dist: &TaskDistribution,
    horizon: usize,
    memo_cap: usize,
) -> Result<f64> {
    let mut memo: HashMap<(usize, usize, TaskSet), f64> = HashMap::new();
    let mut start_set: TaskSet = 0;
    for m in 0..dist.n_tasks() {
        if dist.weights()[m] > 0.0 {
            start_set |= 1 << m;
        }
    }
    let mut total = 0.0;
    for (s, &p) in dist.base().initial().iter().enumerate() {
        if p > 0.0 {
            total += p * best_value(dist, 0, s, start_set, horizon, memo_cap, &mut memo)?;
        }
    }
    Ok(total)
}

fn best_value(
    dist: &TaskDistribution,
    t: usize,
    s: usize,
    set: TaskSet,
    horizon: usize,
    memo_cap: usize,
    memo: &mut HashMap<(usize, usize, TaskSet), f64>,
) -> Result<f64> {
    if t >= horizon {
        return Ok(0.0);
    }
    if let Some(&v) = memo.get(&(t, s, set)) {
        return Ok(v);
    }
    if memo.len() >= memo_cap {
        return Err(TabularError::AugmentedTooLarge {
            cap: memo_cap,
            reached: memo.len() + 1,
        });
    }
    let w_set: f64 = (0..dist.n_tasks())
        .filter(|m| set & (1 << m) != 0)
        .map(|m| dist.weights()[m])
        .sum();
    let gamma = dist.gamma();
    let mut best = f64::NEG_INFINITY;
    for a in 0..dist.n_actions() {
        let mut val = 0.0;
        // branch on the realized reward, grouping consistent tasks
        let mut handled: TaskSet = 0;
        for m in 0..dist.n_tasks() {
            let bit = 1 << m;
            if set & bit == 0 || handled & bit != 0 {
                continue;
            }
            let (r, group) = task_branch(dist, set, m, s, a);
            handled |= group;
            let w_group: f64 = (0..dist.n_tasks())
                .filter(|k| group & (1 << k) != 0)
                .map(|k| dist.weights()[k])
                .sum();
            let mut cont = 0.0;
            for (sn, &p) in dist.base().p(s, a).iter().enumerate() {
                if p > 0.0 {
                    cont += p * best_value(dist, t + 1, sn, group, horizon, memo_cap, memo)?;
                }
            }
            val += (w_group / w_set) * (r + gamma * cont);
        }
        best = best.max(val);
    }
    memo.insert((t, s, set), best);
    Ok(best)
}

/// Best return on a reward-at-one-step chain, by exhaustive history search.
///
/// The caller supplies the horizon; the memo budget is linear in
/// `horizon * n_actions` scaled by the task count, which the sparse chain
/// structure respects.
pub fn b7_best_return(dist: &TaskDistribution, horizon: usize) -> Result<f64> {
    let cap = horizon
        .saturating_mul(dist.n_actions())
        .saturating_mul(dist.n_tasks() + 2)
        .max(1024);
    finite_horizon_best_return(dist, horizon, cap)
}
