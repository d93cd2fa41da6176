//! Generators for the constructive worst-case task distributions.
//!
//! `build_b5` builds the layered chain family on which Markovian-class
//! returns collapse to `1/n` of the optimum while reward-memory policies
//! recover `1 - eps2`. The infinite chain is truncated at `horizon_cap`
//! levels with an absorbing band that keeps paying the late-phase reward,
//! which quotients the tail exactly; the geometric tail bound is still
//! reported so consumers never rely on that argument silently.
//!
//! `build_b7` builds the sparse-reward chain where only one state-action
//! pair per task ever pays, so no history policy can beat committing to the
//! single most likely task.

use crate::distribution::TaskDistribution;
use crate::error::{Result, TabularError};
use crate::mdp::TabularMdp;

/// Parameters of the layered-chain construction.
#[derive(Debug, Clone, Copy)]
pub struct B5Params {
    /// Number of tasks (= actions = chain width); must satisfy `n >= 1/eps1`.
    pub n: usize,
    pub gamma: f64,
    /// Markovian-return ceiling: the construction gives `J^1 = 1/n <= eps1`.
    pub eps1: f64,
    /// Memory-return floor: the construction gives `J^3 >= 1 - eps2`.
    pub eps2: f64,
    /// Chain truncation depth (levels before the absorbing band).
    pub horizon_cap: usize,
}

/// The built distribution plus derived constants and the convention report.
#[derive(Debug, Clone)]
pub struct B5Build {
    pub dist: TaskDistribution,
    pub params: B5Params,
    /// Early-phase reward amplitude.
    pub a: f64,
    /// Late-phase reward actually used (the convention with `J* = 1`).
    pub b: f64,
    /// Late-phase reward under the alternative stated convention.
    pub b_alternative: f64,
    /// Closed-form per-task optimal return under the selected `b`.
    pub jstar_selected: f64,
    /// Closed-form per-task optimal return under the alternative `b`.
    pub jstar_alternative: f64,
    /// `gamma^horizon_cap * max(a, b) / (1 - gamma)`.
    pub tail_bound: f64,
}

impl B5Build {
    /// Human-readable statement of the convention discrepancy.
    pub fn convention_report(&self) -> String {
        format!(
            "late-phase reward convention: selected b = {:.12e} (closed-form J*_i = {:.12}), \
             alternative gamma-shifted b = {:.12e} would give J*_i = {:.12}; the two written \
             definitions disagree by one factor of gamma and only the selected one normalizes \
             the per-task optimum to 1",
            self.b, self.jstar_selected, self.b_alternative, self.jstar_alternative
        )
    }
}

/// State index at chain level `t` with last-action superscript `l`.
pub fn b5_state(n: usize, t: usize, l: usize) -> usize {
    t * n + l
}

pub fn build_b5(params: B5Params) -> Result<B5Build> {
    let B5Params {
        n,
        gamma,
        eps1,
        eps2,
        horizon_cap,
    } = params;
    if n < 2 {
        return Err(TabularError::InvalidParams("need n >= 2".into()));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(TabularError::InvalidParams(format!(
            "gamma must lie in (0,1), got {gamma}"
        )));
    }
    if !(eps1 > 0.0 && eps1 <= 1.0) || !(eps2 > 0.0 && eps2 <= 1.0) {
        return Err(TabularError::InvalidParams(
            "eps1 and eps2 must lie in (0, 1]".into(),
        ));
    }
    if (n as f64) * eps1 < 1.0 {
        return Err(TabularError::InvalidParams(format!(
            "violated n >= 1/eps1: n = {n}, 1/eps1 = {}",
            1.0 / eps1
        )));
    }
    if horizon_cap < n + 2 {
        return Err(TabularError::InvalidParams(format!(
            "violated horizon_cap >= n + 2: horizon_cap = {horizon_cap}, n = {n}"
        )));
    }
    let nf = n as f64;
    let ratio = eps2 * nf / (nf - 1.0);
    if ratio > 1.0 {
        return Err(TabularError::InvalidParams(format!(
            "violated eps2 * n/(n-1) <= 1 (late-phase reward would be negative): \
             eps2 * n/(n-1) = {ratio}"
        )));
    }
    let a = eps2 * (nf / (nf - 1.0)) * (1.0 - gamma) / (1.0 - gamma.powi(n as i32));

    // Two written definitions of the late-phase reward differ by a factor of
    // gamma; pick the one whose closed-form per-task optimum is 1 and report
    // both rather than silently choosing.
    let b_shifted = (1.0 - gamma) / gamma.powi(n as i32 + 1) * (1.0 - ratio);
    let b_direct = (1.0 - gamma) / gamma.powi(n as i32) * (1.0 - ratio);
    let jstar = |b: f64| {
        a * (1.0 - gamma.powi(n as i32)) / (1.0 - gamma) + b * gamma.powi(n as i32) / (1.0 - gamma)
    };
    let (b, b_alt) = if (jstar(b_direct) - 1.0).abs() <= (jstar(b_shifted) - 1.0).abs() {
        (b_direct, b_shifted)
    } else {
        (b_shifted, b_direct)
    };
    if (jstar(b) - 1.0).abs() > 1e-9 {
        return Err(TabularError::InvalidParams(format!(
            "neither late-phase convention normalizes the optimum to 1 (got {} and {})",
            jstar(b),
            jstar(b_alt)
        )));
    }

    let f = |t: usize| if t < n { a } else { b };
    let n_states = (horizon_cap + 1) * n;
    let mut dynamics = vec![0.0f64; n_states * n * n_states];
    let mut rewards = vec![vec![0.0f64; n_states * n]; n];
    for t in 0..=horizon_cap {
        for l in 0..n {
            let s = b5_state(n, t, l);
            for j in 0..n {
                let next_t = if t < horizon_cap { t + 1 } else { horizon_cap };
                dynamics[(s * n + j) * n_states + b5_state(n, next_t, j)] = 1.0;
                rewards[j][s * n + j] = f(t);
            }
        }
    }
    let mut initial = vec![0.0f64; n_states];
    initial[b5_state(n, 0, 0)] = 1.0;
    let base = TabularMdp::new(n_states, n, dynamics, vec![0.0; n_states * n], gamma, initial)?;
    let dist = TaskDistribution::new(base, rewards, vec![1.0 / nf; n])?;
    let tail_bound = gamma.powi(horizon_cap as i32) * a.max(b) / (1.0 - gamma);
    Ok(B5Build {
        dist,
        params,
        a,
        b,
        b_alternative: b_alt,
        jstar_selected: jstar(b),
        jstar_alternative: jstar(b_alt),
        tail_bound,
    })
}

/// Sparse-reward chain: `t_len` states, every action advances the chain, the
/// last state absorbs, and task `i` pays 1 only for action `i` at the
/// next-to-last state.
pub fn build_b7(
    n_tasks: usize,
    t_len: usize,
    gamma: f64,
    weights: Vec<f64>,
) -> Result<TaskDistribution> {
    if n_tasks < 1 {
        return Err(TabularError::InvalidParams("need n >= 1".into()));
    }
    if t_len < 3 {
        return Err(TabularError::InvalidParams("need T >= 3".into()));
    }
    if weights.len() != n_tasks {
        return Err(TabularError::ShapeMismatch(format!(
            "{} weights for {n_tasks} tasks",
            weights.len()
        )));
    }
    let n_states = t_len;
    let n_actions = n_tasks;
    let mut dynamics = vec![0.0f64; n_states * n_actions * n_states];
    for s in 0..n_states {
        let next = if s + 1 < n_states { s + 1 } else { s };
        for a in 0..n_actions {
            dynamics[(s * n_actions + a) * n_states + next] = 1.0;
        }
    }
    let mut rewards = vec![vec![0.0f64; n_states * n_actions]; n_tasks];
    for (i, r) in rewards.iter_mut().enumerate() {
        r[(n_states - 2) * n_actions + i] = 1.0;
    }
    let mut initial = vec![0.0f64; n_states];
    initial[0] = 1.0;
    let base = TabularMdp::new(
        n_states,
        n_actions,
        dynamics,
        vec![0.0; n_states * n_actions],
        gamma,
        initial,
    )?;
    TaskDistribution::new(base, rewards, weights)
}
