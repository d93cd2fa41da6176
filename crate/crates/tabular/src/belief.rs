//! Task posteriors over reward-annotated histories.
//!
//! Rewards are deterministic per (task, state, action), so the posterior
//! after any history is the prior restricted to the tasks whose reward
//! tables reproduce every observed reward, renormalized.

use crate::distribution::TaskDistribution;
use crate::error::{Result, TabularError};

/// Reward observations match a task's table within this tolerance.
pub const REWARD_MATCH_TOL: f64 = 1e-9;

/// An alternating trajectory prefix `(s_0, a_0, r_0, s_1, ..., s_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    states: Vec<usize>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
}

impl History {
    /// Start a history at an initial state.
    pub fn start(state: usize) -> Self {
        Self {
            states: vec![state],
            actions: Vec::new(),
            rewards: Vec::new(),
        }
    }

    pub fn new(states: Vec<usize>, actions: Vec<usize>, rewards: Vec<f64>) -> Result<Self> {
        if states.is_empty() || actions.len() != states.len() - 1 || rewards.len() != actions.len()
        {
            return Err(TabularError::InvalidParams(format!(
                "ill-formed history: {} states, {} actions, {} rewards",
                states.len(),
                actions.len(),
                rewards.len()
            )));
        }
        Ok(Self {
            states,
            actions,
            rewards,
        })
    }

    pub fn push(&mut self, action: usize, reward: f64, next_state: usize) {
        self.actions.push(action);
        self.rewards.push(reward);
        self.states.push(next_state);
    }

    /// Number of (s, a, r) steps recorded.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn terminal_state(&self) -> usize {
        *self.states.last().unwrap()
    }

    /// Iterator over `(s_k, a_k, r_k)` steps.
    pub fn steps(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.states
            .iter()
            .zip(&self.actions)
            .zip(&self.rewards)
            .map(|((&s, &a), &r)| (s, a, r))
    }

    /// Append another history whose first state must continue this one.
    pub fn concat(&self, tail: &History) -> Result<History> {
        if tail.states[0] != self.terminal_state() {
            return Err(TabularError::InvalidParams(
                "histories do not join at a shared state".into(),
            ));
        }
        let mut out = self.clone();
        for (i, (&a, &r)) in tail.actions.iter().zip(&tail.rewards).enumerate() {
            out.push(a, r, tail.states[i + 1]);
        }
        Ok(out)
    }
}

/// Posterior probability vector over a distribution's tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    probs: Vec<f64>,
}

impl BeliefState {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Tasks with positive posterior mass.
    pub fn support(&self) -> Vec<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(m, _)| m)
            .collect()
    }

    /// Update in place with one observed step; errors if no task survives.
    pub fn observe(
        &mut self,
        dist: &TaskDistribution,
        s: usize,
        a: usize,
        r: f64,
    ) -> Result<()> {
        let mut total = 0.0;
        for (m, p) in self.probs.iter_mut().enumerate() {
            if *p > 0.0 && (dist.reward(m, s, a) - r).abs() > REWARD_MATCH_TOL {
                *p = 0.0;
            }
            total += *p;
        }
        if total <= 0.0 {
            return Err(TabularError::ImpossibleHistory);
        }
        for p in &mut self.probs {
            *p /= total;
        }
        Ok(())
    }
}

/// Bayes posterior over tasks given a reward-annotated history.
///
/// An empty history returns the prior. If no task is consistent with every
/// observed reward the history is flagged impossible.
pub fn task_posterior(dist: &TaskDistribution, history: &History) -> Result<BeliefState> {
    for &s in &history.states {
        if s >= dist.n_states() {
            return Err(TabularError::StateOutOfRange {
                state: s,
                n_states: dist.n_states(),
            });
        }
    }
    if history.actions.iter().any(|&a| a >= dist.n_actions()) {
        return Err(TabularError::InvalidParams("action index out of range".into()));
    }
    let mut belief = BeliefState {
        probs: dist.weights().to_vec(),
    };
    for (s, a, r) in history.steps() {
        belief.observe(dist, s, a, r)?;
    }
    Ok(belief)
}
