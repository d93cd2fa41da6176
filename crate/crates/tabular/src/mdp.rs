//! Finite MDPs with dense transition and reward tables.
//!
//! A model is `(S, A, P, R, gamma)` plus an initial state distribution.
//! Rewards are state-action tables `R[s][a]`; reward-on-transition variants
//! are not supported. All tables are row-major `Vec<f64>`.

use crate::error::{Result, TabularError};

/// Tolerance for probability rows summing to one.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A finite MDP with dense tables.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Transition probabilities, indexed `[s][a][s']`.
    dynamics: Vec<f64>,
    /// Rewards, indexed `[s][a]`.
    reward: Vec<f64>,
    gamma: f64,
    /// Initial state distribution.
    initial: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        dynamics: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(TabularError::InvalidModel(
                "n_states and n_actions must be positive".into(),
            ));
        }
        if dynamics.len() != n_states * n_actions * n_states {
            return Err(TabularError::ShapeMismatch(format!(
                "dynamics has {} entries, expected {}",
                dynamics.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(TabularError::ShapeMismatch(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if initial.len() != n_states {
            return Err(TabularError::ShapeMismatch(format!(
                "initial has {} entries, expected {}",
                initial.len(),
                n_states
            )));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(TabularError::InvalidModel(format!(
                "gamma must lie in (0,1), got {gamma}"
            )));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(TabularError::InvalidModel("non-finite reward entry".into()));
        }
        check_distribution(&initial, "initial distribution")?;
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &dynamics[(s * n_actions + a) * n_states..][..n_states];
                check_distribution(row, &format!("dynamics row (s={s}, a={a})"))?;
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            dynamics,
            reward,
            gamma,
            initial,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Transition row `P(.|s,a)`.
    pub fn p(&self, s: usize, a: usize) -> &[f64] {
        &self.dynamics[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn dynamics_table(&self) -> &[f64] {
        &self.dynamics
    }

    /// Same dynamics, gamma and initial distribution, different reward table.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        if reward.len() != self.n_states * self.n_actions {
            return Err(TabularError::ShapeMismatch(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                self.n_states * self.n_actions
            )));
        }
        let mut out = self.clone();
        out.reward = reward;
        Ok(out)
    }
}

pub(crate) fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(TabularError::InvalidModel(format!(
                "{what} has a negative or non-finite entry ({p})"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(TabularError::InvalidModel(format!(
            "{what} sums to {sum:.17} (must be 1 within {PROB_SUM_TOL:e})"
        )));
    }
    Ok(())
}

/// A state-action value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_states * n_actions, "Q table shape");
        Self {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..][..self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// State value `max_a Q(s,a)`.
    pub fn v(&self, s: usize) -> f64 {
        self.row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, ties broken by lowest action index.
    pub fn greedy_action(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate().skip(1) {
            if q > row[best] {
                best = a;
            }
        }
        best
    }

    /// Sup-norm Bellman optimality residual of this table in `mdp`.
    pub fn bellman_residual(&self, mdp: &TabularMdp) -> f64 {
        let mut worst = 0.0f64;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let mut backup = mdp.r(s, a);
                let p = mdp.p(s, a);
                for (sn, &prob) in p.iter().enumerate() {
                    if prob > 0.0 {
                        backup += mdp.gamma() * prob * self.v(sn);
                    }
                }
                worst = worst.max((self.q(s, a) - backup).abs());
            }
        }
        worst
    }
}

/// A stochastic Markovian policy, one probability row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(TabularError::ShapeMismatch(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for s in 0..n_states {
            check_distribution(&probs[s * n_actions..][..n_actions], &format!("policy row {s}"))?;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions],
        }
    }

    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Self {
        assert_eq!(actions.len(), n_states);
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    /// Greedy policy of a Q table, ties broken by lowest action index.
    pub fn greedy_from(q: &QTable) -> Self {
        let actions: Vec<usize> = (0..q.n_states()).map(|s| q.greedy_action(s)).collect();
        Self::deterministic(q.n_states(), q.n_actions(), &actions)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..][..self.n_actions]
    }
}

/// Normalized discounted state-visitation distribution `d[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    d: Vec<f64>,
}

impl OccupancyMeasure {
    pub(crate) fn new(d: Vec<f64>) -> Self {
        Self { d }
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn total(&self) -> f64 {
        self.d.iter().sum()
    }
}
