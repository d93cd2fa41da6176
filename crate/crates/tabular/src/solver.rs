//! Exact dynamic-programming solvers.
//!
//! Value iteration runs on a sparse transition structure and solves strongly
//! connected components of the state graph in reverse topological order, so
//! layered models (chains, history quotients) cost one backup per acyclic
//! state instead of a full sweep per contraction step. Policy evaluation and
//! occupancy measures solve their defining linear systems directly.

use nalgebra::{DMatrix, DVector};
use petgraph::graph::DiGraph;

use crate::error::{Result, TabularError};
use crate::mdp::{OccupancyMeasure, PolicyTable, QTable, TabularMdp};

/// Hard cap on Bellman backup sweeps before reporting solver failure.
pub const MAX_SWEEPS: usize = 1_000_000;

/// Dense states beyond which the direct linear-system solvers refuse to run.
const MAX_DENSE_STATES: usize = 5_000;

/// Sparse CSR view of an MDP's transitions, shared across reward tables.
#[derive(Debug, Clone)]
pub struct SparseDynamics {
    n_states: usize,
    n_actions: usize,
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
    gamma: f64,
}

impl SparseDynamics {
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
        let mut offsets = Vec::with_capacity(s_n * a_n + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for s in 0..s_n {
            for a in 0..a_n {
                for (sn, &p) in mdp.p(s, a).iter().enumerate() {
                    if p > 0.0 {
                        entries.push((sn as u32, p));
                    }
                }
                offsets.push(entries.len());
            }
        }
        Self {
            n_states: s_n,
            n_actions: a_n,
            offsets,
            entries,
            gamma: mdp.gamma(),
        }
    }

    /// Build directly from CSR arrays; used by the augmented-MDP builder.
    pub fn from_csr(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        offsets: Vec<usize>,
        entries: Vec<(u32, f64)>,
    ) -> Self {
        assert_eq!(offsets.len(), n_states * n_actions + 1);
        assert_eq!(*offsets.last().unwrap(), entries.len());
        Self {
            n_states,
            n_actions,
            offsets,
            entries,
            gamma,
        }
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

    pub fn row(&self, s: usize, a: usize) -> &[(u32, f64)] {
        let i = s * self.n_actions + a;
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    fn backup(&self, reward: &[f64], v: &[f64], s: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for a in 0..self.n_actions {
            let mut q = reward[s * self.n_actions + a];
            for &(sn, p) in self.row(s, a) {
                q += self.gamma * p * v[sn as usize];
            }
            best = best.max(q);
        }
        best
    }

    /// Strongly connected components of the support graph, ordered so that
    /// every component appears after all components it can reach.
    fn sccs(&self) -> Vec<Vec<usize>> {
        let mut g = DiGraph::<(), (), u32>::with_capacity(self.n_states, self.entries.len());
        for _ in 0..self.n_states {
            g.add_node(());
        }
        let mut seen = vec![u32::MAX; self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for &(sn, _) in self.row(s, a) {
                    // dedupe repeated (s, s') pairs cheaply per source state
                    if seen[sn as usize] != s as u32 {
                        seen[sn as usize] = s as u32;
                        g.add_edge((s as u32).into(), sn.into(), ());
                    }
                }
            }
        }
        petgraph::algo::tarjan_scc(&g)
            .into_iter()
            .map(|c| c.into_iter().map(|n| n.index()).collect())
            .collect()
    }
}

/// Optimal state values by SCC-ordered value iteration.
///
/// Components are iterated to a residual of `tol * (1-gamma)^2` so the error
/// accumulated along the component DAG stays below `tol`, then full sweeps
/// polish the global sup-norm residual below `tol * (1-gamma) / gamma`,
/// guaranteeing `|V - V*| <= tol`.
pub fn optimal_values(dyn_: &SparseDynamics, reward: &[f64], tol: f64) -> Result<Vec<f64>> {
    assert!(tol > 0.0, "tolerance must be positive");
    assert_eq!(reward.len(), dyn_.n_states * dyn_.n_actions);
    let gamma = dyn_.gamma;
    let scc_tol = (tol * (1.0 - gamma) * (1.0 - gamma)).max(f64::MIN_POSITIVE);
    let global_tol = tol * (1.0 - gamma) / gamma;

    let mut v = vec![0.0f64; dyn_.n_states];
    let mut backups: usize = 0;
    for comp in dyn_.sccs() {
        loop {
            let mut residual = 0.0f64;
            for &s in &comp {
                let nv = dyn_.backup(reward, &v, s);
                residual = residual.max((nv - v[s]).abs());
                v[s] = nv;
            }
            backups += comp.len();
            if residual <= scc_tol {
                break;
            }
            if backups > MAX_SWEEPS * dyn_.n_states {
                return Err(TabularError::NonConvergence {
                    max_sweeps: MAX_SWEEPS,
                    residual,
                });
            }
        }
    }

    // Polish with synchronous sweeps until the global contract holds.
    for _ in 0..MAX_SWEEPS {
        let mut residual = 0.0f64;
        let mut next = vec![0.0f64; dyn_.n_states];
        for s in 0..dyn_.n_states {
            next[s] = dyn_.backup(reward, &v, s);
            residual = residual.max((next[s] - v[s]).abs());
        }
        v = next;
        if residual <= global_tol {
            return Ok(v);
        }
    }
    Err(TabularError::NonConvergence {
        max_sweeps: MAX_SWEEPS,
        residual: f64::NAN,
    })
}

/// Q table from converged state values.
pub fn q_from_values(dyn_: &SparseDynamics, reward: &[f64], v: &[f64]) -> QTable {
    let mut q = vec![0.0f64; dyn_.n_states * dyn_.n_actions];
    for s in 0..dyn_.n_states {
        for a in 0..dyn_.n_actions {
            let mut val = reward[s * dyn_.n_actions + a];
            for &(sn, p) in dyn_.row(s, a) {
                val += dyn_.gamma * p * v[sn as usize];
            }
            q[s * dyn_.n_actions + a] = val;
        }
    }
    QTable::new(dyn_.n_states, dyn_.n_actions, q)
}

/// Solve for the optimal Q table of `mdp` with Q-error at most `tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<QTable> {
    if tol <= 0.0 {
        return Err(TabularError::InvalidParams("tol must be positive".into()));
    }
    let dyn_ = SparseDynamics::from_mdp(mdp);
    let v = optimal_values(&dyn_, mdp.reward_table(), tol)?;
    Ok(q_from_values(&dyn_, mdp.reward_table(), &v))
}

fn check_policy_shapes(mdp: &TabularMdp, policy: &PolicyTable) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(TabularError::ShapeMismatch(format!(
            "policy is {}x{}, mdp is {}x{}",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    if mdp.n_states() > MAX_DENSE_STATES {
        return Err(TabularError::InvalidParams(format!(
            "dense linear solve limited to {MAX_DENSE_STATES} states, got {}",
            mdp.n_states()
        )));
    }
    Ok(())
}

/// State values of a fixed policy via the linear system `v = r_pi + gamma P_pi v`.
pub fn policy_values(mdp: &TabularMdp, policy: &PolicyTable) -> Result<Vec<f64>> {
    check_policy_shapes(mdp, policy)?;
    let n = mdp.n_states();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            r[s] += pa * mdp.r(s, a);
            for (sn, &p) in mdp.p(s, a).iter().enumerate() {
                if p > 0.0 {
                    m[(s, sn)] -= mdp.gamma() * pa * p;
                }
            }
        }
    }
    let v = m
        .lu()
        .solve(&r)
        .ok_or_else(|| TabularError::InvalidModel("singular policy-evaluation system".into()))?;
    Ok(v.iter().cloned().collect())
}

/// Expected discounted return `J(pi) = E_initial[v_pi]`.
pub fn policy_return(mdp: &TabularMdp, policy: &PolicyTable) -> Result<f64> {
    let v = policy_values(mdp, policy)?;
    Ok(mdp
        .initial()
        .iter()
        .zip(&v)
        .map(|(&p, &val)| p * val)
        .sum())
}

/// Normalized discounted occupancy: solves `d = (1-gamma) init + gamma P_pi^T d`.
pub fn occupancy(mdp: &TabularMdp, policy: &PolicyTable) -> Result<OccupancyMeasure> {
    check_policy_shapes(mdp, policy)?;
    let n = mdp.n_states();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in 0..n {
        b[s] = (1.0 - mdp.gamma()) * mdp.initial()[s];
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for (sn, &p) in mdp.p(s, a).iter().enumerate() {
                if p > 0.0 {
                    // column s feeds row sn through P_pi^T
                    m[(sn, s)] -= mdp.gamma() * pa * p;
                }
            }
        }
    }
    let d = m
        .lu()
        .solve(&b)
        .ok_or_else(|| TabularError::InvalidModel("singular occupancy system".into()))?;
    Ok(OccupancyMeasure::new(d.iter().cloned().collect()))
}
