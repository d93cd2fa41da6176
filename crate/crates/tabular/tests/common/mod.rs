//! Shared generators and independent oracles for the integration tests.
//!
//! Everything here recomputes quantities from first principles (finite
//! backward induction, Monte-Carlo rollouts, raw history recursion) so the
//! solver paths under test are never checked against themselves.
#![allow(dead_code)] // each test binary uses its own subset

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tdlab_tabular::{PolicyTable, TabularMdp, TaskDistribution};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dist_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let sum: f64 = row.iter().sum();
    for x in &mut row {
        *x /= sum;
    }
    // force an exact unit sum so validation at 1e-12 never trips
    let correction: f64 = 1.0 - row.iter().sum::<f64>();
    row[0] += correction;
    row
}

pub fn random_mdp(rng: &mut ChaCha8Rng, s_n: usize, a_n: usize, gamma: f64) -> TabularMdp {
    let mut dynamics = Vec::with_capacity(s_n * a_n * s_n);
    for _ in 0..s_n * a_n {
        dynamics.extend(random_dist_row(rng, s_n));
    }
    let reward: Vec<f64> = (0..s_n * a_n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let initial = random_dist_row(rng, s_n);
    TabularMdp::new(s_n, a_n, dynamics, reward, gamma, initial).unwrap()
}

/// Random deterministic-dynamics MDP (each (s,a) has a single successor).
pub fn random_det_mdp(rng: &mut ChaCha8Rng, s_n: usize, a_n: usize, gamma: f64) -> TabularMdp {
    let mut dynamics = vec![0.0; s_n * a_n * s_n];
    for s in 0..s_n {
        for a in 0..a_n {
            let sn = rng.gen_range(0..s_n);
            dynamics[(s * a_n + a) * s_n + sn] = 1.0;
        }
    }
    let reward: Vec<f64> = (0..s_n * a_n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let initial = random_dist_row(rng, s_n);
    TabularMdp::new(s_n, a_n, dynamics, reward, gamma, initial).unwrap()
}

pub fn random_distribution(
    rng: &mut ChaCha8Rng,
    s_n: usize,
    a_n: usize,
    m_n: usize,
    gamma: f64,
    deterministic_dynamics: bool,
) -> TaskDistribution {
    let base = if deterministic_dynamics {
        random_det_mdp(rng, s_n, a_n, gamma)
    } else {
        random_mdp(rng, s_n, a_n, gamma)
    };
    let base = base.with_reward(vec![0.0; s_n * a_n]).unwrap();
    let rewards: Vec<Vec<f64>> = (0..m_n)
        .map(|_| (0..s_n * a_n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let weights = random_dist_row(rng, m_n);
    TaskDistribution::new(base, rewards, weights).unwrap()
}

pub fn random_policy(rng: &mut ChaCha8Rng, s_n: usize, a_n: usize) -> PolicyTable {
    let mut probs = Vec::with_capacity(s_n * a_n);
    for _ in 0..s_n {
        probs.extend(random_dist_row(rng, a_n));
    }
    PolicyTable::new(s_n, a_n, probs).unwrap()
}

/// Oracle: horizon-limited backward induction of the optimal Q table.
pub fn backward_induction_q(mdp: &TabularMdp, horizon: usize) -> Vec<f64> {
    let (s_n, a_n) = (mdp.n_states(), mdp.n_actions());
    let mut q = vec![0.0f64; s_n * a_n];
    for _ in 0..horizon {
        let mut next = vec![0.0f64; s_n * a_n];
        for s in 0..s_n {
            for a in 0..a_n {
                let mut val = mdp.r(s, a);
                for (sn, &p) in mdp.p(s, a).iter().enumerate() {
                    if p > 0.0 {
                        let best = (0..a_n)
                            .map(|an| q[sn * a_n + an])
                            .fold(f64::NEG_INFINITY, f64::max);
                        val += mdp.gamma() * p * best;
                    }
                }
                next[s * a_n + a] = val;
            }
        }
        q = next;
    }
    q
}

pub fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let mut u: f64 = rng.gen();
    for (i, &p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Oracle: Monte-Carlo estimate of the discounted return with its standard
/// error. Episodes are truncated where the geometric tail is negligible.
pub fn mc_policy_return(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    episodes: usize,
    seed: u64,
) -> (f64, f64, f64) {
    let mut rng = rng(seed);
    let r_max = mdp
        .reward_table()
        .iter()
        .fold(0.0f64, |m, &x| m.max(x.abs()))
        .max(1e-12);
    let horizon =
        (((1e-10 * (1.0 - mdp.gamma())) / r_max).ln() / mdp.gamma().ln()).ceil() as usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..episodes {
        let mut s = sample_index(&mut rng, mdp.initial());
        let mut g = 0.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            let a = sample_index(&mut rng, policy.row(s));
            g += disc * mdp.r(s, a);
            disc *= mdp.gamma();
            s = sample_index(&mut rng, mdp.p(s, a));
        }
        sum += g;
        sum_sq += g * g;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt(), r_max)
}

/// Oracle: Monte-Carlo estimate of the normalized discounted occupancy,
/// returning per-state means and standard errors.
pub fn mc_occupancy(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    episodes: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng(seed);
    let horizon = ((1e-12f64).ln() / mdp.gamma().ln()).ceil() as usize;
    let s_n = mdp.n_states();
    let mut sum = vec![0.0f64; s_n];
    let mut sum_sq = vec![0.0f64; s_n];
    for _ in 0..episodes {
        let mut contrib = vec![0.0f64; s_n];
        let mut s = sample_index(&mut rng, mdp.initial());
        let mut disc = 1.0 - mdp.gamma();
        for _ in 0..horizon {
            contrib[s] += disc;
            disc *= mdp.gamma();
            let a = sample_index(&mut rng, policy.row(s));
            s = sample_index(&mut rng, mdp.p(s, a));
        }
        for (i, &c) in contrib.iter().enumerate() {
            sum[i] += c;
            sum_sq[i] += c * c;
        }
    }
    let n = episodes as f64;
    let mean: Vec<f64> = sum.iter().map(|&x| x / n).collect();
    let se: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(&sq, &m)| ((sq / n - m * m).max(0.0) / n).sqrt())
        .collect();
    (mean, se)
}

/// Oracle: best expected return over history policies up to `horizon`, by
/// raw recursion over histories. The consistent-task bookkeeping is done
/// inline with explicit weight lists, independent of the production quotient.
pub fn history_search_best(dist: &TaskDistribution, horizon: usize) -> f64 {
    let weights: Vec<f64> = dist.weights().to_vec();
    let tasks: Vec<usize> = (0..dist.n_tasks()).filter(|&m| weights[m] > 0.0).collect();
    let mut total = 0.0;
    for (s, &p) in dist.base().initial().iter().enumerate() {
        if p > 0.0 {
            total += p * history_value(dist, s, &tasks, &weights, horizon);
        }
    }
    total
}

fn history_value(
    dist: &TaskDistribution,
    s: usize,
    consistent: &[usize],
    weights: &[f64],
    steps_left: usize,
) -> f64 {
    if steps_left == 0 {
        return 0.0;
    }
    let w_total: f64 = consistent.iter().map(|&m| weights[m]).sum();
    let mut best = f64::NEG_INFINITY;
    for a in 0..dist.n_actions() {
        let mut val = 0.0;
        let mut done: Vec<usize> = Vec::new();
        for &m in consistent {
            if done.contains(&m) {
                continue;
            }
            let r = dist.reward(m, s, a);
            let group: Vec<usize> = consistent
                .iter()
                .copied()
                .filter(|&k| (dist.reward(k, s, a) - r).abs() <= 1e-9)
                .collect();
            done.extend(&group);
            let w_group: f64 = group.iter().map(|&k| weights[k]).sum();
            let mut cont = 0.0;
            for (sn, &p) in dist.base().p(s, a).iter().enumerate() {
                if p > 0.0 {
                    cont += p * history_value(dist, sn, &group, weights, steps_left - 1);
                }
            }
            val += (w_group / w_total) * (r + dist.gamma() * cont);
        }
        best = best.max(val);
    }
    best
}
