//! Reward-informed recurrent state-space model.
//!
//! A gated recurrent cell carries the deterministic latent; a stochastic
//! latent is sampled from a learned prior (from the recurrent state) or a
//! learned posterior (recurrent state plus the embedded observation). The
//! recurrent input embeds the previous stochastic latent, the previous
//! action and, when `reward_in_recurrence` is set, the previous reward:
//! that single flag is the difference between a history-of-states-and-
//! actions backbone and one whose hidden state can carry task-identifying
//! reward evidence. Decoders reconstruct observations and rewards with unit
//! variance, and a classifier head over the training tasks provides the
//! objective's task term.
//!
//! Rewards follow the arrived-at convention: the reward stored with
//! observation `o_t` is the one received on the transition into `o_t`, the
//! first step of an episode carrying zero. The same value feeds the
//! recurrence and the reward decoder target at step `t`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tdlab_autodiff::{Graph, NodeId, Tensor};

use crate::nets::{Bound, GruCell, Mlp, ParamSet};

/// Sizes and ablation switches of the world model.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WorldModelConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Number of training tasks (width of the task head).
    pub n_tasks: usize,
    pub h_det: usize,
    pub h_sto: usize,
    pub width: usize,
    pub min_std: f64,
    pub free_bits: f64,
    pub beta_task: f64,
    /// Feed the previous reward into the recurrent cell.
    pub reward_in_recurrence: bool,
    /// Include the task-classification term in the loss.
    pub task_head_enabled: bool,
}

impl WorldModelConfig {
    pub fn new(obs_dim: usize, action_dim: usize, n_tasks: usize) -> Self {
        Self {
            obs_dim,
            action_dim,
            n_tasks,
            h_det: 64,
            h_sto: 16,
            width: 128,
            min_std: 0.1,
            free_bits: 1.0,
            beta_task: 1.0,
            reward_in_recurrence: true,
            task_head_enabled: true,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.h_det + self.h_sto
    }
}

/// Latent state as plain tensors (outside any tape).
#[derive(Debug, Clone)]
pub struct RssmState {
    pub h: Tensor,
    pub s: Tensor,
}

impl RssmState {
    pub fn zeros(batch: usize, config: &WorldModelConfig) -> Self {
        Self {
            h: Tensor::zeros(vec![batch, config.h_det]),
            s: Tensor::zeros(vec![batch, config.h_sto]),
        }
    }
}

/// Per-step latent nodes inside a tape.
#[derive(Debug, Clone, Copy)]
pub struct StateNodes {
    pub h: NodeId,
    pub s: NodeId,
    pub prior_mean: NodeId,
    pub prior_std: NodeId,
    /// Present when the step was conditioned on an observation.
    pub post_mean: Option<NodeId>,
    pub post_std: Option<NodeId>,
}

/// One training batch of aligned subsequences.
///
/// `obs[t]`, `prev_action[t]` and `prev_reward[t]` all have one row per
/// sequence; `prev_*` carry the action/reward entering step `t` (zeros at an
/// episode start). `task_ids` give the task of each row, also one-hot in
/// `task_onehot`.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub obs: Vec<Tensor>,
    pub prev_action: Vec<Tensor>,
    pub prev_reward: Vec<Tensor>,
    pub task_onehot: Tensor,
    pub task_ids: Vec<usize>,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.task_ids.len()
    }

    pub fn validate(&self, config: &WorldModelConfig) {
        assert_eq!(self.obs.len(), self.prev_action.len(), "aligned lengths");
        assert_eq!(self.obs.len(), self.prev_reward.len(), "aligned lengths");
        let b = self.batch_size();
        for t in 0..self.obs.len() {
            assert_eq!(self.obs[t].shape(), &[b, config.obs_dim]);
            assert_eq!(self.prev_action[t].shape(), &[b, config.action_dim]);
            assert_eq!(self.prev_reward[t].shape(), &[b, 1]);
        }
        assert_eq!(self.task_onehot.shape(), &[b, config.n_tasks]);
    }
}

/// Loss terms of one batch. Reported values are per-position means; the kl
/// value is the raw divergence before free-bits flooring, while the total
/// uses the floored term.
#[derive(Debug, Clone, Copy)]
pub struct ElboTerms {
    pub total: NodeId,
    pub total_value: f64,
    pub obs_nll: f64,
    pub reward_nll: f64,
    pub kl_raw: f64,
    pub task_nll: f64,
}

/// A world-model failure that halts training.
#[derive(Debug, thiserror::Error)]
pub enum WorldModelError {
    #[error("non-finite values while processing step {step}: {message}")]
    NonFinite { step: usize, message: String },
}

/// The five-component reward-informed model over one parameter set.
#[derive(Debug, Clone)]
pub struct WorldModel {
    pub config: WorldModelConfig,
    pub params: ParamSet,
    input_embed: Mlp,
    gru: GruCell,
    prior_net: Mlp,
    obs_embed: Mlp,
    posterior_net: Mlp,
    obs_decoder: Mlp,
    reward_decoder: Mlp,
    task_head: Mlp,
}

impl WorldModel {
    pub fn new(config: WorldModelConfig, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let rec_in = config.h_sto
            + config.action_dim
            + if config.reward_in_recurrence { 1 } else { 0 };
        let w = config.width;
        let input_embed = Mlp::new(&mut params, "wm.embed", rec_in, w, w, true, &mut rng);
        let gru = GruCell::new(&mut params, "wm.gru", w, config.h_det, &mut rng);
        let prior_net = Mlp::new(&mut params, "wm.prior", config.h_det, w, 2 * config.h_sto, false, &mut rng);
        let obs_embed = Mlp::new(&mut params, "wm.obs_embed", config.obs_dim, w, w, true, &mut rng);
        let posterior_net = Mlp::new(
            &mut params,
            "wm.posterior",
            config.h_det + w,
            w,
            2 * config.h_sto,
            false,
            &mut rng,
        );
        let latent = config.latent_dim();
        let obs_decoder = Mlp::new(&mut params, "wm.obs_dec", latent, w, config.obs_dim, false, &mut rng);
        let reward_decoder = Mlp::new(&mut params, "wm.rew_dec", latent, w, 1, false, &mut rng);
        let task_head = Mlp::new(&mut params, "wm.task_head", latent, w, config.n_tasks, false, &mut rng);
        Self {
            config,
            params,
            input_embed,
            gru,
            prior_net,
            obs_embed,
            posterior_net,
            obs_decoder,
            reward_decoder,
            task_head,
        }
    }

    pub fn bind(&self, g: &mut Graph) -> Bound {
        self.params.bind(g)
    }

    fn split_stats(&self, g: &mut Graph, raw: NodeId) -> (NodeId, NodeId) {
        let mean = g.slice_cols(raw, 0, self.config.h_sto);
        let raw_std = g.slice_cols(raw, self.config.h_sto, self.config.h_sto);
        let sp = g.softplus(raw_std);
        let std = g.affine(sp, 1.0, self.config.min_std);
        (mean, std)
    }

    /// Advance the deterministic latent with the embedded (s, a, r) input.
    fn recurrent_step(
        &self,
        g: &mut Graph,
        bound: &Bound,
        prev_h: NodeId,
        prev_s: NodeId,
        action: NodeId,
        reward: NodeId,
    ) -> NodeId {
        let input = if self.config.reward_in_recurrence {
            g.concat(&[prev_s, action, reward])
        } else {
            g.concat(&[prev_s, action])
        };
        let embedded = self.input_embed.forward(g, bound, input);
        self.gru.forward(g, bound, embedded, prev_h)
    }

    /// One filtering step: prior from the recurrent state, posterior from
    /// the recurrent state plus the embedded observation, latent sampled
    /// from the posterior by reparameterization.
    #[allow(clippy::too_many_arguments)]
    pub fn observe_step(
        &self,
        g: &mut Graph,
        bound: &Bound,
        prev_h: NodeId,
        prev_s: NodeId,
        action: NodeId,
        reward: NodeId,
        obs: NodeId,
        noise: NodeId,
    ) -> StateNodes {
        let h = self.recurrent_step(g, bound, prev_h, prev_s, action, reward);
        let prior_raw = self.prior_net.forward(g, bound, h);
        let (prior_mean, prior_std) = self.split_stats(g, prior_raw);
        let embedded = self.obs_embed.forward(g, bound, obs);
        let joined = g.concat(&[h, embedded]);
        let post_raw = self.posterior_net.forward(g, bound, joined);
        let (post_mean, post_std) = self.split_stats(g, post_raw);
        let s = g.reparam_sample(post_mean, post_std, noise);
        StateNodes {
            h,
            s,
            prior_mean,
            prior_std,
            post_mean: Some(post_mean),
            post_std: Some(post_std),
        }
    }

    /// One imagination step: the recurrence consumes the model's own reward
    /// prediction at the current state (the environment reward does not
    /// exist here), and the latent is sampled from the prior.
    pub fn imagine_step(
        &self,
        g: &mut Graph,
        bound: &Bound,
        prev_h: NodeId,
        prev_s: NodeId,
        action: NodeId,
        noise: NodeId,
    ) -> (StateNodes, NodeId) {
        let prev_latent = g.concat(&[prev_h, prev_s]);
        let reward_input = self.reward_decoder.forward(g, bound, prev_latent);
        let h = self.recurrent_step(g, bound, prev_h, prev_s, action, reward_input);
        let prior_raw = self.prior_net.forward(g, bound, h);
        let (prior_mean, prior_std) = self.split_stats(g, prior_raw);
        let s = g.reparam_sample(prior_mean, prior_std, noise);
        let state = StateNodes {
            h,
            s,
            prior_mean,
            prior_std,
            post_mean: None,
            post_std: None,
        };
        let latent = g.concat(&[h, s]);
        let predicted_reward = self.reward_decoder.forward(g, bound, latent);
        (state, predicted_reward)
    }

    /// Filter a whole batch of subsequences. `noises[t]` supplies the
    /// reparameterization noise for step `t`. Non-finite values anywhere
    /// halt with the step index.
    pub fn observe_sequence(
        &self,
        g: &mut Graph,
        bound: &Bound,
        batch: &SequenceBatch,
        initial: &RssmState,
        noises: &[Tensor],
    ) -> Result<Vec<StateNodes>, WorldModelError> {
        batch.validate(&self.config);
        assert_eq!(noises.len(), batch.len(), "one noise tensor per step");
        let mut states = Vec::with_capacity(batch.len());
        let mut prev_h = g.input(initial.h.clone());
        let mut prev_s = g.input(initial.s.clone());
        for t in 0..batch.len() {
            let step = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                let action = g.input(batch.prev_action[t].clone());
                let reward = g.input(batch.prev_reward[t].clone());
                let obs = g.input(batch.obs[t].clone());
                let noise = g.input(noises[t].clone());
                self.observe_step(g, bound, prev_h, prev_s, action, reward, obs, noise)
            }))
            .map_err(|e| WorldModelError::NonFinite {
                step: t,
                message: panic_text(e),
            })?;
            prev_h = step.h;
            prev_s = step.s;
            states.push(step);
        }
        Ok(states)
    }

    /// Observation-decoder mean for a latent state.
    pub fn decode_obs(&self, g: &mut Graph, bound: &Bound, state: &StateNodes) -> NodeId {
        let latent = g.concat(&[state.h, state.s]);
        self.obs_decoder.forward(g, bound, latent)
    }

    /// Reward-decoder mean for a latent state.
    pub fn decode_reward(&self, g: &mut Graph, bound: &Bound, state: &StateNodes) -> NodeId {
        let latent = g.concat(&[state.h, state.s]);
        self.reward_decoder.forward(g, bound, latent)
    }

    /// Task-head logits for a latent state.
    pub fn task_logits(&self, g: &mut Graph, bound: &Bound, state: &StateNodes) -> NodeId {
        let latent = g.concat(&[state.h, state.s]);
        self.task_head.forward(g, bound, latent)
    }

    /// Sequence objective: unit-variance reconstruction of observations and
    /// rewards, the posterior-to-prior divergence floored by free bits, and
    /// the task-classification term when enabled.
    pub fn elbo_loss(
        &self,
        g: &mut Graph,
        bound: &Bound,
        batch: &SequenceBatch,
        initial: &RssmState,
        noises: &[Tensor],
    ) -> Result<(ElboTerms, Vec<StateNodes>), WorldModelError> {
        let states = self.observe_sequence(g, bound, batch, initial, noises)?;
        let t_len = batch.len();
        assert!(t_len > 0, "elbo over an empty sequence");
        let b = batch.batch_size();
        let ones = Tensor::new(vec![b, self.config.obs_dim], vec![1.0; b * self.config.obs_dim]);
        let ones_r = Tensor::new(vec![b, 1], vec![1.0; b]);

        let build = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            let mut obs_lp_sum: Option<NodeId> = None;
            let mut rew_lp_sum: Option<NodeId> = None;
            let mut kl_raw_sum: Option<NodeId> = None;
            let mut kl_floor_sum: Option<NodeId> = None;
            let mut task_lp_sum: Option<NodeId> = None;
            let add_to = |g: &mut Graph, acc: &mut Option<NodeId>, x: NodeId| {
                *acc = Some(match *acc {
                    Some(a) => g.add(a, x),
                    None => x,
                });
            };
            for (t, state) in states.iter().enumerate() {
                let obs_mean = self.decode_obs(g, bound, state);
                let obs_target = g.input(batch.obs[t].clone());
                let obs_std = g.input(ones.clone());
                let obs_lp = g.gaussian_log_prob(obs_target, obs_mean, obs_std);
                let obs_lp = g.sum_all(obs_lp);
                add_to(g, &mut obs_lp_sum, obs_lp);

                let rew_mean = self.decode_reward(g, bound, state);
                let rew_target = g.input(batch.prev_reward[t].clone());
                let rew_std = g.input(ones_r.clone());
                let rew_lp = g.gaussian_log_prob(rew_target, rew_mean, rew_std);
                let rew_lp = g.sum_all(rew_lp);
                add_to(g, &mut rew_lp_sum, rew_lp);

                let kl = g.diag_gaussian_kl(
                    state.post_mean.expect("posterior step"),
                    state.post_std.expect("posterior step"),
                    state.prior_mean,
                    state.prior_std,
                );
                let kl_sum = g.sum_all(kl);
                add_to(g, &mut kl_raw_sum, kl_sum);
                let floored = g.clamp_min(kl, self.config.free_bits);
                let floored = g.sum_all(floored);
                add_to(g, &mut kl_floor_sum, floored);

                let logits = self.task_logits(g, bound, state);
                let log_probs = g.log_softmax(logits);
                let onehot = g.input(batch.task_onehot.clone());
                let picked = g.mul(log_probs, onehot);
                let task_lp = g.sum_all(picked);
                add_to(g, &mut task_lp_sum, task_lp);
            }
            let positions = (b * t_len) as f64;
            let scale = 1.0 / positions;
            let obs_nll = g.affine(obs_lp_sum.unwrap(), -scale, 0.0);
            let rew_nll = g.affine(rew_lp_sum.unwrap(), -scale, 0.0);
            let kl_raw = g.affine(kl_raw_sum.unwrap(), scale, 0.0);
            let kl_floored = g.affine(kl_floor_sum.unwrap(), scale, 0.0);
            let task_nll = g.affine(task_lp_sum.unwrap(), -scale, 0.0);

            let mut total = g.add(obs_nll, rew_nll);
            total = g.add(total, kl_floored);
            if self.config.task_head_enabled {
                let weighted = g.affine(task_nll, self.config.beta_task, 0.0);
                total = g.add(total, weighted);
            }
            (total, obs_nll, rew_nll, kl_raw, task_nll)
        }))
        .map_err(|e| WorldModelError::NonFinite {
            step: t_len,
            message: panic_text(e),
        })?;

        let (total, obs_nll, rew_nll, kl_raw, task_nll) = build;
        let terms = ElboTerms {
            total,
            total_value: g.value(total).item(),
            obs_nll: g.value(obs_nll).item(),
            reward_nll: g.value(rew_nll).item(),
            kl_raw: g.value(kl_raw).item(),
            task_nll: g.value(task_nll).item(),
        };
        Ok((terms, states))
    }

    /// Fraction of positions from the second step on where the task head's
    /// argmax matches the true task.
    pub fn task_accuracy(&self, batch: &SequenceBatch, initial: &RssmState, seed: u64) -> f64 {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noises = draw_noises(&mut rng, batch.len(), batch.batch_size(), self.config.h_sto);
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let states = self
            .observe_sequence(&mut g, &bound, batch, initial, &noises)
            .expect("finite forward pass");
        let b = batch.batch_size();
        let mut correct = 0usize;
        let mut total = 0usize;
        for (t, state) in states.iter().enumerate() {
            if t < 1 {
                continue; // no reward evidence has entered the recurrence yet
            }
            let logits = self.task_logits(&mut g, &bound, state);
            let v = g.value(logits);
            for row in 0..b {
                let r = v.row(row);
                let argmax = r
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                if argmax == batch.task_ids[row] {
                    correct += 1;
                }
                total += 1;
            }
        }
        if total == 0 {
            return 0.0;
        }
        correct as f64 / total as f64
    }
}

/// Standard-normal noise tensors for `len` steps of a `batch x dim` latent.
pub fn draw_noises(rng: &mut ChaCha8Rng, len: usize, batch: usize, dim: usize) -> Vec<Tensor> {
    (0..len)
        .map(|_| {
            let data = (0..batch * dim).map(|_| standard_normal(rng)).collect();
            Tensor::new(vec![batch, dim], data)
        })
        .collect()
}

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub(crate) fn panic_text(e: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = e.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = e.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-finite value".to_string()
    }
}
