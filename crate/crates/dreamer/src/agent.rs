//! Latent-imagination actor-critic over the world model's state space.
//!
//! The actor emits a tanh-squashed diagonal Gaussian; the critic regresses
//! exponentially weighted multi-step bootstrapped targets computed along
//! trajectories imagined through the (frozen) world model. Actor gradients
//! flow through the reparameterized latent dynamics; no likelihood-ratio
//! estimator is involved.

use rand_chacha::ChaCha8Rng;
use tdlab_autodiff::{optimizer_step, AdamConfig, AdamState, Graph, NodeId, Tensor};

use crate::nets::{Bound, Mlp, ParamSet};
use crate::rssm::{draw_noises, RssmState, StateNodes, WorldModel};

/// Which history class the acting policy realizes.
///
/// `Pi1` conditions on the current observation alone; `Pi2` on the latent of
/// a reward-blind recurrence; `Pi3` on the latent of the reward-informed
/// recurrence; `Pi2TaskId` appends a one-hot task id to the `Pi2` input and
/// exists only where task ids exist (training tasks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyClass {
    Pi1,
    Pi2,
    Pi3,
    Pi2TaskId,
}

impl PolicyClass {
    /// Whether the world model backing this class feeds rewards into the
    /// recurrence.
    pub fn reward_in_recurrence(self) -> bool {
        matches!(self, PolicyClass::Pi3)
    }

    /// Whether the objective's task-classification term is enabled.
    pub fn task_head_enabled(self) -> bool {
        matches!(self, PolicyClass::Pi3)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyClass::Pi1 => "pi1",
            PolicyClass::Pi2 => "pi2",
            PolicyClass::Pi3 => "pi3",
            PolicyClass::Pi2TaskId => "pi2_taskid",
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AgentConfig {
    /// Imagination horizon.
    pub horizon: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub entropy_weight: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub policy_class: PolicyClass,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            horizon: 15,
            lambda: 0.95,
            gamma: 0.99,
            entropy_weight: 1e-4,
            actor_lr: 8e-5,
            critic_lr: 8e-5,
            policy_class: PolicyClass::Pi3,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) {
        assert!(self.horizon >= 1, "horizon >= 1");
        assert!((0.0..=1.0).contains(&self.lambda), "lambda in [0,1]");
        assert!(self.gamma > 0.0 && self.gamma < 1.0, "gamma in (0,1)");
    }
}

/// Unsupported policy-input request.
#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("task-id policy inputs require a task id; unseen tasks have none")]
    TaskIdUnavailable,
    #[error("non-finite values during actor-critic update: {0}")]
    NonFinite(String),
}

/// Actor and critic heads with their optimizer state.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub config: AgentConfig,
    pub actor_params: ParamSet,
    pub critic_params: ParamSet,
    actor: Mlp,
    critic: Mlp,
    actor_state: AdamState,
    critic_state: AdamState,
    input_dim: usize,
    action_dim: usize,
    min_std: f64,
}

/// Diagnostics of one imagination update.
#[derive(Debug, Clone, Copy)]
pub struct AgentStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_lambda_return: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
}

/// Size of the actor input for a policy class.
pub fn policy_input_dim(
    class: PolicyClass,
    latent_dim: usize,
    obs_dim: usize,
    n_tasks: usize,
) -> usize {
    match class {
        PolicyClass::Pi1 => obs_dim,
        PolicyClass::Pi2 | PolicyClass::Pi3 => latent_dim,
        PolicyClass::Pi2TaskId => latent_dim + n_tasks,
    }
}

/// Assemble the actor input for a policy class.
///
/// `obs` must be the current observation (real during collection, decoded
/// during imagination) for `Pi1`; `task_onehot` must be present for
/// `Pi2TaskId` and is an error to omit there.
pub fn policy_inputs(
    g: &mut Graph,
    class: PolicyClass,
    state: &StateNodes,
    obs: Option<NodeId>,
    task_onehot: Option<NodeId>,
) -> Result<NodeId, AgentError> {
    match class {
        PolicyClass::Pi1 => Ok(obs.expect("observation input required for pi1")),
        PolicyClass::Pi2 | PolicyClass::Pi3 => Ok(g.concat(&[state.h, state.s])),
        PolicyClass::Pi2TaskId => {
            let onehot = task_onehot.ok_or(AgentError::TaskIdUnavailable)?;
            Ok(g.concat(&[state.h, state.s, onehot]))
        }
    }
}

/// Exponentially weighted multi-step returns.
///
/// `rewards[t]` pairs with `values[t + 1]`; the recursion is
/// `V(t) = r_t + gamma ((1 - lambda) v_{t+1} + lambda V(t+1))` with
/// `V(H) = v_H`, and the result has one node per reward step.
pub fn lambda_returns(
    g: &mut Graph,
    rewards: &[NodeId],
    values: &[NodeId],
    lambda: f64,
    gamma: f64,
) -> Vec<NodeId> {
    let h = rewards.len();
    assert_eq!(values.len(), h + 1, "need a bootstrap value per step plus one");
    let mut out = vec![NodeId(0); h];
    let mut next = values[h];
    for t in (0..h).rev() {
        let boot = g.affine(values[t + 1], gamma * (1.0 - lambda), 0.0);
        let carried = g.affine(next, gamma * lambda, 0.0);
        let mix = g.add(boot, carried);
        let v = g.add(rewards[t], mix);
        out[t] = v;
        next = v;
    }
    out
}

impl ActorCritic {
    pub fn new(config: AgentConfig, wm: &WorldModel, seed: u64) -> Self {
        use rand::SeedableRng;
        config.validate();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input_dim = policy_input_dim(
            config.policy_class,
            wm.config.latent_dim(),
            wm.config.obs_dim,
            wm.config.n_tasks,
        );
        let action_dim = wm.config.action_dim;
        let mut actor_params = ParamSet::new();
        let actor = Mlp::new(
            &mut actor_params,
            "actor",
            input_dim,
            wm.config.width,
            2 * action_dim,
            false,
            &mut rng,
        );
        let mut critic_params = ParamSet::new();
        let critic = Mlp::new(
            &mut critic_params,
            "critic",
            wm.config.latent_dim(),
            wm.config.width,
            1,
            false,
            &mut rng,
        );
        let actor_state = AdamState::new(actor_params.tensors());
        let critic_state = AdamState::new(critic_params.tensors());
        Self {
            config,
            actor_params,
            critic_params,
            actor,
            critic,
            actor_state,
            critic_state,
            input_dim,
            action_dim,
            min_std: 0.01,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Tanh-Gaussian parameters (pre-squash mean and std).
    pub fn actor_dist(
        &self,
        g: &mut Graph,
        actor_bound: &Bound,
        input: NodeId,
    ) -> (NodeId, NodeId) {
        let raw = self.actor.forward(g, actor_bound, input);
        let mean = g.slice_cols(raw, 0, self.action_dim);
        let raw_std = g.slice_cols(raw, self.action_dim, self.action_dim);
        let sp = g.softplus(raw_std);
        let std = g.affine(sp, 1.0, self.min_std);
        (mean, std)
    }

    /// Squashed sample `tanh(mean + std noise)`; always inside (-1, 1).
    pub fn sample_action(
        &self,
        g: &mut Graph,
        actor_bound: &Bound,
        input: NodeId,
        noise: NodeId,
    ) -> NodeId {
        let (mean, std) = self.actor_dist(g, actor_bound, input);
        let pre = g.reparam_sample(mean, std, noise);
        g.tanh(pre)
    }

    /// Deterministic action `tanh(mean)`.
    pub fn mean_action(&self, g: &mut Graph, actor_bound: &Bound, input: NodeId) -> NodeId {
        let (mean, _) = self.actor_dist(g, actor_bound, input);
        g.tanh(mean)
    }

    pub fn value(&self, g: &mut Graph, critic_bound: &Bound, latent: NodeId) -> NodeId {
        self.critic.forward(g, critic_bound, latent)
    }

    /// Build the full imagination graph from replayed posterior states:
    /// actor rollouts through the world model, multi-step returns, and both
    /// losses. Noise tensors are supplied by the caller so the whole graph
    /// is a deterministic function of the parameters.
    pub fn build_imagination(
        &self,
        wm: &WorldModel,
        start: &RssmState,
        start_task_onehot: Option<&Tensor>,
        action_noises: &[Tensor],
        latent_noises: &[Tensor],
    ) -> Result<ImaginationGraph, AgentError> {
        let cfg = &self.config;
        let b = start.h.shape()[0];
        let h_len = cfg.horizon;
        assert_eq!(action_noises.len(), h_len);
        assert_eq!(latent_noises.len(), h_len);
        let mut g = Graph::new();
        let wm_bound = wm.bind(&mut g);
        let actor_bound = self.actor_params.bind(&mut g);
        let critic_bound = self.critic_params.bind(&mut g);

        let onehot_node = start_task_onehot.map(|t| g.input(t.clone()));
        let mut state = StateNodes {
            h: g.input(start.h.clone()),
            s: g.input(start.s.clone()),
            prior_mean: NodeId(0),
            prior_std: NodeId(0),
            post_mean: None,
            post_std: None,
        };
        let mut rewards: Vec<NodeId> = Vec::with_capacity(h_len);
        let mut latents: Vec<NodeId> = Vec::with_capacity(h_len + 1);
        let mut entropies: Vec<NodeId> = Vec::with_capacity(h_len);
        latents.push(g.concat(&[state.h, state.s]));
        for t in 0..h_len {
            let obs = match cfg.policy_class {
                PolicyClass::Pi1 => Some(wm.decode_obs(&mut g, &wm_bound, &state)),
                _ => None,
            };
            let input = policy_inputs(&mut g, cfg.policy_class, &state, obs, onehot_node)?;
            let (mean, std) = self.actor_dist(&mut g, &actor_bound, input);
            let ent = g.ln(std);
            let ent = g.mean_all(ent); // entropy up to a constant per dimension
            entropies.push(ent);
            let noise = g.input(action_noises[t].clone());
            let pre = g.reparam_sample(mean, std, noise);
            let action = g.tanh(pre);
            let lnoise = g.input(latent_noises[t].clone());
            let (next_state, pred_reward) =
                wm.imagine_step(&mut g, &wm_bound, state.h, state.s, action, lnoise);
            rewards.push(pred_reward);
            latents.push(g.concat(&[next_state.h, next_state.s]));
            state = next_state;
        }
        let values: Vec<NodeId> = latents
            .iter()
            .map(|&l| self.value(&mut g, &critic_bound, l))
            .collect();
        let returns = lambda_returns(&mut g, &rewards, &values, cfg.lambda, cfg.gamma);

        // actor objective: maximize returns plus a small entropy bonus
        let stacked = g.concat(&returns);
        let mean_return = g.mean_all(stacked);
        let ent_stack = g.concat(&entropies);
        let ent_mean = g.mean_all(ent_stack);
        let neg_return = g.affine(mean_return, -1.0, 0.0);
        let ent_term = g.affine(ent_mean, -cfg.entropy_weight, 0.0);
        let actor_loss = g.add(neg_return, ent_term);

        // critic regression on detached latents toward detached targets
        let mut sq_sum: Option<NodeId> = None;
        for t in 0..h_len {
            let detached = g.stop_grad(latents[t]);
            let v = self.value(&mut g, &critic_bound, detached);
            let target = g.stop_grad(returns[t]);
            let diff = g.sub(v, target);
            let sq = g.mul(diff, diff);
            let sq = g.sum_all(sq);
            sq_sum = Some(match sq_sum {
                Some(acc) => g.add(acc, sq),
                None => sq,
            });
        }
        let critic_loss = g.affine(sq_sum.unwrap(), 1.0 / (h_len * b) as f64, 0.0);
        Ok(ImaginationGraph {
            graph: g,
            actor_bound,
            critic_bound,
            actor_loss,
            critic_loss,
            mean_return,
        })
    }

    /// Imagine `horizon` steps from replayed posterior states through the
    /// frozen world model and update both heads. World-model parameters
    /// receive gradients on the tape but are never updated here.
    pub fn train_step(
        &mut self,
        wm: &WorldModel,
        start: &RssmState,
        start_task_onehot: Option<&Tensor>,
        rng: &mut ChaCha8Rng,
    ) -> Result<AgentStats, AgentError> {
        let b = start.h.shape()[0];
        let action_noises = draw_noises(rng, self.config.horizon, b, self.action_dim);
        let latent_noises = draw_noises(rng, self.config.horizon, b, wm.config.h_sto);
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            let im = self.build_imagination(
                wm,
                start,
                start_task_onehot,
                &action_noises,
                &latent_noises,
            )?;
            let g = &im.graph;
            let actor_grads_all = g.backward(im.actor_loss);
            let actor_grads = im.actor_bound.gradients(&self.actor_params, &actor_grads_all);
            let critic_grads_all = g.backward(im.critic_loss);
            let critic_grads = im
                .critic_bound
                .gradients(&self.critic_params, &critic_grads_all);
            let stats = AgentStats {
                actor_loss: g.value(im.actor_loss).item(),
                critic_loss: g.value(im.critic_loss).item(),
                mean_lambda_return: g.value(im.mean_return).item(),
                actor_grad_norm: 0.0,
                critic_grad_norm: 0.0,
            };
            let actor_norm = optimizer_step(
                self.actor_params.tensors_mut(),
                &actor_grads,
                &mut self.actor_state,
                &AdamConfig::with_lr(self.config.actor_lr),
            );
            let critic_norm = optimizer_step(
                self.critic_params.tensors_mut(),
                &critic_grads,
                &mut self.critic_state,
                &AdamConfig::with_lr(self.config.critic_lr),
            );
            Ok(AgentStats {
                actor_grad_norm: actor_norm,
                critic_grad_norm: critic_norm,
                ..stats
            })
        }))
        .map_err(|e| AgentError::NonFinite(crate::rssm::panic_text(e)))?
    }
}

/// A built imagination tape with its loss nodes and parameter bindings.
pub struct ImaginationGraph {
    pub graph: Graph,
    pub actor_bound: Bound,
    pub critic_bound: Bound,
    pub actor_loss: NodeId,
    pub critic_loss: NodeId,
    pub mean_return: NodeId,
}
