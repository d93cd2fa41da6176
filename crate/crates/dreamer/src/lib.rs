//! Reward-informed world model, latent-imagination actor-critic, and toy
//! task-distribution environments.
//!
//! The model and agent are written against the in-repo tape engine; the
//! environments realize shared-dynamics task families on a damped point
//! mass plus a one-hot adapter for tabular distributions.

pub mod agent;
pub mod env;
pub mod nets;
pub mod rssm;

pub use agent::{
    lambda_returns, policy_input_dim, policy_inputs, ActorCritic, AgentConfig, AgentError,
    AgentStats, ImaginationGraph, PolicyClass,
};
pub use env::{
    sparsify, tolerance, BandVariant, PointEnv, PointTaskDistribution, Split, TabularAdapterEnv,
    TaskEnv, ToleranceSpec,
};
pub use nets::{Bound, GruCell, Linear, Mlp, ParamId, ParamSet};
pub use rssm::{
    draw_noises, standard_normal, ElboTerms, RssmState, SequenceBatch, StateNodes, WorldModel,
    WorldModelConfig, WorldModelError,
};
