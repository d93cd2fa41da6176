//! Exact theory engine for task distributions of finite MDPs.
//!
//! Tasks share dynamics, discount and initial distribution and differ only
//! in reward tables. The crate provides dense tabular models with validated
//! invariants, SCC-accelerated value iteration, exact policy evaluation and
//! occupancy measures, the state-wise task-distribution relevance metric and
//! its gap certificates, task posteriors over reward-annotated histories,
//! the consistency-set quotient MDP whose optimum realizes the value of full
//! reward memory, worst-case chain constructions, hypothesis-class
//! enumeration under partial dynamics data, and a plain-text table format.

pub mod augmented;
pub mod belief;
pub mod constructions;
pub mod decomposition;
pub mod distribution;
pub mod error;
pub mod hypothesis;
pub mod mdp;
pub mod solver;
pub mod textio;

pub use augmented::{build_augmented_mdp, pi3_optimal_return, AugmentedMdp, TaskSet};
pub use belief::{task_posterior, BeliefState, History};
pub use constructions::{build_b5, build_b7, B5Build, B5Params};
pub use decomposition::{
    b7_best_return, finite_horizon_best_return, theorem4_decomposition, Thm4Report,
};
pub use distribution::{
    performance_difference_check, GapCertificate, PerfDiffReport, SolvedTasks, TaskDistribution,
};
pub use error::{Result, TabularError};
pub use hypothesis::{h1_membership_test, hypothesis_sets, ContainmentReport, TransitionDataset};
pub use mdp::{OccupancyMeasure, PolicyTable, QTable, TabularMdp};
pub use solver::{occupancy, policy_return, policy_values, value_iteration};
