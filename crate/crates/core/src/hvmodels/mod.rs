//! Finite hidden-variables models, their constructions, and verification against
//! quantum sequence probabilities.

mod build;
mod context;
mod model;

pub use build::{
    collapse_model, couple_lchv_d2, deterministic_to_stochastic, extend_commuting_povm, mix_models,
    product_state_model, quantum_kernel_model, separable_model, stochastic_to_deterministic,
    trivial_causal_model, PureStateFamily, SharedSideModels,
};
pub use context::{Context, Layout, PathNode, PathTree, Shape};
pub use model::{
    quantum_node_table, verify_model, DeterministicModel, HvModel, StochasticModel, VerificationReport,
    DEFAULT_ATOM_BUDGET, DEFAULT_VERIFY_TOL, KERNEL_TOL, WEIGHT_TOL,
};
