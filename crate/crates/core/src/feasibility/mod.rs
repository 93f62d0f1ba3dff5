//! LCHV_k feasibility, CHSH optimization and classification evidence.

mod chsh;
mod classify;
mod lp;
mod strategies;

pub use chsh::{
    bell_polytope_oracle, chsh_maximize, chsh_maximize_angles, chsh_value, correlation_table, max_chsh_facet,
    plane_context, post_select, post_selected_qubits, standard_rank_two, ChshOptimum, ChshSettings, CorrelationTable,
    PolytopeMembership, TSIRELSON_GUARD,
};
pub use classify::{classify_evidence, classify_evidence_with, ClassificationRecord, ClassifyOptions, NBound, NEvidence};
pub use lp::{phase1, Phase1Solution};
pub use strategies::{
    enumerate_strategies, lchv_feasibility, FeasibilityResult, FeasibilityStatus, LocalStrategy, StrategySet,
    WeightedStrategy, Witness, WitnessTerm, DEFAULT_STRATEGY_BUDGET, LP_TOL,
};
