//! Local and causal hidden-variables models for bipartite quantum states: Werner
//! states, sequential measurements, model constructions, and LP feasibility.

pub mod acceptance;
pub mod error;
pub mod feasibility;
pub mod hilbert;
pub mod hvmodels;
pub mod io;
pub mod measurement;
pub mod sampling;
pub mod states;

pub use error::{Error, Result};
