//! Deterministic round-based simulator of the ledger's network: consensus,
//! storage, and client nodes with a bounded delay, scripted adversaries, and
//! checkers for the availability soundness and agreement definitions.
//!
//! See [`config::ScenarioConfig`] for the scenario file schema and
//! [`trace::Trace`] for what a run records.

pub mod config;
pub mod engine;
pub mod trace;

pub use config::{
    Adversary, AppSetup, BlockPlan, ChainParams, NodeKind, NodeSpec, Rule, ScenarioConfig,
    SimError, Workload,
};
pub use engine::run_scenario;
pub use trace::{check_agreement, check_soundness, Trace};
