//! Search-based unit test generation with adaptive fitness function
//! selection.
//!
//! A genetic algorithm evolves whole test suites for programs written in
//! MiniJ, a small imperative language bundled in [`minilang`]. Which fitness
//! functions guide the search is itself chosen online by a reinforcement
//! learning agent ([`affs`]): a UCB bandit or a differential semi-gradient
//! Sarsa agent with linear function approximation.

pub mod affs;
pub mod distance;
pub mod engine;
pub mod fitness;
pub mod harness;
pub mod minilang;
pub mod mutation;
pub mod testmodel;

pub use affs::{Action, ActionSpace, Goal, StrategySpec};
pub use engine::{run_search, run_search_with, Budget, EngineConfig, SearchResult};
pub use fitness::FitnessFunctionId;
pub use minilang::{parse, Program};
pub use testmodel::{TestCase, TestSuite};

pub type UcbAgent = affs::UcbAgent<f64>;
pub type SarsaAgent = affs::SarsaAgent<f64>;
pub type FeatureVector = affs::FeatureVector<f64>;
