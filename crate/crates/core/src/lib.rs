//! Closed-loop co-evolution of task agents and the optimizer agents that
//! rewrite them, with Elo ratings earned from the task scores each round
//! already produces.
//!
//! The math modules are generic over [`scalar::Scalar`]; the aliases below
//! fix the scalar to `f64`, which is what the engine and backends use.

pub mod backends;
pub mod cli;
pub mod config;
pub mod engine;
pub mod evaluators;
pub mod population;
pub mod rating;
pub mod report;
pub mod sampling;
pub mod scalar;

pub type AgentRecord = population::AgentRecord<f64>;
pub type Population = population::Population<f64>;
pub type EloLedger = rating::EloLedger<f64>;
pub type ResultMatrix = rating::ResultMatrix<f64>;
pub type SamplerConfig = sampling::SamplerConfig<f64>;
pub type Construction = evaluators::Construction<f64>;
pub type TaskSpec = evaluators::TaskSpec<f64>;
pub type EvalResult = evaluators::EvalResult<f64>;
pub type Evaluator = evaluators::Evaluator<f64>;

pub type AgentRecord32 = population::AgentRecord<f32>;
pub type EloLedger32 = rating::EloLedger<f32>;

pub use population::{AgentId, AgentKind};
pub use evaluators::TaskKind;
