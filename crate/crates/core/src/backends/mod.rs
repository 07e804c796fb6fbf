//! Generation backends: an optimizer agent turns scored parents into a new
//! candidate agent, reporting the tokens it consumed.

mod remote;
mod scripted;

use std::time::Duration;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{extract_payload, pick_profile, render_prompt, EndpointProfile, RemoteBackend, API_KEY_ENV};
pub use scripted::{MetaOp, ScriptedBackend, Strategy, TaskOp};

use crate::population::{AgentKind, AgentRecord};

/// Synthetic token charge of the scripted backend: one token per four characters.
pub fn synthetic_tokens(len: usize) -> u64 {
    len.div_ceil(4) as u64
}

#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub operator: &'a AgentRecord<f64>,
    /// Parent payloads with their scores (task score or Elo rating).
    pub parents: Vec<(String, f64)>,
    pub target_kind: AgentKind,
    pub temperature: f64,
    pub max_output_tokens: u64,
    pub timeout: Duration,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub payload: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub backend_label: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("operator payload is malformed: {0}")]
    MalformedOperator(String),
    #[error("no usable parent: {0}")]
    BadParents(String),
    #[error("all {attempts} attempts failed, last error: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("backend misconfigured: {0}")]
    Config(String),
}

/// A failed generation still reports what it cost.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationFailure {
    pub error: GenerationError,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub backend_label: String,
}

impl GenerationFailure {
    pub fn free(error: GenerationError, backend_label: impl Into<String>) -> Self {
        Self {
            error,
            tokens_in: 0,
            tokens_out: 0,
            backend_label: backend_label.into(),
        }
    }
}

pub trait Backend: Send + Sync {
    fn label(&self) -> &str;

    fn generate(&self, req: &GenerationRequest<'_>, rng: &mut dyn RngCore) -> Result<GenerationResult, GenerationFailure>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    #[default]
    Scripted,
    RemoteChat,
}

/// Sampling temperatures, limits and timeouts applied to generation requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    pub task_temperature: f64,
    pub optimizer_temperature: f64,
    pub max_output_tokens: u64,
    pub task_timeout_secs: u64,
    pub optimizer_timeout_secs: u64,
    pub retries: u32,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            task_temperature: 0.7,
            optimizer_temperature: 1.0,
            max_output_tokens: 60_000,
            task_timeout_secs: 800,
            optimizer_timeout_secs: 1200,
            retries: 3,
        }
    }
}

impl GenerationSettings {
    pub fn temperature_for(&self, target: AgentKind) -> f64 {
        match target {
            AgentKind::Task => self.task_temperature,
            AgentKind::Optimizer => self.optimizer_temperature,
        }
    }

    pub fn timeout_for(&self, target: AgentKind) -> Duration {
        Duration::from_secs(match target {
            AgentKind::Task => self.task_timeout_secs,
            AgentKind::Optimizer => self.optimizer_timeout_secs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default)]
    pub mode: BackendMode,
    #[serde(default = "default_profiles")]
    pub profiles: Vec<EndpointProfile>,
    #[serde(default, flatten)]
    pub generation: GenerationSettings,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::Scripted,
            profiles: default_profiles(),
            generation: GenerationSettings::default(),
        }
    }
}

/// Two routes on one model: 80% with low thinking effort, 20% with the
/// provider default.
fn default_profiles() -> Vec<EndpointProfile> {
    let mut low = serde_json::Map::new();
    low.insert("reasoning_effort".into(), serde_json::Value::String("low".into()));
    vec![
        EndpointProfile {
            name: "flash-low".into(),
            url: "https://generativelanguage.googleapis.com/v1beta/openai/chat/completions".into(),
            model: "gemini-3-flash-preview".into(),
            weight: 0.8,
            options: low,
        },
        EndpointProfile {
            name: "flash-default".into(),
            url: "https://generativelanguage.googleapis.com/v1beta/openai/chat/completions".into(),
            model: "gemini-3-flash-preview".into(),
            weight: 0.2,
            options: serde_json::Map::new(),
        },
    ]
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.generation.task_temperature <= 0.0 || self.generation.optimizer_temperature <= 0.0 {
            return Err(GenerationError::Config("generation temperatures must be positive".into()));
        }
        if self.mode == BackendMode::RemoteChat {
            if self.profiles.is_empty() {
                return Err(GenerationError::Config("remote mode needs at least one profile".into()));
            }
            if self.profiles.iter().any(|p| !(p.weight >= 0.0 && p.weight.is_finite())) {
                return Err(GenerationError::Config("profile weights must be non-negative".into()));
            }
            let total: f64 = self.profiles.iter().map(|p| p.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(GenerationError::Config(format!("profile weights sum to {total}, expected 1")));
            }
        }
        Ok(())
    }
}
