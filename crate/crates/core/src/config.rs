//! TOML run configuration.
//!
//! ```toml
//! task = "cp"              # kn | cp | ht
//! seed = 7                 # or "entropy"
//! budget = 50000.0         # equivalent tokens
//! out_dir = "runs/cp"
//!
//! [seeds]                  # paths relative to this file; empty lists use built-ins
//! tasks = ["seeds/grid.json"]
//! optimizers = ["seeds/gauss.json"]
//!
//! [loop]                   # every LoopConfig field, all optional
//! cohort_size = 4
//! max_iterations = 200
//! [loop.temperatures]
//! matchmaking = 1.2
//!
//! [evaluator]
//! timeout_secs = 120
//! tolerance = 1e-9
//! interpreter = ["python3"]
//! memory_mb = 2048
//!
//! [backend]                # BackendConfig; mode = "scripted" | "remote_chat"
//! mode = "scripted"
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendConfig, BackendMode, Strategy};
use crate::engine::{LoopConfig, DEFAULT_BUDGET};
use crate::evaluators::{triangle_vertices, Circle, Construction, ExecConfig, Point, TaskKind, TaskSpec, DEFAULT_TOLERANCE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Fixed RNG seed, or `"entropy"` to draw one at start-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSetting {
    Fixed(u64),
    Named(EntropyTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyTag {
    Entropy,
}

impl Default for SeedSetting {
    fn default() -> Self {
        SeedSetting::Fixed(0)
    }
}

impl std::str::FromStr for SeedSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("entropy") {
            return Ok(SeedSetting::Named(EntropyTag::Entropy));
        }
        s.parse::<u64>()
            .map(SeedSetting::Fixed)
            .map_err(|_| format!("seed must be an integer or \"entropy\", got `{s}`"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedPaths {
    pub tasks: Vec<PathBuf>,
    pub optimizers: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorSection {
    pub timeout_secs: f64,
    pub tolerance: f64,
    pub interpreter: Vec<String>,
    pub memory_mb: Option<u64>,
}

impl Default for EvaluatorSection {
    fn default() -> Self {
        let exec = ExecConfig::default();
        Self {
            timeout_secs: 120.0,
            tolerance: DEFAULT_TOLERANCE,
            interpreter: exec.interpreter,
            memory_mb: exec.memory_mb,
        }
    }
}

impl EvaluatorSection {
    pub fn spec(&self, task: TaskKind) -> TaskSpec<f64> {
        TaskSpec::for_task(task)
            .with_timeout(Duration::from_secs_f64(self.timeout_secs))
            .with_tolerance(self.tolerance)
    }

    pub fn exec(&self) -> ExecConfig {
        ExecConfig {
            interpreter: self.interpreter.clone(),
            memory_mb: self.memory_mb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub task: TaskKind,
    #[serde(default)]
    pub seed: SeedSetting,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seeds: SeedPaths,
    #[serde(default, rename = "loop")]
    pub loop_cfg: LoopConfig,
    #[serde(default)]
    pub evaluator: EvaluatorSection,
    #[serde(default)]
    pub backend: BackendConfig,
}

fn default_budget() -> f64 {
    DEFAULT_BUDGET
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("run")
}

impl RunConfigFile {
    pub fn new(task: TaskKind) -> Self {
        Self {
            task,
            seed: SeedSetting::default(),
            budget: DEFAULT_BUDGET,
            out_dir: default_out_dir(),
            seeds: SeedPaths::default(),
            loop_cfg: LoopConfig::default(),
            evaluator: EvaluatorSection::default(),
            backend: BackendConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(ConfigError::Invalid("budget must be a positive number".into()));
        }
        if !(self.evaluator.timeout_secs > 0.0) || !(self.evaluator.tolerance >= 0.0) {
            return Err(ConfigError::Invalid("evaluator timeout must be positive and tolerance non-negative".into()));
        }
        if self.evaluator.interpreter.is_empty() {
            return Err(ConfigError::Invalid("evaluator interpreter must not be empty".into()));
        }
        self.loop_cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.backend.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Replaces an `"entropy"` seed with a concrete one so the run can be
    /// replayed from its recorded configuration.
    pub fn resolve_seed(&mut self) -> u64 {
        match self.seed {
            SeedSetting::Fixed(s) => s,
            SeedSetting::Named(EntropyTag::Entropy) => {
                let s: u64 = rand::rng().random();
                self.seed = SeedSetting::Fixed(s);
                s
            }
        }
    }

    /// Seed payloads: file contents when paths are given (relative to
    /// `base`), built-in seeds otherwise.
    pub fn load_seeds(&self, base: &Path) -> Result<(Vec<String>, Vec<String>), ConfigError> {
        let read_all = |paths: &[PathBuf]| -> Result<Vec<String>, ConfigError> {
            paths
                .iter()
                .map(|p| {
                    let full = if p.is_absolute() { p.clone() } else { base.join(p) };
                    fs::read_to_string(&full).map_err(|source| ConfigError::Read { path: full, source })
                })
                .collect()
        };
        let mut tasks = read_all(&self.seeds.tasks)?;
        if tasks.is_empty() {
            tasks.push(builtin_task_seed(self.task).to_json());
        }
        let mut optimizers = read_all(&self.seeds.optimizers)?;
        if optimizers.is_empty() {
            optimizers.push(builtin_optimizer_seed(self.backend.mode));
        }
        Ok((tasks, optimizers))
    }
}

/// A valid, deliberately weak starting construction for each task.
pub fn builtin_task_seed(task: TaskKind) -> Construction<f64> {
    match task {
        TaskKind::Kn => {
            let mut vectors = Vec::new();
            for i in 0..11 {
                for s in [2, -2] {
                    let mut v = vec![0i64; 11];
                    v[i] = s;
                    vectors.push(v);
                }
            }
            Construction::Kn { vectors }
        }
        TaskKind::Cp => {
            let mut circles = Vec::new();
            for j in 0..5 {
                for i in 0..6 {
                    if circles.len() < 26 {
                        circles.push(Circle {
                            x: (i as f64 + 0.5) / 6.0,
                            y: (j as f64 + 0.5) / 5.0,
                            r: 0.05,
                        });
                    }
                }
            }
            Construction::Cp { circles }
        }
        TaskKind::Ht => {
            // points on a circle never have three collinear
            let v = triangle_vertices::<f64>();
            let (cx, cy) = ((v[0].x + v[1].x + v[2].x) / 3.0, (v[0].y + v[1].y + v[2].y) / 3.0);
            let radius = 0.9 * cy;
            let points = (0..11)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / 11.0;
                    Point {
                        x: cx + radius * a.cos(),
                        y: cy + radius * a.sin(),
                    }
                })
                .collect();
            Construction::Ht { points }
        }
    }
}

pub const DEFAULT_PROMPT_TEMPLATE: &str = "You are improving {{target}} agents for a geometric optimization problem.\n\
Below are {{count}} scored candidates, higher is better.\n\n{{parents}}\n\n\
Write one improved {{target}} agent. Reply with the complete result in a single fenced code block.";

pub fn builtin_optimizer_seed(mode: BackendMode) -> String {
    match mode {
        BackendMode::Scripted => Strategy::gaussian(0.02, 0.02).to_payload(),
        BackendMode::RemoteChat => DEFAULT_PROMPT_TEMPLATE.to_string(),
    }
}
