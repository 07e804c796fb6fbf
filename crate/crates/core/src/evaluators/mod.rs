//! Task evaluation: run a task agent, validate its construction, score it.

mod construction;
mod cp;
pub mod exec;
mod ht;
mod kn;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use construction::{Circle, Construction, Point};
pub use cp::eval_cp;
pub use exec::{run_task_agent, ExecConfig, ExecError};
pub use ht::{eval_ht, triangle_area, triangle_vertices};
pub use kn::eval_kn;

use crate::scalar::Scalar;

pub const KN_REFERENCE: f64 = 593.0;
pub const CP_REFERENCE: f64 = 2.6350;
pub const HT_REFERENCE: f64 = 0.036529889880030156;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Kissing number in dimension 11.
    Kn,
    /// 26 circles in the unit square.
    Cp,
    /// Heilbronn problem, 11 points in the unit equilateral triangle.
    Ht,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Kn => "kn",
            TaskKind::Cp => "cp",
            TaskKind::Ht => "ht",
        })
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kn" => Ok(TaskKind::Kn),
            "cp" => Ok(TaskKind::Cp),
            "ht" => Ok(TaskKind::Ht),
            other => Err(format!("unknown task `{other}` (expected kn, cp or ht)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec<T> {
    pub task: TaskKind,
    /// Vector dimension (KN only).
    pub dim: usize,
    /// Required element count (CP, HT).
    pub count: usize,
    pub s_ref: T,
    pub exec_timeout: Duration,
    pub tolerance: T,
}

impl<T: Scalar> TaskSpec<T> {
    pub fn for_task(task: TaskKind) -> Self {
        let (dim, count, s_ref) = match task {
            TaskKind::Kn => (11, 0, KN_REFERENCE),
            TaskKind::Cp => (2, 26, CP_REFERENCE),
            TaskKind::Ht => (2, 11, HT_REFERENCE),
        };
        Self {
            task,
            dim,
            count,
            s_ref: T::lit(s_ref),
            exec_timeout: Duration::from_secs(120),
            tolerance: T::lit(DEFAULT_TOLERANCE),
        }
    }

    pub fn kissing_number() -> Self {
        Self::for_task(TaskKind::Kn)
    }

    pub fn circle_packing() -> Self {
        Self::for_task(TaskKind::Cp)
    }

    pub fn heilbronn_triangle() -> Self {
        Self::for_task(TaskKind::Ht)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.exec_timeout = timeout;
        self
    }

    pub fn with_tolerance(mut self, tolerance: T) -> Self {
        self.tolerance = tolerance;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalResult<T> {
    pub valid: bool,
    pub s_raw: T,
    pub s_norm: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
    pub exec_tokens_equivalent: T,
    pub wall_time: f64,
}

impl<T: Scalar> EvalResult<T> {
    /// Normalization is deliberately unclipped: a score can exceed the reference.
    pub fn scored(s_raw: T, spec: &TaskSpec<T>) -> Self {
        Self {
            valid: true,
            s_raw,
            s_norm: s_raw / spec.s_ref,
            violation: None,
            exec_tokens_equivalent: T::zero(),
            wall_time: 0.0,
        }
    }

    pub fn invalid(violation: impl Into<String>) -> Self {
        Self {
            valid: false,
            s_raw: T::zero(),
            s_norm: T::zero(),
            violation: Some(violation.into()),
            exec_tokens_equivalent: T::zero(),
            wall_time: 0.0,
        }
    }
}

/// Scores a construction against the task it claims to solve.
pub fn evaluate_construction<T: Scalar>(c: &Construction<T>, spec: &TaskSpec<T>) -> EvalResult<T> {
    match spec.task {
        TaskKind::Kn => eval_kn(c, spec),
        TaskKind::Cp => eval_cp(c, spec),
        TaskKind::Ht => eval_ht(c, spec),
    }
}

fn wrong_variant<T: Scalar>(c: &Construction<T>, spec: &TaskSpec<T>) -> EvalResult<T> {
    EvalResult::invalid(format!("construction is for task {} but evaluating {}", c.task(), spec.task))
}

/// The task evaluation function `f`, with an invocation counter.
#[derive(Debug)]
pub struct Evaluator<T> {
    spec: TaskSpec<T>,
    exec: ExecConfig,
    invocations: AtomicU64,
}

impl<T: Scalar> Evaluator<T> {
    pub fn new(spec: TaskSpec<T>, exec: ExecConfig) -> Self {
        Self {
            spec,
            exec,
            invocations: AtomicU64::new(0),
        }
    }

    pub fn spec(&self) -> &TaskSpec<T> {
        &self.spec
    }

    pub fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::SeqCst)
    }

    /// Runs a task agent payload and scores the result. Returns the parsed
    /// construction alongside the result when one was produced.
    pub fn evaluate(&self, payload: &str) -> (EvalResult<T>, Option<Construction<T>>) {
        self.invocations.fetch_add(1, Ordering::SeqCst);
        let started = Instant::now();
        let (mut result, construction) = match run_task_agent::<T>(payload, &self.spec, &self.exec) {
            Ok(c) => (evaluate_construction(&c, &self.spec), Some(c)),
            Err(e) => (EvalResult::invalid(e.to_string()), None),
        };
        result.wall_time = started.elapsed().as_secs_f64();
        (result, construction)
    }
}
