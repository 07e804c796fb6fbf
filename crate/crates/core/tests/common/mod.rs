#![allow(dead_code)]

use std::path::PathBuf;

use coevolve::backends::{Backend, GenerationFailure, GenerationRequest, GenerationResult, GenerationSettings};
use coevolve::config::builtin_task_seed;
use coevolve::engine::{Engine, LoopConfig, RunLog};
use coevolve::evaluators::{Circle, Construction, Evaluator, ExecConfig, TaskKind, TaskSpec};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).expect("fixture readable")
}

pub fn grid_seed() -> String {
    builtin_task_seed(TaskKind::Cp).to_json()
}

pub fn engine(task: TaskKind, cfg: LoopConfig, backend: Box<dyn Backend>) -> Engine {
    let evaluator = Evaluator::new(TaskSpec::for_task(task), ExecConfig::default());
    Engine::new(cfg, GenerationSettings::default(), backend, evaluator, RunLog::in_memory()).expect("valid engine")
}

/// CP grid packing whose total radius is `mean + N(0, sd)`; the optimizer
/// payload is the mean.
pub struct StrengthBackend {
    pub sd: f64,
}

pub fn grid_with_total(total: f64) -> Construction<f64> {
    let r = (total / 26.0).clamp(1e-6, 1.0 / 12.0);
    let mut circles = Vec::new();
    for j in 0..5 {
        for i in 0..6 {
            if circles.len() < 26 {
                circles.push(Circle {
                    x: (i as f64 + 0.5) / 6.0,
                    y: (j as f64 + 0.5) / 5.0,
                    r,
                });
            }
        }
    }
    Construction::Cp { circles }
}

impl Backend for StrengthBackend {
    fn label(&self) -> &str {
        "strength"
    }

    fn generate(&self, req: &GenerationRequest<'_>, rng: &mut dyn RngCore) -> Result<GenerationResult, GenerationFailure> {
        let mean: f64 = req.operator.payload.parse().expect("numeric operator");
        let total = mean + Normal::new(0.0, self.sd).unwrap().sample(rng);
        Ok(GenerationResult {
            payload: grid_with_total(total).to_json(),
            tokens_in: 1,
            tokens_out: 1,
            backend_label: "strength".into(),
        })
    }
}

/// Copies the first parent and charges a random number of tokens; fails
/// (still charging) with probability `fail_p`.
pub struct FuzzBackend {
    pub fail_p: f64,
}

impl Backend for FuzzBackend {
    fn label(&self) -> &str {
        "fuzz"
    }

    fn generate(&self, req: &GenerationRequest<'_>, rng: &mut dyn RngCore) -> Result<GenerationResult, GenerationFailure> {
        let tokens_in = rng.random_range(0..2000u64);
        let tokens_out = rng.random_range(1..700u64);
        if rng.random::<f64>() < self.fail_p {
            return Err(GenerationFailure {
                error: coevolve::backends::GenerationError::RetriesExhausted {
                    attempts: 4,
                    last: "fuzz".into(),
                },
                tokens_in,
                tokens_out,
                backend_label: "fuzz".into(),
            });
        }
        Ok(GenerationResult {
            payload: req.parents[0].0.clone(),
            tokens_in,
            tokens_out,
            backend_label: "fuzz".into(),
        })
    }
}

/// Spearman rank correlation without ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
