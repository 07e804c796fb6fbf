//! Model-free backend: optimizer payloads are small strategy documents and
//! task payloads are literal constructions.
//!
//! A strategy such as
//! `{"op":"gaussian-perturb","sigma":0.01,"restart_p":0.05,"meta":"meta-log-perturb","meta_sigma":0.3}`
//! perturbs the best parent construction when applied to task agents, and
//! perturbs the numeric parameters of the best parent strategy when applied
//! to optimizer agents. Everything is driven by the caller's RNG, so a fixed
//! seed reproduces every result.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{synthetic_tokens, Backend, GenerationError, GenerationFailure, GenerationRequest, GenerationResult};
use crate::evaluators::{triangle_vertices, Circle, Construction, Point, TaskKind};
use crate::population::AgentKind;

const LABEL: &str = "scripted";
const KN_DIM: usize = 11;
const KN_INSERT_ATTEMPTS: usize = 64;
const MIN_RADIUS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskOp {
    GaussianPerturb,
    Copy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MetaOp {
    /// Multiply the parent's sigma by `meta_factor`.
    MetaScale,
    /// Multiply sigma and restart probability by independent log-normal factors.
    #[default]
    MetaLogPerturb,
}

fn default_meta_factor() -> f64 {
    1.5
}

fn default_meta_sigma() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    pub op: TaskOp,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub restart_p: f64,
    #[serde(default)]
    pub meta: MetaOp,
    #[serde(default = "default_meta_factor")]
    pub meta_factor: f64,
    #[serde(default = "default_meta_sigma")]
    pub meta_sigma: f64,
}

impl Strategy {
    pub fn gaussian(sigma: f64, restart_p: f64) -> Self {
        Self {
            op: TaskOp::GaussianPerturb,
            sigma,
            restart_p,
            meta: MetaOp::MetaLogPerturb,
            meta_factor: default_meta_factor(),
            meta_sigma: default_meta_sigma(),
        }
    }

    pub fn parse(payload: &str) -> Result<Self, GenerationError> {
        let s: Strategy =
            serde_json::from_str(payload.trim()).map_err(|e| GenerationError::MalformedOperator(e.to_string()))?;
        let finite = [s.sigma, s.restart_p, s.meta_factor, s.meta_sigma].iter().all(|v| v.is_finite());
        if !finite || s.sigma < 0.0 || !(0.0..=1.0).contains(&s.restart_p) || s.meta_sigma < 0.0 || s.meta_factor <= 0.0 {
            return Err(GenerationError::MalformedOperator("strategy parameters out of range".into()));
        }
        Ok(s)
    }

    pub fn to_payload(&self) -> String {
        serde_json::to_string(self).expect("strategy serializes")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScriptedBackend {
    task: TaskKind,
}

impl ScriptedBackend {
    pub fn new(task: TaskKind) -> Self {
        Self { task }
    }
}

/// Highest-scoring parent; the earlier one among ties.
fn best_parent(parents: &[(String, f64)]) -> Option<&(String, f64)> {
    parents.iter().reduce(|a, b| if b.1 > a.1 { b } else { a })
}

fn gaussian(rng: &mut dyn RngCore, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("valid sigma").sample(rng)
}

impl Backend for ScriptedBackend {
    fn label(&self) -> &str {
        LABEL
    }

    fn generate(&self, req: &GenerationRequest<'_>, rng: &mut dyn RngCore) -> Result<GenerationResult, GenerationFailure> {
        let fail = |error| GenerationFailure {
            error,
            tokens_in: synthetic_tokens(req.operator.payload.len()),
            tokens_out: 0,
            backend_label: LABEL.to_string(),
        };
        let strategy = Strategy::parse(&req.operator.payload).map_err(fail)?;
        let (parent, _) =
            best_parent(&req.parents).ok_or_else(|| fail(GenerationError::BadParents("no parents".into())))?;
        let payload = match req.target_kind {
            AgentKind::Task => {
                let c = Construction::<f64>::from_json(parent.trim())
                    .map_err(|e| fail(GenerationError::BadParents(format!("parent is not a literal construction: {e}"))))?;
                if c.task() != self.task {
                    return Err(fail(GenerationError::BadParents(format!("parent solves {}", c.task()))));
                }
                mutate_construction(&strategy, c, rng).to_json()
            }
            AgentKind::Optimizer => {
                let base = Strategy::parse(parent).map_err(|e| fail(GenerationError::BadParents(e.to_string())))?;
                meta_mutate(&strategy, base, rng).to_payload()
            }
        };
        let tokens = synthetic_tokens(payload.len());
        Ok(GenerationResult {
            payload,
            tokens_in: tokens,
            tokens_out: tokens,
            backend_label: LABEL.to_string(),
        })
    }
}

/// Applies the operator's meta-operation to a parent strategy.
pub fn meta_mutate(operator: &Strategy, mut child: Strategy, rng: &mut dyn RngCore) -> Strategy {
    match operator.meta {
        MetaOp::MetaScale => child.sigma *= operator.meta_factor,
        MetaOp::MetaLogPerturb => {
            child.sigma *= gaussian(rng, operator.meta_sigma).exp();
            child.restart_p = (child.restart_p * gaussian(rng, operator.meta_sigma).exp()).clamp(0.0, 1.0);
        }
    }
    child
}

pub fn mutate_construction(s: &Strategy, c: Construction<f64>, rng: &mut dyn RngCore) -> Construction<f64> {
    if s.op == TaskOp::Copy {
        return c;
    }
    let restart = s.restart_p > 0.0 && rng.random::<f64>() < s.restart_p;
    match c {
        Construction::Cp { circles } => Construction::Cp {
            circles: perturb_circles(circles, s.sigma, restart, rng),
        },
        Construction::Ht { points } => Construction::Ht {
            points: perturb_points(points, s.sigma, restart, rng),
        },
        Construction::Kn { vectors } => Construction::Kn {
            vectors: perturb_vectors(vectors, s.sigma, restart, rng),
        },
    }
}

fn perturb_circles(mut circles: Vec<Circle<f64>>, sigma: f64, restart: bool, rng: &mut dyn RngCore) -> Vec<Circle<f64>> {
    for c in circles.iter_mut() {
        if restart {
            c.x = rng.random_range(0.05..0.95);
            c.y = rng.random_range(0.05..0.95);
            c.r = 0.05;
        } else {
            c.x += gaussian(rng, sigma);
            c.y += gaussian(rng, sigma);
            c.r += gaussian(rng, sigma);
        }
    }
    repair_circles(&mut circles);
    circles
}

/// Shrinks radii until the packing is feasible: centers are clamped into the
/// square, radii capped by the walls, and every overlapping pair is scaled
/// down to tangency. Shrinking never re-breaks an already repaired pair.
pub fn repair_circles(circles: &mut [Circle<f64>]) {
    for c in circles.iter_mut() {
        c.x = c.x.clamp(1e-3, 1.0 - 1e-3);
        c.y = c.y.clamp(1e-3, 1.0 - 1e-3);
        let wall = c.x.min(1.0 - c.x).min(c.y).min(1.0 - c.y);
        c.r = c.r.max(MIN_RADIUS).min(wall);
    }
    for i in 0..circles.len() {
        for j in (i + 1)..circles.len() {
            let d = (circles[i].x - circles[j].x).hypot(circles[i].y - circles[j].y);
            let reach = circles[i].r + circles[j].r;
            if d < reach {
                let f = d / reach;
                circles[i].r = (circles[i].r * f).max(MIN_RADIUS);
                circles[j].r = (circles[j].r * f).max(MIN_RADIUS);
            }
        }
    }
}

fn project_into_triangle(p: Point<f64>) -> Point<f64> {
    let sqrt3 = 3f64.sqrt();
    let top = (2.0 * p.y / sqrt3).max(0.0);
    let right = (p.x - p.y / sqrt3).max(0.0);
    let left = (1.0 - (p.x - p.y / sqrt3) - 2.0 * p.y / sqrt3).max(0.0);
    let total = left + right + top;
    let (right, top) = (right / total, top / total);
    let v = triangle_vertices::<f64>();
    Point {
        x: v[1].x * right + v[2].x * top,
        y: v[1].y * right + v[2].y * top,
    }
}

fn random_triangle_point(rng: &mut dyn RngCore) -> Point<f64> {
    let (mut a, mut b): (f64, f64) = (rng.random(), rng.random());
    if a + b > 1.0 {
        a = 1.0 - a;
        b = 1.0 - b;
    }
    let v = triangle_vertices::<f64>();
    Point {
        x: v[1].x * a + v[2].x * b,
        y: v[1].y * a + v[2].y * b,
    }
}

fn perturb_points(points: Vec<Point<f64>>, sigma: f64, restart: bool, rng: &mut dyn RngCore) -> Vec<Point<f64>> {
    points
        .into_iter()
        .map(|p| {
            if restart {
                random_triangle_point(rng)
            } else {
                let moved = Point {
                    x: p.x + gaussian(rng, sigma),
                    y: p.y + gaussian(rng, sigma),
                };
                project_into_triangle(moved)
            }
        })
        .collect()
}

/// A random vector of squared norm 4: either `±2 e_i` or four `±1` entries.
fn random_shell_vector(rng: &mut dyn RngCore) -> Vec<i64> {
    let mut v = vec![0i64; KN_DIM];
    let sign = |rng: &mut dyn RngCore| if rng.random::<bool>() { 1 } else { -1 };
    if rng.random::<bool>() {
        let i = rng.random_range(0..KN_DIM);
        v[i] = 2 * sign(rng);
    } else {
        let mut placed = 0;
        while placed < 4 {
            let i = rng.random_range(0..KN_DIM);
            if v[i] == 0 {
                v[i] = sign(rng);
                placed += 1;
            }
        }
    }
    v
}

fn compatible(set: &[Vec<i64>], v: &[i64]) -> bool {
    set.iter()
        .all(|u| u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<i64>() >= 4)
}

fn perturb_vectors(vectors: Vec<Vec<i64>>, sigma: f64, restart: bool, rng: &mut dyn RngCore) -> Vec<Vec<i64>> {
    let drop_p = sigma.clamp(0.0, 1.0);
    let mut kept: Vec<Vec<i64>> = if restart {
        Vec::new()
    } else {
        vectors.into_iter().filter(|_| rng.random::<f64>() >= drop_p).collect()
    };
    for _ in 0..KN_INSERT_ATTEMPTS {
        let v = random_shell_vector(rng);
        if compatible(&kept, &v) {
            kept.push(v);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluators::{eval_cp, eval_ht, eval_kn, TaskSpec};
    use crate::population::{AgentId, AgentRecord};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::time::Duration;

    fn grid_cp() -> Construction<f64> {
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

    fn request<'a>(op: &'a AgentRecord<f64>, parents: Vec<(String, f64)>, target: AgentKind) -> GenerationRequest<'a> {
        GenerationRequest {
            operator: op,
            parents,
            target_kind: target,
            temperature: 0.7,
            max_output_tokens: 60_000,
            timeout: Duration::from_secs(1),
            retries: 3,
        }
    }

    #[test]
    fn gaussian_perturb_yields_valid_packings() {
        let op = AgentRecord::new(AgentId(1), AgentKind::Optimizer, Strategy::gaussian(0.01, 0.0).to_payload(), 1200.0);
        let backend = ScriptedBackend::new(TaskKind::Cp);
        let spec = TaskSpec::<f64>::circle_packing();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let req = request(&op, vec![(grid_cp().to_json(), 0.5)], AgentKind::Task);
            let out = backend.generate(&req, &mut rng).unwrap();
            let c = Construction::from_json(&out.payload).unwrap();
            let r = eval_cp(&c, &spec);
            assert!(r.valid, "{:?}", r.violation);
            assert_eq!(out.tokens_in, synthetic_tokens(out.payload.len()));
            assert_eq!(out.tokens_in, out.tokens_out);
        }
    }

    #[test]
    fn repair_restores_feasibility_from_chaos() {
        let spec = TaskSpec::<f64>::circle_packing();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let mut circles: Vec<Circle<f64>> = (0..26)
                .map(|_| Circle {
                    x: rng.random_range(-0.2..1.2),
                    y: rng.random_range(-0.2..1.2),
                    r: rng.random_range(-0.1..0.4),
                })
                .collect();
            repair_circles(&mut circles);
            let r = eval_cp(&Construction::Cp { circles }, &spec);
            assert!(r.valid, "{:?}", r.violation);
        }
    }

    #[test]
    fn meta_scale_multiplies_sigma() {
        let mut lead = Strategy::gaussian(0.2, 0.0);
        lead.meta = MetaOp::MetaScale;
        lead.meta_factor = 1.5;
        let op = AgentRecord::new(AgentId(1), AgentKind::Optimizer, lead.to_payload(), 1200.0);
        let parent = Strategy::gaussian(0.01, 0.05).to_payload();
        let backend = ScriptedBackend::new(TaskKind::Cp);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = backend
            .generate(&request(&op, vec![(parent, 1200.0)], AgentKind::Optimizer), &mut rng)
            .unwrap();
        let child = Strategy::parse(&out.payload).unwrap();
        assert!((child.sigma - 0.015).abs() < 1e-15);
        assert_eq!(child.restart_p, 0.05);
    }

    #[test]
    fn meta_mutation_acts_on_best_rated_parent() {
        let op = AgentRecord::new(AgentId(1), AgentKind::Optimizer, Strategy::gaussian(0.2, 0.0).to_payload(), 1200.0);
        let weak = Strategy::gaussian(0.5, 0.0).to_payload();
        let strong = Strategy::gaussian(0.01, 0.0).to_payload();
        let backend = ScriptedBackend::new(TaskKind::Cp);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = backend
            .generate(&request(&op, vec![(weak, 1100.0), (strong, 1300.0)], AgentKind::Optimizer), &mut rng)
            .unwrap();
        let child = Strategy::parse(&out.payload).unwrap();
        // log-normal factor with sigma 0.3 stays well inside (0.1, 10)
        assert!(child.sigma > 0.001 && child.sigma < 0.1);
    }

    #[test]
    fn malformed_operator_is_reported() {
        let op = AgentRecord::new(AgentId(1), AgentKind::Optimizer, "not a strategy", 1200.0);
        let backend = ScriptedBackend::new(TaskKind::Cp);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = backend
            .generate(&request(&op, vec![(grid_cp().to_json(), 0.5)], AgentKind::Task), &mut rng)
            .unwrap_err();
        assert!(matches!(err.error, GenerationError::MalformedOperator(_)));
        assert!(err.tokens_in > 0);
    }

    #[test]
    fn same_seed_same_result() {
        let op = AgentRecord::new(AgentId(1), AgentKind::Optimizer, Strategy::gaussian(0.05, 0.1).to_payload(), 1200.0);
        let backend = ScriptedBackend::new(TaskKind::Cp);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            backend
                .generate(&request(&op, vec![(grid_cp().to_json(), 0.5)], AgentKind::Task), &mut rng)
                .unwrap()
        };
        assert_eq!(run(17), run(17));
        assert_ne!(run(17).payload, run(18).payload);
    }

    #[test]
    fn heilbronn_and_kissing_mutations_stay_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = Strategy::gaussian(0.05, 0.2);
        let pts: Vec<Point<f64>> = (0..11).map(|_| random_triangle_point(&mut rng)).collect();
        let mut ht = Construction::Ht { points: pts };
        let mut kn: Construction<f64> = Construction::Kn { vectors: vec![] };
        for _ in 0..50 {
            ht = mutate_construction(&s, ht, &mut rng);
            assert!(eval_ht(&ht, &TaskSpec::heilbronn_triangle()).valid);
            kn = mutate_construction(&s, kn, &mut rng);
            assert!(eval_kn(&kn, &TaskSpec::kissing_number()).valid);
        }
        assert!(kn.len() > 22);
    }

    #[test]
    fn projection_lands_inside() {
        for p in [(-1.0, -1.0), (2.0, 0.3), (0.5, 2.0), (0.3, 0.2)] {
            let q = project_into_triangle(Point { x: p.0, y: p.1 });
            let sqrt3 = 3f64.sqrt();
            assert!(q.y >= -1e-12);
            assert!(q.x - q.y / sqrt3 >= -1e-12);
            assert!(1.0 - q.x - q.y / sqrt3 >= -1e-12);
        }
    }
}
