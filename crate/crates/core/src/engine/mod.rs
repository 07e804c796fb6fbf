//! The co-evolution loop.
//!
//! Each iteration samples a cohort of optimizers and a set of task parents,
//! lets every cohort member produce one task agent from the same parents,
//! scores those agents once, reuses the scores as pairwise results for the
//! cohort's Elo ratings, and finally lets a lead optimizer rewrite a sample
//! of optimizers into a new optimizer.

pub mod budget;
pub mod checkpoint;
pub mod log;

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use budget::{equivalent_tokens, BudgetLedger, DEFAULT_BUDGET};
pub use checkpoint::{
    list_checkpoints, load_checkpoint, save_checkpoint, select_checkpoint, CheckpointError, Manifest, ResumePick,
};
pub use log::{parse_log, Event, RunLog};

use crate::backends::{Backend, GenerationFailure, GenerationRequest, GenerationResult, GenerationSettings};
use crate::evaluators::{Construction, EvalResult, Evaluator};
use crate::population::{AgentId, AgentKind, AgentRecord, Eviction, GridDescriptor, Population, PopulationError};
use crate::rating::{initialize_offspring_rating, pairwise_competition, EloLedger, RatingError};
use crate::sampling::{sample_indices, SamplingError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("run log: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid loop configuration: {0}")]
    Config(String),
    #[error("the {0} population is empty")]
    EmptyPopulation(AgentKind),
    #[error("backend produced nothing for {0} consecutive rounds")]
    BackendStalled(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Temperatures {
    pub task_parent: f64,
    pub matchmaking: f64,
    pub mentoring: f64,
    pub checkpoint: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Self {
            task_parent: 1.2,
            matchmaking: 1.2,
            mentoring: 0.5,
            checkpoint: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Optimizers benchmarked per iteration.
    pub cohort_size: usize,
    /// Task parents shown to every cohort member.
    pub task_parent_count: usize,
    /// Optimizers drawn for the self-referential step, lead included.
    pub meta_subset_size: usize,
    /// Self-referential step every this many iterations; 0 disables it.
    pub meta_every: u64,
    /// 0 disables checkpoints.
    pub checkpoint_every: u64,
    pub max_iterations: u64,
    pub draw_tol: f64,
    pub k_factor: f64,
    pub initial_rating: f64,
    pub task_capacity: usize,
    pub optimizer_capacity: usize,
    /// MAP-Elites overlay on the optimizer population.
    pub archive: Option<GridDescriptor>,
    pub temperatures: Temperatures,
    /// Threads used to generate and evaluate a cohort; 1 runs inline.
    pub workers: usize,
    /// Abort after this many consecutive void rounds; 0 never aborts.
    pub max_void_rounds: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            cohort_size: 4,
            task_parent_count: 3,
            meta_subset_size: 3,
            meta_every: 1,
            checkpoint_every: 20,
            max_iterations: 1_000_000,
            draw_tol: crate::rating::DEFAULT_DRAW_TOL,
            k_factor: crate::rating::DEFAULT_K_FACTOR,
            initial_rating: crate::rating::INITIAL_RATING,
            task_capacity: 200,
            optimizer_capacity: 50,
            archive: None,
            temperatures: Temperatures::default(),
            workers: 4,
            max_void_rounds: 10,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let err = |m: &str| Err(EngineError::Config(m.to_string()));
        if self.cohort_size < 2 {
            return err("cohort_size must be at least 2");
        }
        if self.task_parent_count < 1 || self.meta_subset_size < 1 {
            return err("task_parent_count and meta_subset_size must be at least 1");
        }
        if self.task_capacity == 0 || self.optimizer_capacity == 0 {
            return err("population capacities must be positive");
        }
        if !(self.k_factor > 0.0) || !(self.draw_tol >= 0.0) {
            return err("k_factor must be positive and draw_tol non-negative");
        }
        let t = self.temperatures;
        if [t.task_parent, t.matchmaking, t.mentoring, t.checkpoint].iter().any(|v| !(*v > 0.0)) {
            return err("sampling temperatures must be positive");
        }
        Ok(())
    }
}

/// Best valid task agent seen so far in the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSoFar {
    pub id: AgentId,
    pub iteration: u64,
    pub s_raw: f64,
    pub s_norm: f64,
    pub payload: String,
    pub construction: Option<Construction<f64>>,
}

/// Everything needed to continue a run; the unit of checkpointing.
#[derive(Debug, Clone)]
pub struct RunState {
    pub iteration: u64,
    pub task_pop: Population<f64>,
    pub opt_pop: Population<f64>,
    pub ledger: EloLedger<f64>,
    pub budget: BudgetLedger,
    pub rng: ChaCha8Rng,
    pub next_id: u64,
    pub best: Option<BestSoFar>,
    pub config_digest: String,
}

impl RunState {
    fn fresh_id(&mut self) -> AgentId {
        let id = AgentId(self.next_id);
        self.next_id += 1;
        id
    }

    fn note_candidate(&mut self, id: AgentId, iteration: u64, payload: &str, result: &EvalResult<f64>, c: Option<&Construction<f64>>) {
        if !result.valid {
            return;
        }
        if self.best.as_ref().is_none_or(|b| result.s_norm > b.s_norm) {
            self.best = Some(BestSoFar {
                id,
                iteration,
                s_raw: result.s_raw,
                s_norm: result.s_norm,
                payload: payload.to_string(),
                construction: c.cloned(),
            });
        }
    }

    pub fn best_score(&self) -> f64 {
        self.best.as_ref().map_or(0.0, |b| b.s_norm)
    }
}

/// Hex SHA-256 of the canonical JSON form of a config snapshot.
pub fn config_digest(config: &Value) -> String {
    let text = serde_json::to_string(config).expect("json value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

struct SlotOutcome {
    operator: AgentId,
    generation: Result<GenerationResult, GenerationFailure>,
    evaluation: Option<(EvalResult<f64>, Option<Construction<f64>>)>,
}

/// What one iteration did, for callers that want more than the log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationReport {
    pub iteration: u64,
    pub cohort: Vec<AgentId>,
    pub round_scores: Vec<f64>,
    pub evaluations: u64,
    pub new_tasks: Vec<AgentId>,
    pub new_optimizer: Option<AgentId>,
    pub void_round: bool,
    pub checkpoint: Option<PathBuf>,
}

pub struct Engine {
    cfg: LoopConfig,
    generation: GenerationSettings,
    backend: Box<dyn Backend>,
    evaluator: Evaluator<f64>,
    log: RunLog,
    checkpoint_root: Option<PathBuf>,
    config_snapshot: Value,
    pool: Option<rayon::ThreadPool>,
}

impl Engine {
    pub fn new(
        cfg: LoopConfig,
        generation: GenerationSettings,
        backend: Box<dyn Backend>,
        evaluator: Evaluator<f64>,
        log: RunLog,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        let pool = if cfg.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.workers)
                    .build()
                    .map_err(|e| EngineError::Config(e.to_string()))?,
            )
        } else {
            None
        };
        let config_snapshot = serde_json::to_value(&cfg).expect("loop config serializes");
        Ok(Self {
            cfg,
            generation,
            backend,
            evaluator,
            log,
            checkpoint_root: None,
            config_snapshot,
            pool,
        })
    }

    /// Enables checkpoints under `root`. `config` is stored in every manifest
    /// and its digest identifies the run.
    pub fn with_checkpoints(mut self, root: impl Into<PathBuf>, config: Value) -> Self {
        self.checkpoint_root = Some(root.into());
        self.config_snapshot = config;
        self
    }

    pub fn config(&self) -> &LoopConfig {
        &self.cfg
    }

    pub fn evaluator(&self) -> &Evaluator<f64> {
        &self.evaluator
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn digest(&self) -> String {
        config_digest(&self.config_snapshot)
    }

    fn emit(&mut self, event: Event) -> Result<(), EngineError> {
        self.log.emit(event)?;
        Ok(())
    }

    /// Builds the starting state: seed task agents are evaluated right away,
    /// seed optimizers enter at the initial rating.
    pub fn initialize(
        &mut self,
        seed_tasks: &[String],
        seed_optimizers: &[String],
        budget_eq: f64,
        rng_seed: u64,
    ) -> Result<RunState, EngineError> {
        if seed_tasks.is_empty() {
            return Err(EngineError::EmptyPopulation(AgentKind::Task));
        }
        if seed_optimizers.is_empty() {
            return Err(EngineError::EmptyPopulation(AgentKind::Optimizer));
        }
        let eviction = match self.cfg.archive {
            Some(grid) => Eviction::GridElites(grid),
            None => Eviction::Lowest,
        };
        let mut state = RunState {
            iteration: 0,
            task_pop: Population::new(AgentKind::Task, self.cfg.task_capacity),
            opt_pop: Population::new(AgentKind::Optimizer, self.cfg.optimizer_capacity).with_eviction(eviction),
            ledger: EloLedger::new(self.cfg.k_factor, self.cfg.initial_rating),
            budget: BudgetLedger::new(budget_eq),
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            next_id: 0,
            best: None,
            config_digest: self.digest(),
        };
        for payload in seed_tasks {
            let id = state.fresh_id();
            let (result, construction) = self.evaluator.evaluate(payload);
            let score = if result.valid { result.s_norm } else { 0.0 };
            self.emit(eval_event(0, id, None, &result))?;
            state.note_candidate(id, 0, payload, &result, construction.as_ref());
            let evicted = state.task_pop.insert(AgentRecord::new(id, AgentKind::Task, payload.clone(), score))?;
            self.log_evictions(&mut state, 0, evicted)?;
        }
        for payload in seed_optimizers {
            let id = state.fresh_id();
            let rating = state.ledger.register(id, None);
            self.emit(Event::Meta {
                iter: 0,
                id,
                lead: None,
                parents: Vec::new(),
                rating,
            })?;
            let evicted = state.opt_pop.insert(AgentRecord::new(id, AgentKind::Optimizer, payload.clone(), rating))?;
            self.log_evictions(&mut state, 0, evicted)?;
        }
        self.log.flush()?;
        Ok(state)
    }

    fn log_evictions(&mut self, state: &mut RunState, iter: u64, evicted: Vec<AgentRecord<f64>>) -> Result<(), EngineError> {
        for rec in evicted {
            if rec.kind == AgentKind::Optimizer {
                state.ledger.retire(rec.id);
            }
            self.emit(Event::Evict {
                iter,
                id: rec.id,
                kind: rec.kind,
                score: rec.score,
            })?;
        }
        Ok(())
    }

    fn charge(&mut self, state: &mut RunState, iter: u64, operator: AgentId, target: AgentKind, gen: &Result<GenerationResult, GenerationFailure>) -> Result<(), EngineError> {
        let (tokens_in, tokens_out, backend, error) = match gen {
            Ok(g) => (g.tokens_in, g.tokens_out, g.backend_label.clone(), None),
            Err(f) => (f.tokens_in, f.tokens_out, f.backend_label.clone(), Some(f.error.to_string())),
        };
        state.budget.charge(tokens_in, tokens_out);
        self.emit(Event::Gen {
            iter,
            operator,
            target,
            ok: gen.is_ok(),
            tokens_in,
            tokens_out,
            backend,
            error,
        })
    }

    pub fn run_iteration(&mut self, state: &mut RunState) -> Result<IterationReport, EngineError> {
        if state.task_pop.is_empty() {
            return Err(EngineError::EmptyPopulation(AgentKind::Task));
        }
        if state.opt_pop.is_empty() {
            return Err(EngineError::EmptyPopulation(AgentKind::Optimizer));
        }
        let iter = state.iteration + 1;
        let temps = self.cfg.temperatures;
        let mut report = IterationReport {
            iteration: iter,
            ..IterationReport::default()
        };

        // (1) cohort and shared task parents
        let k = self.cfg.cohort_size.min(state.opt_pop.len());
        let cohort_idx = sample_indices(&state.opt_pop.scores(), k, temps.matchmaking, &mut state.rng)?;
        let cohort: Vec<AgentRecord<f64>> = cohort_idx.iter().map(|&i| state.opt_pop.members()[i].clone()).collect();
        let j = self.cfg.task_parent_count.min(state.task_pop.len());
        let parent_idx = sample_indices(&state.task_pop.scores(), j, temps.task_parent, &mut state.rng)?;
        let parent_ids: Vec<AgentId> = parent_idx.iter().map(|&i| state.task_pop.members()[i].id).collect();
        let parents: Vec<(String, f64)> = parent_idx
            .iter()
            .map(|&i| {
                let m = &state.task_pop.members()[i];
                (m.payload.clone(), m.score)
            })
            .collect();
        let slot_seeds: Vec<u64> = (0..k).map(|_| state.rng.next_u64()).collect();

        // (2) generate and evaluate, possibly in parallel
        let outcomes = self.run_slots(&cohort, &parents, &slot_seeds);
        let mut round_scores = Vec::with_capacity(k);
        let mut any_generated = false;
        for outcome in outcomes {
            self.charge(state, iter, outcome.operator, AgentKind::Task, &outcome.generation)?;
            let Ok(generated) = outcome.generation else {
                round_scores.push(0.0);
                continue;
            };
            any_generated = true;
            report.evaluations += 1;
            let (result, construction) = outcome.evaluation.expect("generated slots are evaluated");
            let score = if result.valid { result.s_norm } else { 0.0 };
            let id = state.fresh_id();
            self.emit(eval_event(iter, id, Some(outcome.operator), &result))?;
            state.note_candidate(id, iter, &generated.payload, &result, construction.as_ref());
            let rec = AgentRecord::new(id, AgentKind::Task, generated.payload, score).with_parents(parent_ids.clone(), iter);
            let evicted = state.task_pop.insert(rec)?;
            self.log_evictions(state, iter, evicted)?;
            round_scores.push(score);
            report.new_tasks.push(id);
        }
        report.cohort = cohort.iter().map(|o| o.id).collect();
        report.round_scores = round_scores.clone();

        // (3) dynamic benchmarking from the scores just computed
        if k >= 2 && any_generated {
            let mut result = pairwise_competition(&round_scores, self.cfg.draw_tol)?;
            result.cohort = report.cohort.clone();
            for change in state.ledger.update(&result, iter)? {
                if let Some(rec) = state.opt_pop.get_mut(change.id) {
                    rec.score = change.new;
                    rec.eval_count += 1;
                }
                self.emit(Event::Elo {
                    iter,
                    id: change.id,
                    old: change.old,
                    new: change.new,
                })?;
            }
        } else if k >= 2 {
            report.void_round = true;
            self.emit(Event::Void { iter })?;
        }

        // (4) self-referential step
        if self.cfg.meta_every > 0 && iter % self.cfg.meta_every == 0 {
            report.new_optimizer = self.meta_step(state, iter)?;
        }

        state.iteration = iter;
        self.emit(Event::BestSoFar {
            iter,
            eq_tokens: state.budget.equivalent_tokens(),
            best: state.best_score(),
            s_raw: state.best.as_ref().map_or(0.0, |b| b.s_raw),
        })?;

        if self.cfg.checkpoint_every > 0 && iter % self.cfg.checkpoint_every == 0 {
            if let Some(root) = self.checkpoint_root.clone() {
                let dir = save_checkpoint(&root, state, &self.config_snapshot)?;
                self.emit(Event::Checkpoint {
                    iter,
                    dir: checkpoint::checkpoint_name(iter),
                })?;
                report.checkpoint = Some(dir);
            }
        }
        self.log.flush()?;
        Ok(report)
    }

    fn run_slots(&self, cohort: &[AgentRecord<f64>], parents: &[(String, f64)], seeds: &[u64]) -> Vec<SlotOutcome> {
        let backend = self.backend.as_ref();
        let evaluator = &self.evaluator;
        let generation = &self.generation;
        let work = |(op, seed): (&AgentRecord<f64>, &u64)| {
            let req = GenerationRequest {
                operator: op,
                parents: parents.to_vec(),
                target_kind: AgentKind::Task,
                temperature: generation.temperature_for(AgentKind::Task),
                max_output_tokens: generation.max_output_tokens,
                timeout: generation.timeout_for(AgentKind::Task),
                retries: generation.retries,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let generated = backend.generate(&req, &mut rng);
            let evaluation = generated.as_ref().ok().map(|g| evaluator.evaluate(&g.payload));
            SlotOutcome {
                operator: op.id,
                generation: generated,
                evaluation,
            }
        };
        match &self.pool {
            Some(pool) => pool.install(|| cohort.par_iter().zip(seeds.par_iter()).map(work).collect()),
            None => cohort.iter().zip(seeds.iter()).map(work).collect(),
        }
    }

    fn meta_step(&mut self, state: &mut RunState, iter: u64) -> Result<Option<AgentId>, EngineError> {
        let m = self.cfg.meta_subset_size.min(state.opt_pop.len());
        let idx = sample_indices(&state.opt_pop.scores(), m, self.cfg.temperatures.mentoring, &mut state.rng)?;
        let drawn: Vec<AgentRecord<f64>> = idx.iter().map(|&i| state.opt_pop.members()[i].clone()).collect();
        let lead = &drawn[0];
        let seed = state.rng.next_u64();
        let req = GenerationRequest {
            operator: lead,
            parents: drawn.iter().map(|o| (o.payload.clone(), o.score)).collect(),
            target_kind: AgentKind::Optimizer,
            temperature: self.generation.temperature_for(AgentKind::Optimizer),
            max_output_tokens: self.generation.max_output_tokens,
            timeout: self.generation.timeout_for(AgentKind::Optimizer),
            retries: self.generation.retries,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let generated = self.backend.generate(&req, &mut rng);
        self.charge(state, iter, lead.id, AgentKind::Optimizer, &generated)?;
        let Ok(generated) = generated else {
            return Ok(None);
        };
        let ratings: Vec<f64> = drawn.iter().map(|o| o.score).collect();
        let rating = initialize_offspring_rating(&ratings)?;
        let id = state.fresh_id();
        let parent_ids: Vec<AgentId> = drawn.iter().map(|o| o.id).collect();
        state.ledger.register(id, Some(rating));
        self.emit(Event::Meta {
            iter,
            id,
            lead: Some(lead.id),
            parents: parent_ids.clone(),
            rating,
        })?;
        let rec = AgentRecord::new(id, AgentKind::Optimizer, generated.payload, rating).with_parents(parent_ids, iter);
        let evicted = state.opt_pop.insert(rec)?;
        self.log_evictions(state, iter, evicted)?;
        Ok(Some(id))
    }

    /// Iterates until the budget is spent or `max_iterations` is reached.
    /// The round that crosses the budget is completed.
    pub fn run(&mut self, mut state: RunState) -> Result<RunState, EngineError> {
        let mut void_streak = 0;
        while !state.budget.exhausted() && state.iteration < self.cfg.max_iterations {
            let report = self.run_iteration(&mut state)?;
            void_streak = if report.void_round { void_streak + 1 } else { 0 };
            if self.cfg.max_void_rounds > 0 && void_streak >= self.cfg.max_void_rounds {
                return Err(EngineError::BackendStalled(void_streak));
            }
        }
        Ok(state)
    }

    /// Loads a checkpoint to continue under this engine. The state adopts the
    /// engine's config digest so later checkpoints stay self-consistent when
    /// the configuration was overridden on resume.
    pub fn resume(&mut self, dir: &Path) -> Result<RunState, EngineError> {
        let (mut state, _) = load_checkpoint(dir)?;
        state.config_digest = self.digest();
        Ok(state)
    }
}

fn eval_event(iter: u64, id: AgentId, operator: Option<AgentId>, r: &EvalResult<f64>) -> Event {
    Event::Eval {
        iter,
        id,
        operator,
        valid: r.valid,
        s_raw: r.s_raw,
        s_norm: r.s_norm,
        violation: r.violation.clone(),
    }
}
