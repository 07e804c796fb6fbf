//! Command-line front end: `run`, `resume`, `eval`, `report`.
//!
//! Exit codes: 0 success (or a valid construction for `eval`), 1 invalid
//! input, 2 configuration error, 3 backend error.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::backends::{Backend, BackendMode, RemoteBackend, ScriptedBackend};
use crate::config::{ConfigError, RunConfigFile, SeedSetting};
use crate::engine::{
    checkpoint, load_checkpoint, parse_log, select_checkpoint, Engine, EngineError, ResumePick, RunLog, RunState,
};
use crate::evaluators::{Construction, Evaluator, TaskKind};
use crate::population::AgentId;
use crate::report::{self, ReportKind};

pub const LOG_FILE: &str = "run.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, error: error.into() }
    }

    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }

    pub fn backend(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, error: error.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) => Failure::config(e),
            EngineError::BackendStalled(_) => Failure::backend(e),
            _ => Failure::invalid(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "coevolve", version, about = "Co-evolve task programs and the optimizers that write them")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start a run from a TOML config.
    Run(RunArgs),
    /// Continue a run from a checkpoint directory or a run directory.
    Resume(ResumeArgs),
    /// Evaluate a construction document or a program file.
    Eval(EvalArgs),
    /// Print a CSV report rebuilt from a run log.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Scripted,
    RemoteChat,
}

impl From<BackendArg> for BackendMode {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Scripted => BackendMode::Scripted,
            BackendArg::RemoteChat => BackendMode::RemoteChat,
        }
    }
}

/// Flags that override the matching config keys.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// `task`
    #[arg(long)]
    pub task: Option<TaskKind>,
    /// `seed`: an integer or "entropy".
    #[arg(long)]
    pub seed: Option<SeedSetting>,
    /// `budget`, in equivalent tokens.
    #[arg(long)]
    pub budget: Option<f64>,
    /// `out_dir`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `loop.max_iterations`
    #[arg(long)]
    pub max_iterations: Option<u64>,
    /// `loop.workers`
    #[arg(long)]
    pub workers: Option<usize>,
    /// `loop.checkpoint_every`
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// `backend.mode`
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfigFile) {
        if let Some(t) = self.task {
            cfg.task = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(b) = self.budget {
            cfg.budget = b;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(m) = self.max_iterations {
            cfg.loop_cfg.max_iterations = m;
        }
        if let Some(w) = self.workers {
            cfg.loop_cfg.workers = w;
        }
        if let Some(c) = self.checkpoint_every {
            cfg.loop_cfg.checkpoint_every = c;
        }
        if let Some(b) = self.backend {
            cfg.backend.mode = b.into();
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config; without it `--task` is required and defaults apply.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct ResumeArgs {
    /// A `ckpt_<iter>` directory, or a run directory to pick one from.
    pub path: PathBuf,
    /// Which checkpoint to take from a run directory.
    #[arg(long, value_enum, default_value = "latest")]
    pub pick: PickArg,
    /// `budget`
    #[arg(long)]
    pub budget: Option<f64>,
    /// `out_dir`; defaults to the directory holding the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `loop.max_iterations`
    #[arg(long)]
    pub max_iterations: Option<u64>,
    /// `loop.workers`
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PickArg {
    Latest,
    Best,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Construction JSON or program source.
    pub input: PathBuf,
    /// `task`; read from the document when omitted.
    #[arg(long)]
    pub task: Option<TaskKind>,
    /// Config supplying the `[evaluator]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `evaluator.timeout_secs`
    #[arg(long)]
    pub timeout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory (or the log file itself).
    pub run_dir: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    #[value(name = "best_so_far")]
    BestSoFar,
    Elo,
}

/// Final report of a run; contains no paths or timings so identical runs
/// produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub task: TaskKind,
    pub iterations: u64,
    pub best_task_id: Option<AgentId>,
    pub best_payload: Option<String>,
    pub best_construction: Option<Construction<f64>>,
    pub s_raw: f64,
    pub s_norm: f64,
    pub equivalent_tokens: f64,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub best_optimizer: Option<OptimizerSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub id: AgentId,
    pub rating: f64,
    pub payload: String,
}

pub fn summarize(task: TaskKind, state: &RunState) -> Summary {
    let best = state.best.as_ref();
    Summary {
        task,
        iterations: state.iteration,
        best_task_id: best.map(|b| b.id),
        best_payload: best.map(|b| b.payload.clone()),
        best_construction: best.and_then(|b| b.construction.clone()),
        s_raw: best.map_or(0.0, |b| b.s_raw),
        s_norm: best.map_or(0.0, |b| b.s_norm),
        equivalent_tokens: state.budget.equivalent_tokens(),
        tokens_in: state.budget.tokens_in_total,
        tokens_out: state.budget.tokens_out_total,
        best_optimizer: state.opt_pop.best().ok().map(|o| OptimizerSummary {
            id: o.id,
            rating: o.score,
            payload: o.payload.clone(),
        }),
    }
}

pub fn main_with(cli: Cli) -> ExitCode {
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Resume(a) => cmd_resume(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Report(a) => cmd_report(&a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn build_backend(cfg: &RunConfigFile) -> Result<Box<dyn Backend>, Failure> {
    Ok(match cfg.backend.mode {
        BackendMode::Scripted => Box::new(ScriptedBackend::new(cfg.task)),
        BackendMode::RemoteChat => Box::new(RemoteBackend::from_env(cfg.backend.clone()).map_err(Failure::backend)?),
    })
}

fn build_engine(cfg: &RunConfigFile, log: RunLog) -> Result<Engine, Failure> {
    let backend = build_backend(cfg)?;
    let evaluator = Evaluator::new(cfg.evaluator.spec(cfg.task), cfg.evaluator.exec());
    let snapshot = serde_json::to_value(cfg).context("serializing config").map_err(Failure::config)?;
    let engine = Engine::new(cfg.loop_cfg.clone(), cfg.backend.generation.clone(), backend, evaluator, log)?;
    Ok(engine.with_checkpoints(&cfg.out_dir, snapshot))
}

fn write_summary(dir: &Path, summary: &Summary) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(dir.join(SUMMARY_FILE), text + "\n")
        .with_context(|| format!("writing {}", dir.join(SUMMARY_FILE).display()))
        .map_err(Failure::invalid)
}

fn finish(cfg: &RunConfigFile, engine: &mut Engine, state: RunState) -> Result<u8, Failure> {
    let state = engine.run(state)?;
    let summary = summarize(cfg.task, &state);
    write_summary(&cfg.out_dir, &summary)?;
    log::info!(
        "finished after {} iterations: best s_norm {} at {} equivalent tokens",
        summary.iterations,
        summary.s_norm,
        summary.equivalent_tokens
    );
    Ok(0)
}

pub fn cmd_run(args: &RunArgs) -> Result<u8, Failure> {
    let (mut cfg, base) = match &args.config {
        Some(path) => {
            let cfg = RunConfigFile::load(path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (cfg, base)
        }
        None => {
            let task = args
                .overrides
                .task
                .ok_or_else(|| Failure::config(anyhow!("either --config or --task is required")))?;
            (RunConfigFile::new(task), PathBuf::from("."))
        }
    };
    args.overrides.apply(&mut cfg);
    cfg.validate()?;
    let seed = cfg.resolve_seed();
    let (tasks, optimizers) = cfg.load_seeds(&base)?;

    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))
        .map_err(Failure::invalid)?;
    // fail on missing credentials before touching the previous log
    build_backend(&cfg)?;
    let log_path = cfg.out_dir.join(LOG_FILE);
    let _ = fs::remove_file(&log_path);
    let log = RunLog::open(&log_path).map_err(Failure::invalid)?;
    let mut engine = build_engine(&cfg, log)?;
    let state = engine.initialize(&tasks, &optimizers, cfg.budget, seed)?;
    log::info!("run started: task {}, seed {seed}, budget {}", cfg.task, cfg.budget);
    finish(&cfg, &mut engine, state)
}

/// Drops log events past `iteration` so a resumed run does not duplicate them.
fn truncate_log(path: &Path, iteration: u64) -> Result<(), Failure> {
    if !path.exists() {
        return Ok(());
    }
    let file = fs::File::open(path).map_err(Failure::invalid)?;
    let mut kept = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(Failure::invalid)?;
        if line.trim().is_empty() {
            continue;
        }
        let events = parse_log(&line).map_err(|e| Failure::invalid(anyhow!("{}: {e}", path.display())))?;
        if events.iter().all(|e| e.iter() <= iteration) {
            kept.push(line);
        }
    }
    let mut out = fs::File::create(path).map_err(Failure::invalid)?;
    for line in kept {
        writeln!(out, "{line}").map_err(Failure::invalid)?;
    }
    Ok(())
}

pub fn cmd_resume(args: &ResumeArgs) -> Result<u8, Failure> {
    let dir = if checkpoint::is_checkpoint_dir(&args.path) {
        args.path.clone()
    } else {
        let pick = match args.pick {
            PickArg::Latest => ResumePick::Latest,
            PickArg::Best => ResumePick::Best,
        };
        let temperature = checkpoint::list_checkpoints(&args.path)
            .ok()
            .and_then(|found| found.last().map(|(_, p)| p.clone()))
            .and_then(|p| checkpoint::load_manifest(&p).ok())
            .and_then(|m| serde_json::from_value::<RunConfigFile>(m.config).ok())
            .map_or(1.2, |c| c.loop_cfg.temperatures.checkpoint);
        let mut rng = rand::rng();
        select_checkpoint(&args.path, pick, temperature, &mut rng).map_err(Failure::invalid)?
    };
    let (_, manifest) = load_checkpoint(&dir).map_err(Failure::invalid)?;
    let mut cfg: RunConfigFile = serde_json::from_value(manifest.config)
        .context("checkpoint manifest holds no run config")
        .map_err(Failure::config)?;
    cfg.out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| dir.parent().map(Path::to_path_buf).unwrap_or_default());
    if let Some(b) = args.budget {
        cfg.budget = b;
    }
    if let Some(m) = args.max_iterations {
        cfg.loop_cfg.max_iterations = m;
    }
    if let Some(w) = args.workers {
        cfg.loop_cfg.workers = w;
    }
    cfg.validate()?;

    build_backend(&cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(Failure::invalid)?;
    let log_path = cfg.out_dir.join(LOG_FILE);
    truncate_log(&log_path, manifest.iteration)?;
    let log = RunLog::open(&log_path).map_err(Failure::invalid)?;
    let mut engine = build_engine(&cfg, log)?;
    let mut state = engine.resume(&dir)?;
    state.budget.budget_eq = cfg.budget;
    log::info!("resuming from {} at iteration {}", dir.display(), state.iteration);
    finish(&cfg, &mut engine, state)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<u8, Failure> {
    let payload = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))
        .map_err(Failure::invalid)?;
    let mut section = match &args.config {
        Some(path) => RunConfigFile::load(path)?.evaluator,
        None => Default::default(),
    };
    if let Some(t) = args.timeout {
        section.timeout_secs = t;
    }
    if !(section.timeout_secs > 0.0) {
        return Err(Failure::config(anyhow!("timeout must be positive")));
    }
    let task = match args.task {
        Some(t) => t,
        None => Construction::<f64>::from_json(payload.trim())
            .map(|c| c.task())
            .map_err(|e| Failure::invalid(anyhow!("--task is required unless the input is a construction document ({e})")))?,
    };
    let evaluator = Evaluator::new(section.spec(task), section.exec());
    let (result, _) = evaluator.evaluate(&payload);
    println!("{}", serde_json::to_string(&result).expect("result serializes"));
    Ok(if result.valid { 0 } else { 1 })
}

pub fn cmd_report(args: &ReportArgs) -> Result<u8, Failure> {
    let path = if args.run_dir.is_dir() {
        args.run_dir.join(LOG_FILE)
    } else {
        args.run_dir.clone()
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::invalid)?;
    let kind = match args.kind {
        KindArg::BestSoFar => ReportKind::BestSoFar,
        KindArg::Elo => ReportKind::Elo,
    };
    let csv = report::render(&text, kind).map_err(|e| Failure::invalid(anyhow!("{}: {e}", path.display())))?;
    match &args.output {
        Some(out) => fs::write(out, csv).map_err(Failure::invalid)?,
        None => print!("{csv}"),
    }
    Ok(0)
}
