//! Checkpoint directories: `ckpt_<iter>/` holding one JSON file per piece of
//! run state. Directories are written under a temporary name and renamed
//! into place.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{BestSoFar, RunState};
use crate::sampling::sample_indices;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint file {file}: {msg}")]
    Corrupt { file: String, msg: String },
    #[error("no checkpoints under {0}")]
    NoneFound(PathBuf),
    #[error("config digest mismatch: checkpoint has {stored}, manifest config hashes to {computed}")]
    DigestMismatch { stored: String, computed: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub iteration: u64,
    pub config_digest: String,
    pub next_id: u64,
    #[serde(default)]
    pub best: Option<BestSoFar>,
    /// Full resolved run configuration, so a resume needs nothing else.
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, String> {
        use rand::SeedableRng;
        let bytes = hex::decode(&self.seed).map_err(|e| e.to_string())?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| "seed must be 32 bytes".to_string())?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse::<u128>().map_err(|e| e.to_string())?);
        Ok(rng)
    }
}

pub fn checkpoint_name(iteration: u64) -> String {
    format!("ckpt_{iteration}")
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    fs::write(dir.join(name), text)
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T, CheckpointError> {
    let text = fs::read_to_string(dir.join(name))?;
    serde_json::from_str(&text).map_err(|e| CheckpointError::Corrupt {
        file: name.to_string(),
        msg: e.to_string(),
    })
}

/// Writes `state` to `<root>/ckpt_<iteration>` and returns that path.
pub fn save_checkpoint(root: &Path, state: &RunState, config: &Value) -> io::Result<PathBuf> {
    fs::create_dir_all(root)?;
    let name = checkpoint_name(state.iteration);
    let tmp = root.join(format!(".{name}.tmp"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    write_json(&tmp, "task_pop.json", &state.task_pop)?;
    write_json(&tmp, "opt_pop.json", &state.opt_pop)?;
    write_json(&tmp, "ledger.json", &state.ledger)?;
    write_json(&tmp, "budget.json", &state.budget)?;
    write_json(&tmp, "rng.json", &RngState::capture(&state.rng))?;
    let manifest = Manifest {
        iteration: state.iteration,
        config_digest: state.config_digest.clone(),
        next_id: state.next_id,
        best: state.best.clone(),
        config: config.clone(),
    };
    write_json(&tmp, "manifest.json", &manifest)?;
    let dest = root.join(&name);
    if dest.exists() {
        fs::remove_dir_all(&dest)?;
    }
    fs::rename(&tmp, &dest)?;
    Ok(dest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, CheckpointError> {
    read_json(dir, "manifest.json")
}

pub fn load_checkpoint(dir: &Path) -> Result<(RunState, Manifest), CheckpointError> {
    let manifest = load_manifest(dir)?;
    let computed = super::config_digest(&manifest.config);
    if computed != manifest.config_digest {
        return Err(CheckpointError::DigestMismatch {
            stored: manifest.config_digest.clone(),
            computed,
        });
    }
    let rng_state: RngState = read_json(dir, "rng.json")?;
    let rng = rng_state.restore().map_err(|msg| CheckpointError::Corrupt {
        file: "rng.json".into(),
        msg,
    })?;
    let state = RunState {
        iteration: manifest.iteration,
        task_pop: read_json(dir, "task_pop.json")?,
        opt_pop: read_json(dir, "opt_pop.json")?,
        ledger: read_json(dir, "ledger.json")?,
        budget: read_json(dir, "budget.json")?,
        rng,
        next_id: manifest.next_id,
        best: manifest.best.clone(),
        config_digest: manifest.config_digest.clone(),
    };
    Ok((state, manifest))
}

pub fn is_checkpoint_dir(path: &Path) -> bool {
    path.join("manifest.json").is_file()
}

/// Checkpoints under a run directory, sorted by iteration.
pub fn list_checkpoints(run_dir: &Path) -> io::Result<Vec<(u64, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(run_dir)? {
        let path = entry?.path();
        let iter = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("ckpt_"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(iter) = iter {
            if is_checkpoint_dir(&path) {
                found.push((iter, path));
            }
        }
    }
    found.sort();
    Ok(found)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResumePick {
    #[default]
    Latest,
    /// Rank-softmax draw over the checkpoints' best-so-far scores.
    Best,
}

pub fn select_checkpoint(
    run_dir: &Path,
    pick: ResumePick,
    temperature: f64,
    rng: &mut dyn RngCore,
) -> Result<PathBuf, CheckpointError> {
    let found = list_checkpoints(run_dir)?;
    if found.is_empty() {
        return Err(CheckpointError::NoneFound(run_dir.to_path_buf()));
    }
    match pick {
        ResumePick::Latest => Ok(found.last().expect("non-empty").1.clone()),
        ResumePick::Best => {
            let mut scores = Vec::with_capacity(found.len());
            for (_, path) in &found {
                let m = load_manifest(path)?;
                scores.push(m.best.map(|b| b.s_norm).unwrap_or(0.0));
            }
            let pick = sample_indices(&scores, 1, temperature, rng).map_err(|e| CheckpointError::Corrupt {
                file: "manifest.json".into(),
                msg: e.to_string(),
            })?;
            Ok(found[pick[0]].1.clone())
        }
    }
}
