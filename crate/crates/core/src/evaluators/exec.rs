//! Turning a task agent payload into a construction.
//!
//! A payload is either a literal construction document or program source.
//! Programs run in a child process with a wall-clock timeout, an address
//! space limit and an empty environment, and must print one construction
//! document on standard output.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Construction, TaskSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    /// Command used to run program payloads; the source file path is appended.
    pub interpreter: Vec<String>,
    /// Address space cap for the child, in MiB.
    pub memory_mb: Option<u64>,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            interpreter: vec!["python3".to_string()],
            memory_mb: Some(2048),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExecError {
    #[error("no construction emitted")]
    NoOutput,
    #[error("timeout after {0:?}")]
    Timeout(Duration),
    #[error("program exited with status {0}")]
    ExitStatus(String),
    #[error("malformed construction: {0}")]
    Malformed(String),
    #[error("could not launch program: {0}")]
    Spawn(String),
}

/// Literal construction documents are JSON objects carrying a `task` tag.
fn looks_literal(payload: &str) -> bool {
    let t = payload.trim_start();
    t.starts_with('{') && t.contains("\"task\"")
}

fn parse_output<T: Scalar>(stdout: &str) -> Result<Construction<T>, ExecError> {
    let trimmed = stdout.trim();
    if trimmed.is_empty() {
        return Err(ExecError::NoOutput);
    }
    if let Ok(c) = Construction::from_json(trimmed) {
        return Ok(c);
    }
    // tolerate chatter before the document: take the last line that parses
    let last = trimmed
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('{'))
        .ok_or(ExecError::NoOutput)?;
    Construction::from_json(last).map_err(|e| ExecError::Malformed(e.to_string()))
}

pub fn run_task_agent<T: Scalar>(payload: &str, spec: &TaskSpec<T>, exec: &ExecConfig) -> Result<Construction<T>, ExecError> {
    if looks_literal(payload) {
        return Construction::from_json(payload.trim()).map_err(|e| ExecError::Malformed(e.to_string()));
    }
    let stdout = run_program(payload, spec.exec_timeout, exec)?;
    parse_output(&stdout)
}

fn run_program(source: &str, timeout: Duration, exec: &ExecConfig) -> Result<String, ExecError> {
    let (program, args) = exec
        .interpreter
        .split_first()
        .ok_or_else(|| ExecError::Spawn("empty interpreter command".into()))?;
    let dir = tempfile::tempdir().map_err(|e| ExecError::Spawn(e.to_string()))?;
    let path = dir.path().join("agent_program");
    std::fs::File::create(&path)
        .and_then(|mut f| f.write_all(source.as_bytes()))
        .map_err(|e| ExecError::Spawn(e.to_string()))?;

    let mut cmd = Command::new(program);
    cmd.args(args)
        .arg(&path)
        .current_dir(dir.path())
        .env_clear()
        .env("PATH", std::env::var("PATH").unwrap_or_else(|_| "/usr/bin:/bin".into()))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    confine(&mut cmd, exec.memory_mb);

    let mut child = cmd.spawn().map_err(|e| ExecError::Spawn(e.to_string()))?;
    let mut out_pipe = child.stdout.take().expect("piped stdout");
    let mut err_pipe = child.stderr.take().expect("piped stderr");
    let reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out_pipe.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err_pipe.read_to_end(&mut buf);
        buf
    });

    let started = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if started.elapsed() >= timeout => {
                kill_tree(&mut child);
                let _ = child.wait();
                return Err(ExecError::Timeout(timeout));
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(ExecError::Spawn(e.to_string())),
        }
    };
    let stdout = reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    if !status.success() {
        let tail = String::from_utf8_lossy(&stderr);
        let tail = tail.lines().last().unwrap_or("").trim();
        return Err(ExecError::ExitStatus(if tail.is_empty() {
            status.to_string()
        } else {
            format!("{status}: {tail}")
        }));
    }
    Ok(String::from_utf8_lossy(&stdout).into_owned())
}

#[cfg(unix)]
fn confine(cmd: &mut Command, memory_mb: Option<u64>) {
    use std::os::unix::process::CommandExt;
    let limit = memory_mb.map(|mb| mb.saturating_mul(1024 * 1024));
    // SAFETY: only async-signal-safe libc calls between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            if let Some(bytes) = limit {
                let rl = libc::rlimit {
                    rlim_cur: bytes as libc::rlim_t,
                    rlim_max: bytes as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &rl) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
            }
            Ok(())
        });
    }
}

#[cfg(not(unix))]
fn confine(_cmd: &mut Command, _memory_mb: Option<u64>) {}

#[cfg(unix)]
fn kill_tree(child: &mut std::process::Child) {
    // the child leads its own process group
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_tree(child: &mut std::process::Child) {
    let _ = child.kill();
}
