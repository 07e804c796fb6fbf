//! Append-only JSONL run log.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::population::{AgentId, AgentKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// One generation call, successful or not, with what it cost.
    Gen {
        iter: u64,
        operator: AgentId,
        target: AgentKind,
        ok: bool,
        tokens_in: u64,
        tokens_out: u64,
        backend: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    /// One task evaluation. `id` is the task agent inserted for it.
    Eval {
        iter: u64,
        id: AgentId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        operator: Option<AgentId>,
        valid: bool,
        s_raw: f64,
        s_norm: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        violation: Option<String>,
    },
    Elo {
        iter: u64,
        id: AgentId,
        old: f64,
        new: f64,
    },
    /// A new optimizer entered the population (seeds have no lead).
    Meta {
        iter: u64,
        id: AgentId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lead: Option<AgentId>,
        parents: Vec<AgentId>,
        rating: f64,
    },
    Evict {
        iter: u64,
        id: AgentId,
        kind: AgentKind,
        score: f64,
    },
    /// Benchmarking round without any usable generation.
    Void { iter: u64 },
    Checkpoint { iter: u64, dir: String },
    BestSoFar {
        iter: u64,
        eq_tokens: f64,
        best: f64,
        s_raw: f64,
    },
}

impl Event {
    pub fn iter(&self) -> u64 {
        match self {
            Event::Gen { iter, .. }
            | Event::Eval { iter, .. }
            | Event::Elo { iter, .. }
            | Event::Meta { iter, .. }
            | Event::Evict { iter, .. }
            | Event::Void { iter }
            | Event::Checkpoint { iter, .. }
            | Event::BestSoFar { iter, .. } => *iter,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

/// Parses a whole log. Blank lines are skipped; anything else must be an event.
pub fn parse_log(text: &str) -> Result<Vec<Event>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", n + 1)))
        .collect()
}

pub struct RunLog {
    sink: Option<BufWriter<File>>,
    buffered: Vec<Event>,
    keep: bool,
}

impl RunLog {
    /// Appends to `path`, creating it if needed.
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            sink: Some(BufWriter::new(file)),
            buffered: Vec::new(),
            keep: false,
        })
    }

    /// Keeps events in memory only.
    pub fn in_memory() -> Self {
        Self {
            sink: None,
            buffered: Vec::new(),
            keep: true,
        }
    }

    pub fn emit(&mut self, event: Event) -> io::Result<()> {
        if let Some(sink) = self.sink.as_mut() {
            writeln!(sink, "{}", event.to_line())?;
        }
        if self.keep {
            self.buffered.push(event);
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.sink.as_mut() {
            Some(s) => s.flush(),
            None => Ok(()),
        }
    }

    /// Events recorded by an in-memory log.
    pub fn events(&self) -> &[Event] {
        &self.buffered
    }
}
