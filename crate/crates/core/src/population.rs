//! Score-bearing agent populations with capacity-bounded eviction.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Task,
    Optimizer,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentKind::Task => f.write_str("task"),
            AgentKind::Optimizer => f.write_str("optimizer"),
        }
    }
}

/// A task agent or an optimizer agent.
///
/// For task agents `score` is the normalized task score; for optimizers it
/// is the current Elo rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AgentRecord<T> {
    pub id: AgentId,
    pub kind: AgentKind,
    pub payload: String,
    pub score: T,
    pub parent_ids: Vec<AgentId>,
    pub created_at_iteration: u64,
    pub eval_count: u64,
}

impl<T: Scalar> AgentRecord<T> {
    pub fn new(id: AgentId, kind: AgentKind, payload: impl Into<String>, score: T) -> Self {
        Self {
            id,
            kind,
            payload: payload.into(),
            score,
            parent_ids: Vec::new(),
            created_at_iteration: 0,
            eval_count: 0,
        }
    }

    pub fn with_parents(mut self, parents: Vec<AgentId>, iteration: u64) -> Self {
        self.parent_ids = parents;
        self.created_at_iteration = iteration;
        self
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PopulationError {
    #[error("agent {0} is already a member")]
    DuplicateId(AgentId),
    #[error("cannot insert a {got} agent into a {expected} population")]
    KindMismatch { expected: AgentKind, got: AgentKind },
    #[error("agent {0} has a non-finite score")]
    NonFiniteScore(AgentId),
    #[error("population is empty")]
    Empty,
}

/// Behaviour descriptor for the optional MAP-Elites overlay: payload length
/// bucket by evaluation-count bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub length_bucket_width: usize,
    pub length_buckets: usize,
    pub eval_bucket_width: u64,
    pub eval_buckets: u64,
}

impl Default for GridDescriptor {
    fn default() -> Self {
        Self {
            length_bucket_width: 512,
            length_buckets: 8,
            eval_bucket_width: 5,
            eval_buckets: 4,
        }
    }
}

impl GridDescriptor {
    pub fn cell<T>(&self, rec: &AgentRecord<T>) -> (usize, u64) {
        let len = (rec.payload.len() / self.length_bucket_width.max(1)).min(self.length_buckets - 1);
        let evals = (rec.eval_count / self.eval_bucket_width.max(1)).min(self.eval_buckets - 1);
        (len, evals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Eviction {
    /// Remove the lowest-scoring member once over capacity.
    #[default]
    Lowest,
    /// Keep one elite per descriptor cell, then fall back to `Lowest`.
    GridElites(GridDescriptor),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Population<T> {
    kind: AgentKind,
    capacity: usize,
    #[serde(default)]
    eviction: Eviction,
    members: Vec<AgentRecord<T>>,
}

impl<T: Scalar> Population<T> {
    pub fn new(kind: AgentKind, capacity: usize) -> Self {
        assert!(capacity > 0, "population capacity must be positive");
        Self {
            kind,
            capacity,
            eviction: Eviction::Lowest,
            members: Vec::new(),
        }
    }

    pub fn with_eviction(mut self, eviction: Eviction) -> Self {
        self.eviction = eviction;
        self
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn eviction(&self) -> Eviction {
        self.eviction
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in insertion order, oldest first.
    pub fn members(&self) -> &[AgentRecord<T>] {
        &self.members
    }

    pub fn scores(&self) -> Vec<T> {
        self.members.iter().map(|m| m.score).collect()
    }

    pub fn get(&self, id: AgentId) -> Option<&AgentRecord<T>> {
        self.members.iter().find(|m| m.id == id)
    }

    pub fn get_mut(&mut self, id: AgentId) -> Option<&mut AgentRecord<T>> {
        self.members.iter_mut().find(|m| m.id == id)
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.get(id).is_some()
    }

    /// Inserts `rec` and returns whatever the eviction policy removed.
    pub fn insert(&mut self, rec: AgentRecord<T>) -> Result<Vec<AgentRecord<T>>, PopulationError> {
        if rec.kind != self.kind {
            return Err(PopulationError::KindMismatch {
                expected: self.kind,
                got: rec.kind,
            });
        }
        if self.contains(rec.id) {
            return Err(PopulationError::DuplicateId(rec.id));
        }
        if !rec.score.is_finite() {
            return Err(PopulationError::NonFiniteScore(rec.id));
        }

        let new_id = rec.id;
        self.members.push(rec);
        let mut evicted = Vec::new();

        if let Eviction::GridElites(grid) = self.eviction {
            let cell = grid.cell(self.members.last().expect("just pushed"));
            let same_cell: Vec<usize> = (0..self.members.len())
                .filter(|&i| grid.cell(&self.members[i]) == cell)
                .collect();
            if same_cell.len() > 1 {
                let elite = same_cell
                    .iter()
                    .copied()
                    .reduce(|a, b| if self.members[b].score > self.members[a].score { b } else { a })
                    .expect("non-empty cell");
                let elite_id = self.members[elite].id;
                let (keep, drop): (Vec<_>, Vec<_>) = std::mem::take(&mut self.members)
                    .into_iter()
                    .partition(|m| m.id == elite_id || grid.cell(m) != cell);
                self.members = keep;
                evicted.extend(drop);
            }
        }

        while self.members.len() > self.capacity {
            let victim = self.weakest_index().expect("over capacity implies non-empty");
            evicted.push(self.members.remove(victim));
        }
        debug_assert!(self.members.iter().any(|m| m.id == new_id) || evicted.iter().any(|m| m.id == new_id));
        Ok(evicted)
    }

    /// Lowest score; among equal scores the earliest-inserted member.
    fn weakest_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, m) in self.members.iter().enumerate() {
            match best {
                None => best = Some(i),
                Some(b) if m.score < self.members[b].score => best = Some(i),
                _ => {}
            }
        }
        best
    }

    /// Highest score; ties go to the earlier-created record, then the smaller id.
    pub fn best(&self) -> Result<&AgentRecord<T>, PopulationError> {
        self.members
            .iter()
            .min_by(|a, b| {
                b.score
                    .partial_cmp(&a.score)
                    .unwrap_or(Ordering::Equal)
                    .then(a.created_at_iteration.cmp(&b.created_at_iteration))
                    .then(a.id.cmp(&b.id))
            })
            .ok_or(PopulationError::Empty)
    }

    pub fn total_eval_count(&self) -> u64 {
        self.members.iter().map(|m| m.eval_count).sum()
    }
}
