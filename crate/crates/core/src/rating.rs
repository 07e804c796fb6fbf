//! Dynamic benchmarking: same-round task scores become pairwise outcomes,
//! which feed optimizer Elo ratings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::population::AgentId;
use crate::scalar::Scalar;

pub const INITIAL_RATING: f64 = 1200.0;
pub const DEFAULT_K_FACTOR: f64 = 32.0;
pub const DEFAULT_DRAW_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum RatingError {
    #[error("a competition needs at least two scores, got {0}")]
    TooFewScores(usize),
    #[error("round score {0} is not finite")]
    NonFinite(usize),
    #[error("optimizer {0} has no rating")]
    Unrated(AgentId),
    #[error("cohort has {cohort} ids but the result matrix is {size}x{size}")]
    ShapeMismatch { cohort: usize, size: usize },
    #[error("cannot initialize a rating from zero parents")]
    NoParents,
}

/// Pairwise outcome of one benchmarking round, indexed by cohort position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ResultMatrix<T> {
    pub wins: Vec<Vec<i8>>,
    pub cohort: Vec<AgentId>,
    pub round_scores: Vec<T>,
}

impl<T: Scalar> ResultMatrix<T> {
    pub fn size(&self) -> usize {
        self.wins.len()
    }

    pub fn is_all_draws(&self) -> bool {
        self.wins.iter().flatten().all(|&w| w == 0)
    }
}

/// Builds the win/loss/draw matrix. The cohort ids are attached separately
/// with [`ResultMatrix::cohort`]; this function only looks at scores.
pub fn pairwise_competition<T: Scalar>(round_scores: &[T], draw_tol: T) -> Result<ResultMatrix<T>, RatingError> {
    let n = round_scores.len();
    if n < 2 {
        return Err(RatingError::TooFewScores(n));
    }
    if let Some(i) = round_scores.iter().position(|s| !s.is_finite()) {
        return Err(RatingError::NonFinite(i));
    }
    let mut wins = vec![vec![0i8; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if round_scores[i] > round_scores[j] + draw_tol {
                wins[i][j] = 1;
            } else if round_scores[j] > round_scores[i] + draw_tol {
                wins[i][j] = -1;
            }
        }
    }
    Ok(ResultMatrix {
        wins,
        cohort: Vec::new(),
        round_scores: round_scores.to_vec(),
    })
}

/// Logistic expected score of a player rated `own` against `other`.
pub fn expected_score<T: Scalar>(own: T, other: T) -> T {
    T::one() / (T::one() + T::lit(10.0).powf((other - own) / T::lit(400.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RatingChange<T> {
    pub iteration: u64,
    pub id: AgentId,
    pub old: T,
    pub new: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EloLedger<T> {
    ratings: BTreeMap<AgentId, T>,
    k_factor: T,
    initial: T,
    history: Vec<RatingChange<T>>,
}

impl<T: Scalar> Default for EloLedger<T> {
    fn default() -> Self {
        Self::new(T::lit(DEFAULT_K_FACTOR), T::lit(INITIAL_RATING))
    }
}

impl<T: Scalar> EloLedger<T> {
    pub fn new(k_factor: T, initial: T) -> Self {
        assert!(k_factor > T::zero(), "k-factor must be positive");
        Self {
            ratings: BTreeMap::new(),
            k_factor,
            initial,
            history: Vec::new(),
        }
    }

    pub fn k_factor(&self) -> T {
        self.k_factor
    }

    pub fn initial_rating(&self) -> T {
        self.initial
    }

    pub fn rating(&self, id: AgentId) -> Option<T> {
        self.ratings.get(&id).copied()
    }

    pub fn ratings(&self) -> &BTreeMap<AgentId, T> {
        &self.ratings
    }

    pub fn history(&self) -> &[RatingChange<T>] {
        &self.history
    }

    /// Registers a new optimizer; `None` uses the initial rating.
    pub fn register(&mut self, id: AgentId, rating: Option<T>) -> T {
        let r = rating.unwrap_or(self.initial);
        self.ratings.insert(id, r);
        r
    }

    /// Drops an evicted optimizer. Its trajectory stays in `history`.
    pub fn retire(&mut self, id: AgentId) -> Option<T> {
        self.ratings.remove(&id)
    }

    /// Sequential pairwise Elo update over `result.cohort`.
    ///
    /// Pairs `(i, j)` with `i < j` are processed in ascending order and each
    /// update sees the ratings produced by the previous pairs. One history
    /// entry per cohort member records its net change for the round.
    pub fn update(&mut self, result: &ResultMatrix<T>, iteration: u64) -> Result<Vec<RatingChange<T>>, RatingError> {
        let n = result.cohort.len();
        if result.size() != n {
            return Err(RatingError::ShapeMismatch {
                cohort: n,
                size: result.size(),
            });
        }
        let mut current = Vec::with_capacity(n);
        for id in &result.cohort {
            current.push(self.rating(*id).ok_or(RatingError::Unrated(*id))?);
        }
        let start = current.clone();
        let half = T::lit(0.5);
        for i in 0..n {
            for j in (i + 1)..n {
                let expected_i = expected_score(current[i], current[j]);
                let actual_i = match result.wins[i][j] {
                    1 => T::one(),
                    -1 => T::zero(),
                    _ => half,
                };
                let delta = self.k_factor * (actual_i - expected_i);
                current[i] = current[i] + delta;
                current[j] = current[j] - delta;
            }
        }
        let mut changes = Vec::with_capacity(n);
        for (idx, id) in result.cohort.iter().enumerate() {
            self.ratings.insert(*id, current[idx]);
            let change = RatingChange {
                iteration,
                id: *id,
                old: start[idx],
                new: current[idx],
            };
            self.history.push(change.clone());
            changes.push(change);
        }
        Ok(changes)
    }
}

/// Rating given to a freshly generated optimizer: the mean of its parents.
pub fn initialize_offspring_rating<T: Scalar>(parent_ratings: &[T]) -> Result<T, RatingError> {
    if parent_ratings.is_empty() {
        return Err(RatingError::NoParents);
    }
    let sum: T = parent_ratings.iter().copied().sum();
    Ok(sum / T::from_count(parent_ratings.len()))
}
