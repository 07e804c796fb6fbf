//! Rank-based softmax selection.
//!
//! Every draw in the loop (task parents, benchmarking cohorts, the lead
//! optimizer and checkpoint choice) goes through the same mechanism: the
//! candidate with the highest score gets rank 0 and is selected with
//! probability proportional to `exp(-rank / tau)`. Only the ordering of
//! the scores matters, never their magnitude.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::population::{AgentRecord, Population};
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("cannot sample from an empty candidate list")]
    Empty,
    #[error("candidate {0} has a non-finite score")]
    NonFinite(usize),
    #[error("temperature must be positive and finite")]
    BadTemperature,
    #[error("requested {requested} draws from {available} candidates")]
    NotEnoughCandidates { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerRole {
    TaskParent,
    Matchmaking,
    Mentoring,
    Checkpoint,
}

impl SamplerRole {
    pub fn default_temperature(self) -> f64 {
        match self {
            SamplerRole::Mentoring => 0.5,
            SamplerRole::TaskParent | SamplerRole::Matchmaking | SamplerRole::Checkpoint => 1.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig<T> {
    pub temperature: T,
    pub role: SamplerRole,
}

impl<T: Scalar> SamplerConfig<T> {
    pub fn new(role: SamplerRole, temperature: T) -> Result<Self, SamplingError> {
        if !(temperature > T::zero() && temperature.is_finite()) {
            return Err(SamplingError::BadTemperature);
        }
        Ok(Self { temperature, role })
    }

    pub fn for_role(role: SamplerRole) -> Self {
        Self {
            temperature: T::lit(role.default_temperature()),
            role,
        }
    }
}

/// Rank of each position: 0 for the best score, ties resolved in favour of
/// the earlier position.
pub fn ranks<T: Scalar>(scores: &[T]) -> Result<Vec<usize>, SamplingError> {
    if scores.is_empty() {
        return Err(SamplingError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(SamplingError::NonFinite(i));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps list order among equal scores
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut rank = vec![0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    Ok(rank)
}

fn check_temperature<T: Scalar>(tau: T) -> Result<(), SamplingError> {
    if tau > T::zero() && tau.is_finite() {
        Ok(())
    } else {
        Err(SamplingError::BadTemperature)
    }
}

fn rank_weights<T: Scalar>(scores: &[T], tau: T) -> Result<Vec<T>, SamplingError> {
    check_temperature(tau)?;
    Ok(ranks(scores)?
        .into_iter()
        .map(|r| (-T::from_count(r) / tau).exp())
        .collect())
}

/// Selection probability of every candidate.
pub fn rank_softmax_probs<T: Scalar>(scores: &[T], tau: T) -> Result<Vec<T>, SamplingError> {
    let weights = rank_weights(scores, tau)?;
    let total: T = weights.iter().copied().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Draws `k` distinct positions without replacement. Each draw uses the
/// rank weights of the full list renormalized over the positions not yet
/// taken. Positions are returned in draw order.
pub fn sample_indices<T: Scalar, R: Rng + ?Sized>(
    scores: &[T],
    k: usize,
    tau: T,
    rng: &mut R,
) -> Result<Vec<usize>, SamplingError> {
    if k > scores.len() {
        return Err(SamplingError::NotEnoughCandidates {
            requested: k,
            available: scores.len(),
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut weights = rank_weights(scores, tau)?;
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let total: T = weights.iter().copied().sum();
        let target = T::lit(rng.random::<f64>()) * total;
        let mut acc = T::zero();
        let mut chosen = None;
        for (i, &w) in weights.iter().enumerate() {
            if w <= T::zero() {
                continue;
            }
            acc = acc + w;
            chosen = Some(i);
            if target < acc {
                break;
            }
        }
        // every remaining weight underflowed to zero: fall back to the best remaining rank
        let i = match chosen {
            Some(i) => i,
            None => best_remaining(scores, &picked)?,
        };
        weights[i] = T::zero();
        picked.push(i);
    }
    Ok(picked)
}

fn best_remaining<T: Scalar>(scores: &[T], picked: &[usize]) -> Result<usize, SamplingError> {
    let rank = ranks(scores)?;
    (0..scores.len())
        .filter(|i| !picked.contains(i))
        .min_by_key(|&i| rank[i])
        .ok_or(SamplingError::Empty)
}

/// Draws `k` distinct members; the first record is the lead when the role is
/// `Mentoring`.
pub fn sample_subset<'a, T: Scalar, R: Rng + ?Sized>(
    pop: &'a Population<T>,
    k: usize,
    cfg: &SamplerConfig<T>,
    rng: &mut R,
) -> Result<Vec<&'a AgentRecord<T>>, SamplingError> {
    let idx = sample_indices(&pop.scores(), k, cfg.temperature, rng)?;
    Ok(idx.into_iter().map(|i| &pop.members()[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{AgentId, AgentKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_candidate_has_probability_one() {
        assert_eq!(rank_softmax_probs(&[5.0f64], 1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn two_candidates_at_unit_temperature() {
        let oracle_top = 1.0 / (1.0 + (-1.0f64).exp());
        let p = rank_softmax_probs(&[2.0f64, 1.0], 1.0).unwrap();
        assert!((p[0] - oracle_top).abs() < 1e-12);
        assert!((p[1] - (1.0 - oracle_top)).abs() < 1e-12);
        assert!((p[0] - 0.73106).abs() < 1e-5);
    }

    #[test]
    fn huge_temperature_is_uniform() {
        let p = rank_softmax_probs(&[9.0f64, 8.0, 7.0], 1e6).unwrap();
        for q in p {
            assert!((q - 1.0 / 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn ties_favour_earlier_positions() {
        assert_eq!(ranks(&[1.0f64, 3.0, 3.0, 2.0]).unwrap(), vec![3, 0, 1, 2]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(rank_softmax_probs::<f64>(&[], 1.0), Err(SamplingError::Empty));
        assert_eq!(rank_softmax_probs(&[1.0, f64::NAN], 1.0), Err(SamplingError::NonFinite(1)));
        assert_eq!(rank_softmax_probs(&[1.0f64], 0.0), Err(SamplingError::BadTemperature));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_indices(&[1.0f64, 2.0], 3, 1.0, &mut rng),
            Err(SamplingError::NotEnoughCandidates { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let p = rank_softmax_probs(&[2.0f32, 1.0], 1.0).unwrap();
        assert!((p[0] - 0.731_058_6).abs() < 1e-6);
    }

    #[test]
    fn exhaustive_draw_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut idx = sample_indices(&[0.1f64, 0.5, 0.2, 0.9, 0.3], 5, 1.2, &mut rng).unwrap();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn near_zero_temperature_picks_the_argmax() {
        let scores = [0.4f64, 0.8, 0.1, 0.7];
        let argmax = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hits = (0..10_000)
            .filter(|_| sample_indices(&scores, 1, 1e-6, &mut rng).unwrap()[0] == argmax)
            .count();
        assert!(hits as f64 / 10_000.0 >= 0.999);
    }

    #[test]
    fn cold_draws_without_replacement_follow_rank_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let idx = sample_indices(&[0.4f64, 0.8, 0.1, 0.7], 4, 1e-6, &mut rng).unwrap();
        assert_eq!(idx, vec![1, 3, 0, 2]);
    }

    #[test]
    fn subset_is_deterministic_under_seed() {
        let mut pop = Population::new(AgentKind::Optimizer, 10);
        for i in 0..6 {
            pop.insert(AgentRecord::new(AgentId(i), AgentKind::Optimizer, "", 1200.0 + (i * 7 % 5) as f64))
                .unwrap();
        }
        let cfg = SamplerConfig::for_role(SamplerRole::Matchmaking);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_subset(&pop, 4, &cfg, &mut rng)
                .unwrap()
                .iter()
                .map(|r| r.id)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_eq!(draw(9).len(), 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_transform_is_bit_identical(
                scores in proptest::collection::vec(-100.0f64..100.0, 1..20),
                tau in 0.05f64..10.0,
            ) {
                let transformed: Vec<f64> = scores.iter().map(|s| (s / 50.0).exp() * 3.0 + 7.0).collect();
                let a = rank_softmax_probs(&scores, tau).unwrap();
                let b = rank_softmax_probs(&transformed, tau).unwrap();
                prop_assert_eq!(
                    a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                    b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
                );
            }

            #[test]
            fn probabilities_sum_to_one_and_decrease_with_rank(
                scores in proptest::collection::vec(-1.0f64..1.0, 1..30),
                tau in 0.01f64..100.0,
            ) {
                let p = rank_softmax_probs(&scores, tau).unwrap();
                let sum: f64 = p.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                let r = ranks(&scores).unwrap();
                for i in 0..p.len() {
                    for j in 0..p.len() {
                        if r[i] < r[j] {
                            prop_assert!(p[i] >= p[j]);
                        }
                    }
                }
            }
        }
    }
}
