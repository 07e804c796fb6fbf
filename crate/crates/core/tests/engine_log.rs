mod common;

use std::collections::BTreeMap;

use coevolve::backends::{ScriptedBackend, Strategy};
use coevolve::engine::{Event, LoopConfig};
use coevolve::population::AgentId;
use coevolve::TaskKind;

use common::{engine, grid_seed};

#[test]
fn log_reconstructs_ratings_and_rounds_are_zero_sum() {
    let cfg = LoopConfig {
        checkpoint_every: 0,
        max_iterations: 60,
        optimizer_capacity: 8,
        ..LoopConfig::default()
    };
    let mut engine = engine(TaskKind::Cp, cfg, Box::new(ScriptedBackend::new(TaskKind::Cp)));
    let ops: Vec<String> = [0.01, 0.03, 0.1].iter().map(|&s| Strategy::gaussian(s, 0.05).to_payload()).collect();
    let state = engine.initialize(&[grid_seed()], &ops, 1e12, 9).unwrap();
    let state = engine.run(state).unwrap();

    let mut ratings: BTreeMap<AgentId, f64> = BTreeMap::new();
    let mut per_iter: BTreeMap<u64, f64> = BTreeMap::new();
    for e in engine.log().events() {
        match e {
            Event::Meta { id, rating, .. } => {
                ratings.insert(*id, *rating);
            }
            Event::Elo { iter, id, old, new } => {
                assert_eq!(ratings[id], *old, "elo event for {id:?} starts from the logged rating");
                ratings.insert(*id, *new);
                *per_iter.entry(*iter).or_default() += new - old;
            }
            Event::Evict { id, .. } => {
                ratings.remove(id);
            }
            _ => {}
        }
    }
    assert!(!per_iter.is_empty());
    for (iter, net) in per_iter {
        assert!(net.abs() < 1e-9, "iteration {iter}: net change {net}");
    }
    let live: BTreeMap<AgentId, f64> = state.opt_pop.members().iter().map(|o| (o.id, o.score)).collect();
    for (id, r) in &live {
        assert_eq!(ratings.get(id), Some(r));
        assert_eq!(state.ledger.rating(*id), Some(*r));
    }
}

#[test]
fn best_so_far_is_monotone_and_matches_state() {
    let cfg = LoopConfig {
        checkpoint_every: 0,
        max_iterations: 40,
        ..LoopConfig::default()
    };
    let mut engine = engine(TaskKind::Cp, cfg, Box::new(ScriptedBackend::new(TaskKind::Cp)));
    let ops = vec![Strategy::gaussian(0.02, 0.0).to_payload()];
    let state = engine.initialize(&[grid_seed()], &ops, 1e12, 4).unwrap();
    let state = engine.run(state).unwrap();
    let series: Vec<(f64, f64)> = engine
        .log()
        .events()
        .iter()
        .filter_map(|e| match e {
            Event::BestSoFar { eq_tokens, best, .. } => Some((*eq_tokens, *best)),
            _ => None,
        })
        .collect();
    assert_eq!(series.len(), 40);
    assert!(series.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    assert_eq!(series.last().unwrap().1, state.best_score());
}

#[test]
fn worker_count_does_not_change_the_run() {
    let logs: Vec<Vec<Event>> = [1, 3]
        .iter()
        .map(|&workers| {
            let cfg = LoopConfig {
                checkpoint_every: 0,
                max_iterations: 25,
                workers,
                ..LoopConfig::default()
            };
            let mut engine = engine(TaskKind::Ht, cfg, Box::new(ScriptedBackend::new(TaskKind::Ht)));
            let seed = coevolve::config::builtin_task_seed(TaskKind::Ht).to_json();
            let ops = vec![Strategy::gaussian(0.02, 0.05).to_payload(); 5];
            let state = engine.initialize(&[seed], &ops, 1e12, 12).unwrap();
            engine.run(state).unwrap();
            engine.log().events().to_vec()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}
