use std::collections::{HashSet, VecDeque};

use mimic::planner::{
    astar_plan, es_optimize, fixtures, rollout_objective, EsConfig, PlanStatus, ProgressionModel, ProgressionState, Weights,
    DEFAULT_NODE_CUTOFF,
};

type Key = (Vec<i64>, u32, i64, u32, u32, Option<usize>);

fn key(s: &ProgressionState) -> Key {
    (s.resources.clone(), s.level, s.xp, s.completed, s.attempted, s.event)
}

/// Shortest goal-reaching length by breadth-first search, plus states seen.
fn bfs(model: &ProgressionModel, limit: usize) -> Option<(usize, usize)> {
    let start = model.start();
    let mut seen = HashSet::from([key(&start)]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((s, d)) = queue.pop_front() {
        if model.is_goal(&s) {
            return Some((d, seen.len()));
        }
        for a in model.available_actions(&s) {
            let n = model.apply_action(&s, a).unwrap();
            if seen.insert(key(&n)) {
                assert!(seen.len() <= limit, "state space too large for the oracle");
                queue.push_back((n, d + 1));
            }
        }
    }
    None
}

#[test]
fn astar_matches_bfs_on_small_fixtures() {
    for m in fixtures::small() {
        let (best, states) = bfs(&m, 100_000).expect("goal reachable");
        let plan = astar_plan(&m, &m.start(), &Weights::default(), DEFAULT_NODE_CUTOFF).unwrap();
        assert_eq!(plan.status, PlanStatus::Reached, "{}", m.name());
        assert_eq!(plan.actions.len(), best, "{} ({states} states)", m.name());
    }
}

#[test]
fn toy_bfs_optimum_is_four() {
    assert_eq!(bfs(&fixtures::toy(), 100_000).unwrap().0, 4);
}

#[test]
fn oversized_fixture_hits_cutoff_with_partial_plan() {
    let m = fixtures::workshop();
    let plan = astar_plan(&m, &m.start(), &Weights::default(), DEFAULT_NODE_CUTOFF).unwrap();
    assert_eq!(plan.status, PlanStatus::Cutoff);
    assert_eq!(plan.expanded, DEFAULT_NODE_CUTOFF);
    assert!(!plan.actions.is_empty());
    let mut s = m.start();
    for a in &plan.actions {
        s = m.apply_action(&s, *a).unwrap();
    }
    assert_eq!(s, plan.final_state);
}

#[test]
fn es_event_count_tracks_astar() {
    for m in fixtures::small() {
        let plan = astar_plan(&m, &m.start(), &Weights::default(), DEFAULT_NODE_CUTOFF).unwrap();
        let target = plan.final_state.completed as f64;
        let cfg = EsConfig {
            seed: 1,
            ..Default::default()
        };
        let r = es_optimize(&m, &cfg).unwrap();
        let first = r.history.iter().position(|h| (h.mean_completed - target).abs() <= 0.1 * target);
        let eval: f64 = (0..64)
            .map(|s| rollout_objective(&m, &r.params, cfg.horizon, cfg.epsilon, 10_000 + s).unwrap().completed as f64)
            .sum::<f64>()
            / 64.0;
        println!(
            "{}: astar events {target}, es first within 10% at {first:?}, best-params events {eval:.3}, last mean J {:.3}",
            m.name(),
            r.history.last().unwrap().mean_j
        );
        assert!(first.is_some());
        assert!((eval - target).abs() <= 0.1 * target);
    }
}
