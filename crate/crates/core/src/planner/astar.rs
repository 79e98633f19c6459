use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::{raw_heuristic, ActionId, ProgressionModel, ProgressionState, Weights};
use crate::error::{Error, Result};

pub const DEFAULT_NODE_CUTOFF: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanStatus {
    Reached,
    /// Node budget spent first; the plan is the best partial one.
    Cutoff,
    /// Every reachable state was expanded without meeting the goal.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub status: PlanStatus,
    pub actions: Vec<ActionId>,
    pub expanded: usize,
    pub final_state: ProgressionState,
}

impl Plan {
    pub fn reached(&self) -> bool {
        self.status == PlanStatus::Reached
    }

    pub fn action_names<'a>(&self, model: &'a ProgressionModel) -> Vec<&'a str> {
        self.actions.iter().map(|a| model.action_name(*a)).collect()
    }
}

struct Node {
    f: u32,
    score: f64,
    path: Vec<ActionId>,
    state: ProgressionState,
}

// Max-heap order: smaller f first, then higher designer score, then the
// lexicographically smaller action sequence.
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .cmp(&self.f)
            .then_with(|| self.score.total_cmp(&other.score))
            .then_with(|| other.path.cmp(&self.path))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

/// A* over the action graph with unit action cost.
///
/// The remaining-cost estimate is [`ProgressionModel::remaining_bound`]; the
/// weighted designer score orders nodes of equal estimate.
pub fn astar_plan(model: &ProgressionModel, start: &ProgressionState, weights: &Weights, node_cutoff: usize) -> Result<Plan> {
    weights.validate()?;
    if node_cutoff == 0 {
        return Err(Error::invalid("node cutoff must be at least 1"));
    }
    let mut best_g: HashMap<_, u32> = HashMap::new();
    let mut open = BinaryHeap::new();
    let mut best_partial = (raw_heuristic(start, weights), Vec::new(), start.clone());
    let mut expanded = 0;

    if let Some(h) = model.remaining_bound(start) {
        best_g.insert(start.key(), 0);
        open.push(Node {
            f: h,
            score: raw_heuristic(start, weights),
            path: Vec::new(),
            state: start.clone(),
        });
    }

    while let Some(node) = open.pop() {
        let g = node.path.len() as u32;
        if best_g.get(&node.state.key()).is_some_and(|b| *b < g) {
            continue;
        }
        if model.is_goal(&node.state) {
            return Ok(Plan {
                status: PlanStatus::Reached,
                actions: node.path,
                expanded,
                final_state: node.state,
            });
        }
        if expanded >= node_cutoff {
            let (_, actions, final_state) = best_partial;
            return Ok(Plan {
                status: PlanStatus::Cutoff,
                actions,
                expanded,
                final_state,
            });
        }
        expanded += 1;
        for a in model.available_actions(&node.state) {
            let next = model.apply_action(&node.state, a)?;
            let Some(h) = model.remaining_bound(&next) else {
                continue;
            };
            let key = next.key();
            if best_g.get(&key).is_some_and(|b| *b <= g + 1) {
                continue;
            }
            best_g.insert(key, g + 1);
            let mut path = node.path.clone();
            path.push(a);
            let score = raw_heuristic(&next, weights);
            let better = score > best_partial.0 || (score == best_partial.0 && path.len() < best_partial.1.len());
            if better {
                best_partial = (score, path.clone(), next.clone());
            }
            open.push(Node {
                f: g + 1 + h,
                score,
                path,
                state: next,
            });
        }
    }
    let (_, actions, final_state) = best_partial;
    Ok(Plan {
        status: PlanStatus::Exhausted,
        actions,
        expanded,
        final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures;
    use super::*;

    #[test]
    fn toy_plan_has_four_actions() {
        let m = fixtures::toy();
        let p = astar_plan(&m, &m.start(), &Weights::default(), DEFAULT_NODE_CUTOFF).unwrap();
        assert!(p.reached());
        assert_eq!(p.actions.len(), 4);
        assert_eq!(p.final_state.xp, 30);
        let mut s = m.start();
        for a in &p.actions {
            s = m.apply_action(&s, *a).unwrap();
        }
        assert!(m.is_goal(&s));
    }

    #[test]
    fn goal_at_start_gives_empty_plan() {
        let m = fixtures::toy();
        let mut s = m.start();
        s.xp = 30;
        let p = astar_plan(&m, &s, &Weights::default(), DEFAULT_NODE_CUTOFF).unwrap();
        assert!(p.reached() && p.actions.is_empty() && p.expanded == 0);
    }

    #[test]
    fn cutoff_one_fails_softly() {
        let m = fixtures::toy();
        let p = astar_plan(&m, &m.start(), &Weights::default(), 1).unwrap();
        assert_eq!(p.status, PlanStatus::Cutoff);
        assert_eq!(p.expanded, 1);
        assert_eq!(p.actions.len(), 1);
    }

    #[test]
    fn same_plan_every_run() {
        let m = fixtures::medic();
        let a = astar_plan(&m, &m.start(), &Weights::default(), DEFAULT_NODE_CUTOFF).unwrap();
        let b = astar_plan(&m, &m.start(), &Weights::default(), DEFAULT_NODE_CUTOFF).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_weights_rejected() {
        let m = fixtures::toy();
        let w = Weights {
            level: 1.0,
            xp: 1.0,
            events: 1.0,
        };
        assert!(astar_plan(&m, &m.start(), &w, 10).is_err());
    }
}
