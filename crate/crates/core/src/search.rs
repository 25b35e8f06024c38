//! Breadth-first search over symbolic states.
//!
//! Successors are generated in vocabulary order (lexicographic by action
//! text), so the first shortest plan found is deterministic.

use std::collections::{HashMap, VecDeque};

use crate::envs::SymbolicState;
use crate::plan::{ActionInstance, GoalSpec};

/// Shortest sequence of non-done actions reaching the goal, using at most
/// `max_actions` actions. `Some(vec![])` when the state already satisfies it.
pub fn shortest_plan(
    start: &SymbolicState,
    goal: &GoalSpec,
    vocab: &[ActionInstance],
    max_actions: usize,
) -> Option<Vec<ActionInstance>> {
    if start.is_goal(goal) {
        return Some(Vec::new());
    }
    let moves: Vec<&ActionInstance> = vocab.iter().filter(|a| !a.is_done).collect();
    // node -> (parent node, action index into `moves`)
    let mut nodes: Vec<(SymbolicState, usize, usize, usize)> = vec![(start.clone(), 0, 0, 0)];
    let mut index: HashMap<SymbolicState, usize> = HashMap::from([(start.clone(), 0)]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(n) = queue.pop_front() {
        let depth = nodes[n].3;
        if depth >= max_actions {
            continue;
        }
        for (ai, a) in moves.iter().enumerate() {
            let Ok(next) = nodes[n].0.step(goal, a) else {
                continue;
            };
            if index.contains_key(&next) {
                continue;
            }
            let id = nodes.len();
            let reached = next.is_goal(goal);
            index.insert(next.clone(), id);
            nodes.push((next, n, ai, depth + 1));
            if reached {
                let mut plan = Vec::with_capacity(depth + 1);
                let mut cur = id;
                while cur != 0 {
                    plan.push(moves[nodes[cur].2].clone());
                    cur = nodes[cur].1;
                }
                plan.reverse();
                return Some(plan);
            }
            queue.push_back(id);
        }
    }
    None
}

/// Number of actions, including the final done action, needed from `state`.
/// `None` when the goal is unreachable.
pub fn distance_with_done(state: &SymbolicState, goal: &GoalSpec, vocab: &[ActionInstance]) -> Option<usize> {
    shortest_plan(state, goal, vocab, usize::MAX).map(|p| p.len() + 1)
}
