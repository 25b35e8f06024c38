//! Optimal planning oracle and everything built from it: expert
//! trajectories, exact feasibility and payoff scorers, persisted datasets,
//! and the contrastive / regression samples used to train the scorers.

mod dataset;
mod samples;

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::envs::{EpisodeSpec, SymbolicState};
use crate::error::{Error, Result};
use crate::plan::{ActionInstance, GoalSpec, History};
use crate::search;

pub use dataset::{
    generate_dataset, read_trajectories, split_path, write_trajectories, Dataset, SplitCounts, TrajectoryRecord,
};
pub use samples::{make_can_samples, make_pay_samples, CanSample, PaySample};

/// Payoff discount applied per remaining step.
pub const DEFAULT_DELTA: f64 = 0.6;

/// An expert episode: the plan ends with the done action and reaches the goal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode_id: String,
    pub episode: EpisodeSpec,
    pub actions: Vec<ActionInstance>,
    pub reward: u8,
    pub optimal_length: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// History before step `t` (0-based), i.e. the first `t` actions.
    pub fn history_before(&self, t: usize) -> History {
        History {
            init_obs: self.episode.init_obs.clone(),
            actions: self.actions[..t].to_vec(),
        }
    }

    /// Re-executes the actions from the initial state. Ok when every
    /// precondition holds and the final done action is legal.
    pub fn replay(&self) -> Result<()> {
        let mut state = self.episode.init_state.clone();
        for a in &self.actions {
            state = state.step(&self.episode.goal, a)?;
        }
        match self.actions.last() {
            Some(a) if a.is_done => Ok(()),
            _ => Err(Error::Decode(format!("{} does not end with done", self.episode_id))),
        }
    }
}

/// Minimal plan from the episode's initial state, done action included.
pub fn bfs_plan(spec: &EpisodeSpec) -> Result<Trajectory> {
    bfs_plan_with_id(spec, format!("{}-{}-{}", spec.env(), spec.split, spec.seed))
}

pub(crate) fn bfs_plan_with_id(spec: &EpisodeSpec, episode_id: String) -> Result<Trajectory> {
    let vocab = spec.vocabulary();
    let budget = spec.max_steps.saturating_sub(1);
    let mut actions =
        search::shortest_plan(&spec.init_state, &spec.goal, &vocab, budget).ok_or_else(|| Error::Unsolvable {
            episode: episode_id.clone(),
            max_steps: spec.max_steps,
        })?;
    actions.push(spec.done_action());
    Ok(Trajectory {
        episode_id,
        episode: spec.clone(),
        optimal_length: actions.len(),
        actions,
        reward: 1,
    })
}

/// Actions still needed from `state`, counting the final done action.
/// `None` stands for an unreachable goal.
pub fn optimal_remaining(state: &SymbolicState, goal: &GoalSpec) -> Option<usize> {
    search::distance_with_done(state, goal, &state.vocabulary())
}

/// Replays a history from the episode's start. `None` once any action in it
/// is infeasible.
pub fn replay_history(episode: &EpisodeSpec, history: &History) -> Option<SymbolicState> {
    history
        .actions
        .iter()
        .try_fold(episode.init_state.clone(), |s, a| s.step(&episode.goal, a).ok())
}

/// Exact scorers backed by the symbolic simulator. Distances are memoized
/// per (goal, state), so one instance can be shared across episodes and
/// worker threads.
#[derive(Debug)]
pub struct Oracle {
    pub delta: f64,
    memo: Mutex<HashMap<(GoalSpec, SymbolicState), Option<usize>>>,
}

impl Default for Oracle {
    fn default() -> Self {
        Self::new(DEFAULT_DELTA)
    }
}

impl Clone for Oracle {
    fn clone(&self) -> Self {
        Self::new(self.delta)
    }
}

impl Oracle {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn remaining(&self, state: &SymbolicState, goal: &GoalSpec) -> Option<usize> {
        let key = (goal.clone(), state.clone());
        if let Some(&d) = self.memo.lock().expect("memo lock").get(&key) {
            return d;
        }
        let d = optimal_remaining(state, goal);
        self.memo.lock().expect("memo lock").insert(key, d);
        d
    }

    /// 1 when the action's precondition holds after the history, else 0.
    pub fn can(&self, episode: &EpisodeSpec, history: &History, action: &ActionInstance) -> Result<f64> {
        let Some(state) = replay_history(episode, history) else {
            return Ok(0.0);
        };
        Ok(if state.precondition_holds(&episode.goal, action)? {
            1.0
        } else {
            0.0
        })
    }

    /// `delta^d` where `d` counts the actions still needed after taking
    /// `action` (0 after a legal done); 0 for infeasible or dead-end actions.
    pub fn pay(&self, episode: &EpisodeSpec, history: &History, action: &ActionInstance) -> Result<f64> {
        let Some(state) = replay_history(episode, history) else {
            return Ok(0.0);
        };
        if !state.precondition_holds(&episode.goal, action)? {
            return Ok(0.0);
        }
        if action.is_done {
            return Ok(1.0);
        }
        let next = state.step(&episode.goal, action)?;
        Ok(match self.remaining(&next, &episode.goal) {
            Some(d) => self.delta.powi(d as i32),
            None => 0.0,
        })
    }
}

/// First action of an optimal continuation from the history, or `None`
/// when the history is already infeasible or the goal unreachable.
pub fn expert_next_action(episode: &EpisodeSpec, history: &History) -> Option<ActionInstance> {
    let state = replay_history(episode, history)?;
    if state.is_goal(&episode.goal) {
        return Some(episode.done_action());
    }
    let budget = episode.max_steps.saturating_sub(history.len() + 1);
    search::shortest_plan(&state, &episode.goal, &episode.vocabulary(), budget).and_then(|plan| plan.into_iter().next())
}
