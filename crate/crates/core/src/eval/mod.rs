//! Plan execution, metrics, and the evaluation grid.
//!
//! A plan succeeds only when it ends with a done action whose precondition
//! (the goal test) holds. Plan length counts every action including done.

mod report;
mod runner;

use serde::{Deserialize, Serialize};

pub use report::{write_episode_results, Cell, CellMetrics, Check, Report, SeedMetrics};
pub use runner::{provision, AblationKind, Evaluator, Grid, Provisioned};

use crate::decoding::PlanResult;
use crate::envs::EpisodeSpec;
use crate::error::{Error, Result};
use crate::oracle::Trajectory;
use crate::plan::ActionInstance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    /// Decoding config fingerprint.
    pub config: String,
    pub seed: u64,
    /// Absent when decoding itself failed.
    pub plan: Option<PlanResult>,
    pub error: Option<String>,
    pub executed_ok: bool,
    pub reached_goal: bool,
    pub plan_length: usize,
    pub optimal_length: usize,
    pub wall_time: f64,
}

/// Outcome of stepping a plan through the simulator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Execution {
    pub executed_ok: bool,
    pub reached_goal: bool,
}

/// Steps `actions` from the episode's initial state. The first precondition
/// violation halts execution; execution also stops at the first done action.
pub fn execute_actions(episode: &EpisodeSpec, actions: &[ActionInstance]) -> Result<Execution> {
    let mut state = episode.init_state.clone();
    for action in actions {
        if !state.precondition_holds(&episode.goal, action)? {
            return Ok(Execution {
                executed_ok: false,
                reached_goal: false,
            });
        }
        if action.is_done {
            return Ok(Execution {
                executed_ok: true,
                reached_goal: state.is_goal(&episode.goal),
            });
        }
        state = state.step(&episode.goal, action)?;
    }
    Ok(Execution {
        executed_ok: true,
        reached_goal: false,
    })
}

/// Executes a decoded plan for the episode of `trajectory`, whose oracle
/// length is the reference.
pub fn execute_plan(trajectory: &Trajectory, plan: PlanResult, config: &str, seed: u64) -> Result<EpisodeResult> {
    let exec = execute_actions(&trajectory.episode, &plan.plan)?;
    Ok(EpisodeResult {
        episode_id: trajectory.episode_id.clone(),
        config: config.to_string(),
        seed,
        plan_length: plan.plan.len(),
        plan: Some(plan),
        error: None,
        executed_ok: exec.executed_ok,
        reached_goal: exec.reached_goal,
        optimal_length: trajectory.optimal_length,
        wall_time: 0.0,
    })
}

/// Result for an episode whose decoding failed.
pub fn failed_episode(trajectory: &Trajectory, error: &Error, config: &str, seed: u64) -> EpisodeResult {
    EpisodeResult {
        episode_id: trajectory.episode_id.clone(),
        config: config.to_string(),
        seed,
        plan: None,
        error: Some(error.to_string()),
        executed_ok: false,
        reached_goal: false,
        plan_length: 0,
        optimal_length: trajectory.optimal_length,
        wall_time: 0.0,
    }
}

/// Number of plans that reached the goal. `expected` is the split size.
pub fn planning_success(results: &[EpisodeResult], expected: usize) -> Result<usize> {
    if results.len() != expected {
        return Err(Error::contract(format!(
            "expected {expected} episode results, got {}",
            results.len()
        )));
    }
    Ok(results.iter().filter(|r| r.reached_goal).count())
}

/// Successes whose length equals the oracle length.
pub fn cost_effectiveness(results: &[EpisodeResult]) -> usize {
    results
        .iter()
        .filter(|r| r.reached_goal && r.plan_length == r.optimal_length)
        .count()
}

/// Oracle length over generated length for successes; 0 otherwise.
pub fn relative_length(result: &EpisodeResult) -> f64 {
    if result.reached_goal && result.plan_length > 0 {
        result.optimal_length as f64 / result.plan_length as f64
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::Termination;
    use crate::envs::{reset, EnvId, Split};
    use crate::oracle::bfs_plan;

    fn plan_of(actions: Vec<ActionInstance>) -> PlanResult {
        PlanResult {
            plan: actions,
            per_step: Vec::new(),
            final_score: 0.0,
            terminated_by: Termination::Done,
        }
    }

    fn result(reached: bool, len: usize, opt: usize) -> EpisodeResult {
        EpisodeResult {
            episode_id: String::new(),
            config: String::new(),
            seed: 0,
            plan: None,
            error: None,
            executed_ok: reached,
            reached_goal: reached,
            plan_length: len,
            optimal_length: opt,
            wall_time: 0.0,
        }
    }

    #[test]
    fn oracle_trajectories_succeed() {
        for env in EnvId::ALL {
            for seed in 0..10 {
                let t = bfs_plan(&reset(env, seed, Split::Test).unwrap()).unwrap();
                let r = execute_plan(&t, plan_of(t.actions.clone()), "x", 0).unwrap();
                assert!(r.reached_goal && r.executed_ok);
                assert_eq!(relative_length(&r), 1.0);
            }
        }
    }

    #[test]
    fn violation_halts_execution() {
        let t = bfs_plan(&reset(EnvId::Hanoi, 2, Split::Test).unwrap()).unwrap();
        let ep = &t.episode;
        let first = t.actions[0].clone();
        let after = ep.init_state.step(&ep.goal, &first).unwrap();
        let bad = ep
            .vocabulary()
            .into_iter()
            .find(|a| !after.precondition_holds(&ep.goal, a).unwrap())
            .unwrap();
        let mut actions = vec![first, bad];
        actions.extend(t.actions[1..].iter().cloned());
        let r = execute_plan(&t, plan_of(actions), "x", 0).unwrap();
        assert!(!r.executed_ok && !r.reached_goal);
        assert_eq!(relative_length(&r), 0.0);
    }

    #[test]
    fn goal_without_done_is_not_success() {
        let t = bfs_plan(&reset(EnvId::Gridworld, 4, Split::Test).unwrap()).unwrap();
        let mut actions = t.actions.clone();
        assert!(actions.pop().unwrap().is_done);
        let r = execute_plan(&t, plan_of(actions), "x", 0).unwrap();
        assert!(r.executed_ok && !r.reached_goal);
    }

    #[test]
    fn early_done_is_failure() {
        let t = bfs_plan(&reset(EnvId::Blocks, 1, Split::Test).unwrap()).unwrap();
        let r = execute_plan(&t, plan_of(vec![t.episode.done_action()]), "x", 0).unwrap();
        assert!(!r.reached_goal);
    }

    #[test]
    fn counting_metrics() {
        let mut rs: Vec<EpisodeResult> = (0..100).map(|i| result(i < 37, 4 + i % 3, 4)).collect();
        assert_eq!(planning_success(&rs, 100).unwrap(), 37);
        let hand = (0..37).filter(|i| i % 3 == 0).count();
        assert_eq!(cost_effectiveness(&rs), hand);
        assert!(planning_success(&rs[..99], 100).is_err());
        rs.iter_mut().for_each(|r| r.reached_goal = false);
        assert_eq!(planning_success(&rs, 100).unwrap(), 0);
        assert_eq!(cost_effectiveness(&rs), 0);
    }

    #[test]
    fn relative_length_rule() {
        assert_eq!(relative_length(&result(true, 4, 4)), 1.0);
        assert!((relative_length(&result(true, 5, 3)) - 0.6).abs() < 1e-12);
        assert_eq!(relative_length(&result(false, 3, 3)), 0.0);
        assert_eq!(relative_length(&result(false, 0, 3)), 0.0);
    }
}
