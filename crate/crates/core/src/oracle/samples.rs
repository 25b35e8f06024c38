use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};
use crate::plan::{ActionInstance, GoalSpec, History};

/// Contrastive sample: the expert action at one step plus two negatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanSample {
    /// Index of the source trajectory; used to split train / validation.
    pub trajectory: usize,
    pub history: History,
    pub goal: GoalSpec,
    pub positive: ActionInstance,
    /// Expert action from another step of the same trajectory.
    pub neg_same: ActionInstance,
    /// Expert action from a different trajectory.
    pub neg_cross: ActionInstance,
}

/// Regression sample with a discounted payoff target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaySample {
    pub trajectory: usize,
    pub history: History,
    pub goal: GoalSpec,
    pub action: ActionInstance,
    pub target: f64,
}

const MAX_REDRAWS: usize = 64;

/// Draws from `pick` until the action text differs from `positive`.
fn distinct<R: Rng>(
    rng: &mut R,
    positive: &ActionInstance,
    mut pick: impl FnMut(&mut R) -> ActionInstance,
) -> ActionInstance {
    let mut a = pick(rng);
    for _ in 0..MAX_REDRAWS {
        if a.text != positive.text {
            break;
        }
        a = pick(rng);
    }
    a
}

fn cross_action<R: Rng>(rng: &mut R, trajectories: &[Trajectory], own: usize) -> ActionInstance {
    let mut j = rng.gen_range(0..trajectories.len() - 1);
    if j >= own {
        j += 1;
    }
    trajectories[j]
        .actions
        .choose(rng)
        .expect("trajectories are non-empty")
        .clone()
}

fn check_corpus(trajectories: &[Trajectory]) -> Result<()> {
    if trajectories.len() < 2 {
        return Err(Error::contract(
            "at least two trajectories are needed to draw cross-trajectory negatives",
        ));
    }
    if trajectories.iter().any(|t| t.is_empty()) {
        return Err(Error::contract("empty trajectory in corpus"));
    }
    Ok(())
}

/// One sample per (trajectory, step). Negatives are redrawn while their text
/// equals the positive.
pub fn make_can_samples(trajectories: &[Trajectory], seed: u64) -> Result<Vec<CanSample>> {
    check_corpus(trajectories)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (i, traj) in trajectories.iter().enumerate() {
        let vocab = traj.episode.vocabulary();
        for (t, positive) in traj.actions.iter().enumerate() {
            let neg_same = distinct(&mut rng, positive, |rng| {
                if traj.len() > 1 {
                    let mut s = rng.gen_range(0..traj.len() - 1);
                    if s >= t {
                        s += 1;
                    }
                    traj.actions[s].clone()
                } else {
                    vocab.choose(rng).expect("non-empty vocabulary").clone()
                }
            });
            let neg_cross = distinct(&mut rng, positive, |rng| cross_action(rng, trajectories, i));
            out.push(CanSample {
                trajectory: i,
                history: traj.history_before(t),
                goal: traj.episode.goal.clone(),
                positive: positive.clone(),
                neg_same,
                neg_cross,
            });
        }
    }
    Ok(out)
}

/// For each expert step `t` (1-based) of a length-`T` trajectory, a positive
/// sample with target `delta^(T-t)` followed by one zero-target negative
/// drawn from another trajectory.
pub fn make_pay_samples(trajectories: &[Trajectory], delta: f64, seed: u64) -> Result<Vec<PaySample>> {
    check_corpus(trajectories)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::contract(format!("discount {delta} is outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (i, traj) in trajectories.iter().enumerate() {
        let n = traj.len();
        for (t, action) in traj.actions.iter().enumerate() {
            let history = traj.history_before(t);
            out.push(PaySample {
                trajectory: i,
                history: history.clone(),
                goal: traj.episode.goal.clone(),
                action: action.clone(),
                target: delta.powi((n - 1 - t) as i32),
            });
            let negative = distinct(&mut rng, action, |rng| cross_action(rng, trajectories, i));
            out.push(PaySample {
                trajectory: i,
                history,
                goal: traj.episode.goal.clone(),
                action: negative,
                target: 0.0,
            });
        }
    }
    Ok(out)
}
