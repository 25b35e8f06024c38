//! Text-world environments with symbolic state.
//!
//! Three worlds are provided: a Tower of Hanoi variant whose goals name a
//! single disk and rod ([`hanoi`]), placing colored blocks into colored bowls
//! ([`blocks`]), and a room-level gridworld pickup task with locked doors and
//! keys ([`gridworld`]).
//!
//! Every world exposes the same surface through [`SymbolicState`]: an
//! episode-level action vocabulary, precondition checks, deterministic
//! transitions, a goal test, and template rendering of observations that can
//! be parsed back into state.

pub mod blocks;
pub mod gridworld;
pub mod hanoi;
mod text;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{ActionInstance, GoalSpec, Symbol};
use crate::search;

pub use blocks::BlocksState;
pub use gridworld::GridState;
pub use hanoi::HanoiState;

/// Step bound shared by every environment; the done action counts as a step.
pub const MAX_STEPS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Hanoi,
    Blocks,
    Gridworld,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::Hanoi, EnvId::Blocks, EnvId::Gridworld];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Hanoi => "hanoi",
            EnvId::Blocks => "blocks",
            EnvId::Gridworld => "gridworld",
        }
    }

    pub fn done_text(self) -> &'static str {
        match self {
            EnvId::Hanoi => hanoi::DONE_TEXT,
            EnvId::Blocks => blocks::DONE_TEXT,
            EnvId::Gridworld => gridworld::DONE_TEXT,
        }
    }

    fn tag(self) -> u64 {
        match self {
            EnvId::Hanoi => 1,
            EnvId::Blocks => 2,
            EnvId::Gridworld => 3,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hanoi" => Ok(EnvId::Hanoi),
            "blocks" => Ok(EnvId::Blocks),
            "gridworld" => Ok(EnvId::Gridworld),
            other => Err(Error::UnknownEnv(other.to_owned())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "test")]
    Test,
    #[serde(rename = "test-generalize")]
    TestGeneralize,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::TestGeneralize];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::TestGeneralize => "test-generalize",
        }
    }

    pub fn is_generalize(self) -> bool {
        matches!(self, Split::TestGeneralize)
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => 11,
            Split::Test => 13,
            Split::TestGeneralize => 17,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "test-generalize" | "gen" => Ok(Split::TestGeneralize),
            other => Err(Error::contract(format!("unknown split `{other}`"))),
        }
    }
}

/// Full symbolic state of one episode. Entities never disappear from the
/// state, so the action vocabulary derived from it is stable across steps.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "env", rename_all = "lowercase")]
pub enum SymbolicState {
    Hanoi(HanoiState),
    Blocks(BlocksState),
    Gridworld(GridState),
}

/// Outcome of a precondition check that found the action well-formed.
pub(crate) type Check = std::result::Result<(), String>;

/// Behaviour each concrete world implements; [`SymbolicState`] dispatches to it.
pub(crate) trait World: Sized {
    fn vocabulary(&self) -> Vec<ActionInstance>;
    /// Whether the operator names entities of this episode.
    fn knows(&self, op: &Symbol) -> bool;
    /// Precondition of a known, non-done operator.
    fn check(&self, op: &Symbol) -> Check;
    /// Successor under a known operator whose precondition holds.
    fn apply(&self, op: &Symbol) -> Self;
    fn is_goal(&self, goal: &Symbol) -> bool;
    fn render(&self) -> String;
    fn parse(text: &str) -> Result<Self>;
    fn validate(&self) -> std::result::Result<(), String>;
}

macro_rules! dispatch {
    ($self:expr, $s:ident => $body:expr) => {
        match $self {
            SymbolicState::Hanoi($s) => $body,
            SymbolicState::Blocks($s) => $body,
            SymbolicState::Gridworld($s) => $body,
        }
    };
}

impl SymbolicState {
    pub fn env(&self) -> EnvId {
        match self {
            SymbolicState::Hanoi(_) => EnvId::Hanoi,
            SymbolicState::Blocks(_) => EnvId::Blocks,
            SymbolicState::Gridworld(_) => EnvId::Gridworld,
        }
    }

    /// Every operator instantiation over this episode's entities plus the
    /// done action, sorted by text. Includes infeasible actions.
    pub fn vocabulary(&self) -> Vec<ActionInstance> {
        let mut vocab = dispatch!(self, s => s.vocabulary());
        vocab.sort();
        vocab
    }

    fn ensure_known(&self, action: &ActionInstance) -> Result<()> {
        let known = if action.is_done {
            action.text == self.env().done_text()
        } else {
            action.text != self.env().done_text() && dispatch!(self, s => s.knows(&action.op))
        };
        if known {
            Ok(())
        } else {
            Err(Error::ForeignAction {
                env: self.env().to_string(),
                action: action.text.clone(),
            })
        }
    }

    fn violation(&self, goal: &GoalSpec, action: &ActionInstance) -> Result<Check> {
        self.ensure_known(action)?;
        if action.is_done {
            return Ok(if self.is_goal(goal) {
                Ok(())
            } else {
                Err(format!("goal `{}` is not satisfied", goal.text))
            });
        }
        Ok(dispatch!(self, s => s.check(&action.op)))
    }

    pub fn precondition_holds(&self, goal: &GoalSpec, action: &ActionInstance) -> Result<bool> {
        Ok(self.violation(goal, action)?.is_ok())
    }

    /// Applies an action. The done action leaves the state unchanged.
    pub fn step(&self, goal: &GoalSpec, action: &ActionInstance) -> Result<SymbolicState> {
        if let Err(violated) = self.violation(goal, action)? {
            return Err(Error::InfeasibleAction {
                action: action.text.clone(),
                violated,
            });
        }
        if action.is_done {
            return Ok(self.clone());
        }
        Ok(match self {
            SymbolicState::Hanoi(s) => SymbolicState::Hanoi(s.apply(&action.op)),
            SymbolicState::Blocks(s) => SymbolicState::Blocks(s.apply(&action.op)),
            SymbolicState::Gridworld(s) => SymbolicState::Gridworld(s.apply(&action.op)),
        })
    }

    pub fn is_goal(&self, goal: &GoalSpec) -> bool {
        dispatch!(self, s => s.is_goal(&goal.predicate))
    }

    pub fn render_observation(&self) -> String {
        dispatch!(self, s => s.render())
    }

    pub fn parse_observation(env: EnvId, text: &str) -> Result<SymbolicState> {
        Ok(match env {
            EnvId::Hanoi => SymbolicState::Hanoi(HanoiState::parse(text)?),
            EnvId::Blocks => SymbolicState::Blocks(BlocksState::parse(text)?),
            EnvId::Gridworld => SymbolicState::Gridworld(GridState::parse(text)?),
        })
    }

    /// Checks the structural invariants of the state.
    pub fn validate(&self) -> std::result::Result<(), String> {
        dispatch!(self, s => s.validate())
    }
}

/// Text of an action exactly as it appears in the vocabulary.
pub fn render_action(action: &ActionInstance) -> &str {
    &action.text
}

/// One planning problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub goal: GoalSpec,
    pub init_obs: String,
    pub init_state: SymbolicState,
    pub split: Split,
    pub seed: u64,
    pub max_steps: usize,
}

impl EpisodeSpec {
    /// Episode starting from `state`, with the observation rendered from it.
    pub fn new(state: SymbolicState, goal: GoalSpec, split: Split, seed: u64) -> Self {
        Self {
            goal,
            init_obs: state.render_observation(),
            init_state: state,
            split,
            seed,
            max_steps: MAX_STEPS,
        }
    }

    pub fn env(&self) -> EnvId {
        self.init_state.env()
    }

    pub fn vocabulary(&self) -> Vec<ActionInstance> {
        self.init_state.vocabulary()
    }

    pub fn done_action(&self) -> ActionInstance {
        done_action(self.env())
    }

    /// Vocabulary entry with exactly this text.
    pub fn action(&self, text: &str) -> Result<ActionInstance> {
        self.vocabulary()
            .into_iter()
            .find(|a| a.text == text)
            .ok_or_else(|| Error::ForeignAction {
                env: self.env().to_string(),
                action: text.to_owned(),
            })
    }
}

pub fn done_action(env: EnvId) -> ActionInstance {
    ActionInstance::new(env.done_text(), Symbol::new("done", Vec::<String>::new()), true)
        .expect("done texts are well-formed")
}

/// SplitMix64 finalizer; used wherever seeds fan out deterministically.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws the episode for `(env, seed, split)`. Rejects draws that start at
/// the goal or cannot be solved within [`MAX_STEPS`].
pub fn reset(env: EnvId, seed: u64, split: Split) -> Result<EpisodeSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, env.tag()), split.tag()));
    loop {
        let (state, goal) = match env {
            EnvId::Hanoi => hanoi::sample(&mut rng, split),
            EnvId::Blocks => blocks::sample(&mut rng, split),
            EnvId::Gridworld => gridworld::sample(&mut rng, split),
        };
        if state.is_goal(&goal) {
            continue;
        }
        let vocab = state.vocabulary();
        if search::shortest_plan(&state, &goal, &vocab, MAX_STEPS - 1).is_none() {
            continue;
        }
        return Ok(EpisodeSpec {
            init_obs: state.render_observation(),
            goal,
            init_state: state,
            split,
            seed,
            max_steps: MAX_STEPS,
        });
    }
}

/// Episode-level action vocabulary, sorted, including infeasible actions.
pub fn admissible_actions(spec: &EpisodeSpec) -> Vec<ActionInstance> {
    spec.vocabulary()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use std::collections::{HashSet, VecDeque};

    #[test]
    fn unknown_env_is_an_error() {
        assert!(matches!("virtualhome".parse::<EnvId>(), Err(Error::UnknownEnv(_))));
    }

    #[test]
    fn reset_is_deterministic() {
        for env in EnvId::ALL {
            for split in Split::ALL {
                let a = reset(env, 42, split).unwrap();
                let b = reset(env, 42, split).unwrap();
                assert_eq!(a, b);
                assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            }
        }
    }

    #[test]
    fn init_obs_matches_rendered_state() {
        for env in EnvId::ALL {
            for seed in 0..20 {
                let spec = reset(env, seed, Split::Train).unwrap();
                assert_eq!(spec.init_obs, spec.init_state.render_observation());
                assert!(!spec.init_state.is_goal(&spec.goal));
            }
        }
    }

    #[test]
    fn vocabulary_is_sorted_and_ends_with_done() {
        for env in EnvId::ALL {
            let spec = reset(env, 3, Split::Test).unwrap();
            let vocab = admissible_actions(&spec);
            let texts: Vec<_> = vocab.iter().map(|a| a.text.clone()).collect();
            let mut sorted = texts.clone();
            sorted.sort();
            assert_eq!(texts, sorted);
            assert_eq!(vocab.iter().filter(|a| a.is_done).count(), 1);
            assert!(texts.contains(&env.done_text().to_owned()));
            for a in &vocab {
                assert_eq!(render_action(a), a.text);
            }
        }
    }

    #[test]
    fn foreign_actions_are_rejected() {
        let hanoi = reset(EnvId::Hanoi, 0, Split::Train).unwrap();
        let grid = reset(EnvId::Gridworld, 0, Split::Train).unwrap();
        let foreign = grid.vocabulary()[0].clone();
        assert!(matches!(
            hanoi.init_state.precondition_holds(&hanoi.goal, &foreign),
            Err(Error::ForeignAction { .. })
        ));
        let other_done = done_action(EnvId::Blocks);
        assert!(hanoi.init_state.precondition_holds(&hanoi.goal, &other_done).is_err());
    }

    fn reachable(spec: &EpisodeSpec) -> Vec<SymbolicState> {
        let vocab = spec.vocabulary();
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([spec.init_state.clone()]);
        seen.insert(spec.init_state.clone());
        let mut out = Vec::new();
        while let Some(s) = queue.pop_front() {
            for a in &vocab {
                if let Ok(next) = s.step(&spec.goal, a) {
                    if seen.insert(next.clone()) {
                        queue.push_back(next);
                    }
                }
            }
            out.push(s);
        }
        out
    }

    #[test]
    fn step_succeeds_exactly_when_precondition_holds_hanoi3() {
        for seed in 0..10 {
            let spec = reset(EnvId::Hanoi, seed, Split::Train).unwrap();
            let states = reachable(&spec);
            assert_eq!(states.len(), 27);
            for s in &states {
                for a in spec.vocabulary() {
                    let pre = s.precondition_holds(&spec.goal, &a).unwrap();
                    match s.step(&spec.goal, &a) {
                        Ok(_) => assert!(pre),
                        Err(Error::InfeasibleAction { .. }) => assert!(!pre),
                        Err(e) => panic!("unexpected error {e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn done_at_goal_is_a_noop() {
        for env in EnvId::ALL {
            let spec = reset(env, 5, Split::Train).unwrap();
            let plan = search::shortest_plan(&spec.init_state, &spec.goal, &spec.vocabulary(), 19).unwrap();
            let end = plan
                .iter()
                .fold(spec.init_state.clone(), |s, a| s.step(&spec.goal, a).unwrap());
            assert!(end.is_goal(&spec.goal));
            let done = spec.done_action();
            assert!(end.precondition_holds(&spec.goal, &done).unwrap());
            assert_eq!(end.step(&spec.goal, &done).unwrap(), end);
            assert!(!spec.init_state.precondition_holds(&spec.goal, &done).unwrap());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn invariants_hold_along_random_rollouts(
            env_ix in 0usize..3,
            seed in 0u64..500,
            gen in any::<bool>(),
            walk in any::<u64>(),
        ) {
            let env = EnvId::ALL[env_ix];
            let split = if gen { Split::TestGeneralize } else { Split::Train };
            let spec = reset(env, seed, split).unwrap();
            let vocab = spec.vocabulary();
            let mut rng = ChaCha8Rng::seed_from_u64(walk);
            let mut state = spec.init_state.clone();
            prop_assert_eq!(state.validate(), Ok(()));
            for _ in 0..15 {
                let legal: Vec<_> = vocab
                    .iter()
                    .filter(|a| !a.is_done && state.precondition_holds(&spec.goal, a).unwrap())
                    .collect();
                let Some(a) = legal.choose(&mut rng) else { break };
                state = state.step(&spec.goal, a).unwrap();
                prop_assert_eq!(state.validate(), Ok(()));
                prop_assert_eq!(state.vocabulary(), vocab.clone());
                let text = state.render_observation();
                let parsed = SymbolicState::parse_observation(env, &text).unwrap();
                prop_assert_eq!(&parsed, &state);
                prop_assert_eq!(parsed.render_observation(), text);
            }
        }
    }
}
