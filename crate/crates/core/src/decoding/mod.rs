//! Plan search over admissible actions.
//!
//! Greedy-Token descends a token trie induced by the Say policy.
//! Greedy-Action and Beam-Action rank whole candidate actions by the decoding
//! score of the configured mode; Greedy-Action is Beam-Action with one beam.

mod backends;
mod mapping;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use backends::{BackendKind, OracleCan, OraclePay, PerfectSay, Proposer, Scorer, Scorers, PERFECT_SAY_CANDIDATES};
pub use mapping::{map_to_admissible, normalize_text};

use crate::envs::{EpisodeSpec, MAX_STEPS};
use crate::error::{Error, Result};
use crate::models::{argmax_token, TokenTrie, EOS};
use crate::plan::{length_normalize, ActionInstance, Beam, History, ScoreMode, ScoredCandidate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    GreedyToken,
    GreedyAction,
    BeamAction,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::GreedyToken, Strategy::GreedyAction, Strategy::BeamAction];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::GreedyToken => "greedy-token",
            Strategy::GreedyAction => "greedy-action",
            Strategy::BeamAction => "beam-action",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy-token" => Ok(Strategy::GreedyToken),
            "greedy-action" => Ok(Strategy::GreedyAction),
            "beam-action" => Ok(Strategy::BeamAction),
            _ => Err(Error::contract(format!(
                "unknown strategy `{s}` (expected greedy-token, greedy-action or beam-action)"
            ))),
        }
    }
}

/// What a beam carries into the next expansion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Carry {
    /// Raw sum of step log-scores; divided by length only when ranking.
    #[default]
    Sum,
    /// The length-normalized score itself, re-normalized at every step.
    Normalized,
}

impl Carry {
    pub fn as_str(self) -> &'static str {
        match self {
            Carry::Sum => "sum",
            Carry::Normalized => "normalized",
        }
    }

    fn extend(self, beam: &Beam, candidate: ScoredCandidate, max_steps: usize) -> Result<Beam> {
        let mut next = beam.extended(candidate, max_steps)?;
        if self == Carry::Normalized {
            next.f_acc = length_normalize(next.f_acc, next.history.len())?;
        }
        Ok(next)
    }

    fn rank_score(self, beam: &Beam) -> f64 {
        match self {
            Carry::Sum => beam.normalized_score(),
            Carry::Normalized => beam.f_acc,
        }
    }
}

impl fmt::Display for Carry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Carry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Carry::Sum),
            "normalized" => Ok(Carry::Normalized),
            _ => Err(Error::contract(format!(
                "unknown carry `{s}` (expected sum or normalized)"
            ))),
        }
    }
}

/// Which backend fills each scorer role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Backends {
    pub say: BackendKind,
    pub can: BackendKind,
    pub pay: BackendKind,
}

impl Default for Backends {
    fn default() -> Self {
        Self {
            say: BackendKind::Trained,
            can: BackendKind::Trained,
            pay: BackendKind::Trained,
        }
    }
}

impl Backends {
    pub fn oracle() -> Self {
        Self {
            say: BackendKind::Uniform,
            can: BackendKind::Oracle,
            pay: BackendKind::Oracle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.say.check_role("say")?;
        self.can.check_role("can")?;
        self.pay.check_role("pay")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub strategy: Strategy,
    pub score_mode: ScoreMode,
    /// Candidates proposed per expansion.
    pub m: usize,
    /// Beams kept; must not exceed `m`.
    pub k: usize,
    pub max_steps: usize,
    #[serde(default)]
    pub carry: Carry,
    pub backends: Backends,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::BeamAction,
            score_mode: ScoreMode::SayCanPay,
            m: 6,
            k: 3,
            max_steps: MAX_STEPS,
            carry: Carry::Sum,
            backends: Backends::default(),
        }
    }
}

impl DecodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.k > self.m {
            return Err(Error::contract(format!(
                "need 1 <= k <= m, got m = {}, k = {}",
                self.m, self.k
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::contract("max_steps must be at least 1"));
        }
        self.backends.validate()
    }

    /// Short stable description used to label report cells.
    pub fn fingerprint(&self) -> String {
        let carry = match self.carry {
            Carry::Sum => String::new(),
            c => format!("/{c}"),
        };
        format!(
            "{}/{}/m{}/k{}/s{}{carry}/{}-{}-{}",
            self.strategy,
            self.score_mode,
            self.m,
            self.k,
            self.max_steps,
            self.backends.say,
            self.backends.can,
            self.backends.pay
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Done,
    StepLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub plan: Vec<ActionInstance>,
    pub per_step: Vec<ScoredCandidate>,
    /// Length-normalized accumulated step log-score.
    pub final_score: f64,
    pub terminated_by: Termination,
}

impl PlanResult {
    fn from_beam(beam: Beam, carry: Carry) -> Result<Self> {
        let terminated_by = if beam.history.last().is_some_and(|a| a.is_done) {
            Termination::Done
        } else {
            Termination::StepLimit
        };
        Ok(Self {
            final_score: match carry {
                Carry::Sum => length_normalize(beam.f_acc, beam.history.len())?,
                Carry::Normalized => beam.f_acc,
            },
            plan: beam.history.actions,
            per_step: beam.steps,
            terminated_by,
        })
    }

    pub fn plan_texts(&self) -> Vec<&str> {
        self.plan.iter().map(|a| a.text.as_str()).collect()
    }
}

pub fn is_terminal(action: &ActionInstance) -> bool {
    action.is_done
}

/// Scores the top-`m` proposals for extending `history`, in proposal order.
/// Factors not used by the score mode are reported as 1.
pub fn score_candidates(
    scorers: Scorers<'_>,
    episode: &EpisodeSpec,
    history: &History,
    vocab: &[ActionInstance],
    config: &DecodingConfig,
) -> Result<Vec<ScoredCandidate>> {
    let proposals = scorers.say.propose(episode, history, vocab, config.m)?;
    let mode = config.score_mode;
    proposals
        .into_iter()
        .map(|(action, p_say)| {
            if !vocab.contains(&action) {
                return Err(Error::ForeignAction {
                    env: episode.env().to_string(),
                    action: action.text,
                });
            }
            let p_can = match (mode.uses_can(), scorers.can) {
                (true, Some(s)) => s.score(episode, history, &action)?,
                (true, None) => return Err(Error::contract("score mode needs a Can scorer")),
                (false, _) => 1.0,
            };
            let f_pay = match (mode.uses_pay(), scorers.pay) {
                (true, Some(s)) => s.score(episode, history, &action)?,
                (true, None) => return Err(Error::contract("score mode needs a Pay scorer")),
                (false, _) => 1.0,
            };
            Ok(ScoredCandidate::new(action, p_say, p_can, f_pay, mode)?)
        })
        .collect()
}

/// Candidate order: higher step score first, then smaller action text.
fn candidate_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.step_log_score
        .total_cmp(&a.step_log_score)
        .then_with(|| a.action.cmp(&b.action))
}

/// Beam order: higher normalized score, then higher last step score, then
/// lexicographically smaller action sequence.
fn beam_order(carry: Carry, a: &Beam, b: &Beam) -> Ordering {
    let last = |x: &Beam| x.steps.last().map_or(f64::INFINITY, |s| s.step_log_score);
    carry
        .rank_score(b)
        .total_cmp(&carry.rank_score(a))
        .then_with(|| last(b).total_cmp(&last(a)))
        .then_with(|| a.history.actions.cmp(&b.history.actions))
}

/// One action at a time, always taking the best-scoring candidate.
pub fn greedy_action(scorers: Scorers<'_>, episode: &EpisodeSpec, config: &DecodingConfig) -> Result<PlanResult> {
    config.validate()?;
    let vocab = episode.vocabulary();
    let mut beam = Beam::root(History::new(episode.init_obs.clone()));
    while !beam.terminated {
        let mut cands = score_candidates(scorers, episode, &beam.history, &vocab, config)?;
        cands.sort_by(candidate_order);
        let best = cands
            .into_iter()
            .next()
            .ok_or_else(|| Error::Decode(format!("no candidates at step {}", beam.history.len() + 1)))?;
        beam = config.carry.extend(&beam, best, config.max_steps)?;
    }
    PlanResult::from_beam(beam, config.carry)
}

/// Keeps the `k` best partial plans by length-normalized score; finished
/// plans stay in the pool at their frozen score.
pub fn beam_action(scorers: Scorers<'_>, episode: &EpisodeSpec, config: &DecodingConfig) -> Result<PlanResult> {
    config.validate()?;
    let vocab = episode.vocabulary();
    let mut beams = vec![Beam::root(History::new(episode.init_obs.clone()))];
    while beams.iter().any(|b| !b.terminated) {
        let mut pool = Vec::with_capacity(beams.len() * config.m);
        for beam in beams {
            if beam.terminated {
                pool.push(beam);
                continue;
            }
            for cand in score_candidates(scorers, episode, &beam.history, &vocab, config)? {
                pool.push(config.carry.extend(&beam, cand, config.max_steps)?);
            }
        }
        if pool.is_empty() {
            return Err(Error::Decode("every beam ran out of candidates".into()));
        }
        pool.sort_by(|a, b| beam_order(config.carry, a, b));
        pool.truncate(config.k);
        beams = pool;
    }
    PlanResult::from_beam(beams.into_iter().next().expect("pool is non-empty"), config.carry)
}

/// Builds each action token by token, taking the most probable next token
/// under the Say policy's trie marginals. Selection ignores Can and Pay; the
/// recorded factors follow the score mode.
pub fn greedy_token(scorers: Scorers<'_>, episode: &EpisodeSpec, config: &DecodingConfig) -> Result<PlanResult> {
    config.validate()?;
    let policy = scorers
        .say
        .policy()
        .ok_or_else(|| Error::Decode("greedy-token needs a Say policy with token probabilities".into()))?;
    let vocab = episode.vocabulary();
    let trie = TokenTrie::new(&vocab);
    let mut beam = Beam::root(History::new(episode.init_obs.clone()));
    while !beam.terminated {
        let probs = policy.distribution(episode, &beam.history, &vocab)?;
        let mut prefix: Vec<String> = Vec::new();
        let index = loop {
            let dist = trie.next_tokens(&probs, &prefix)?;
            match argmax_token(&dist) {
                None | Some(EOS) => break trie.action_at(&prefix)?,
                Some(tok) => prefix.push(tok.to_string()),
            }
        }
        .ok_or_else(|| Error::Decode(format!("token path `{}` ends inside the trie", prefix.join(" "))))?;
        let action = vocab[index].clone();
        let mode = config.score_mode;
        let p_can = match (mode.uses_can(), scorers.can) {
            (true, Some(s)) => s.score(episode, &beam.history, &action)?,
            _ => 1.0,
        };
        let f_pay = match (mode.uses_pay(), scorers.pay) {
            (true, Some(s)) => s.score(episode, &beam.history, &action)?,
            _ => 1.0,
        };
        let cand = ScoredCandidate::new(action, probs[index], p_can, f_pay, mode)?;
        beam = config.carry.extend(&beam, cand, config.max_steps)?;
    }
    PlanResult::from_beam(beam, config.carry)
}

/// Runs the configured strategy.
pub fn decode(scorers: Scorers<'_>, episode: &EpisodeSpec, config: &DecodingConfig) -> Result<PlanResult> {
    match config.strategy {
        Strategy::GreedyToken => greedy_token(scorers, episode, config),
        Strategy::GreedyAction => greedy_action(scorers, episode, config),
        Strategy::BeamAction => beam_action(scorers, episode, config),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, HashMap};
    use std::sync::Arc;

    use super::*;
    use crate::envs::{reset, EnvId, Split};
    use crate::fixtures::locked_grid;
    use crate::models::SayPolicy;
    use crate::oracle::{bfs_plan, replay_history, Oracle};

    /// Fixed proposals keyed by the history's action texts joined with `|`.
    struct Table(HashMap<String, Vec<(&'static str, f64)>>);

    impl Proposer for Table {
        fn propose(
            &self,
            episode: &EpisodeSpec,
            history: &History,
            _vocab: &[ActionInstance],
            m: usize,
        ) -> Result<Vec<(ActionInstance, f64)>> {
            let key = history.action_texts().join("|");
            let rows = self.0.get(&key).cloned().unwrap_or_default();
            rows.into_iter()
                .take(m)
                .map(|(t, p)| Ok((episode.action(t)?, p)))
                .collect()
        }
    }

    fn cfg(strategy: Strategy, mode: ScoreMode, m: usize, k: usize) -> DecodingConfig {
        DecodingConfig {
            strategy,
            score_mode: mode,
            m,
            k,
            ..DecodingConfig::default()
        }
    }

    fn hanoi_ep() -> EpisodeSpec {
        reset(EnvId::Hanoi, 0, Split::Test).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(DecodingConfig::default().validate().is_ok());
        assert!(cfg(Strategy::BeamAction, ScoreMode::Say, 2, 3).validate().is_err());
        assert!(cfg(Strategy::BeamAction, ScoreMode::Say, 2, 0).validate().is_err());
        let mut c = DecodingConfig::default();
        c.max_steps = 0;
        assert!(c.validate().is_err());
        c = DecodingConfig::default();
        c.backends.can = BackendKind::Uniform;
        assert!(c.validate().is_err());
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
    }

    #[test]
    fn beam_of_one_matches_greedy() {
        let oracle = Arc::new(Oracle::default());
        let can = OracleCan(oracle.clone());
        let pay = OraclePay(oracle);
        for env in EnvId::ALL {
            let say = SayPolicy::uniform(env);
            let perfect = PerfectSay { seed: 4 };
            for (i, seed) in (0..50u64).enumerate() {
                let ep = reset(env, seed, Split::Test).unwrap();
                let proposer: &dyn Proposer = if i % 2 == 0 { &say } else { &perfect };
                let scorers = Scorers {
                    say: proposer,
                    can: Some(&can),
                    pay: Some(&pay),
                };
                for mode in ScoreMode::ALL {
                    let g = greedy_action(scorers, &ep, &cfg(Strategy::GreedyAction, mode, 3, 1)).unwrap();
                    let b = beam_action(scorers, &ep, &cfg(Strategy::BeamAction, mode, 3, 1)).unwrap();
                    assert_eq!(g, b, "{env} seed {seed} {mode}");
                    assert_eq!(g.final_score.to_bits(), b.final_score.to_bits());
                }
            }
        }
    }

    #[test]
    fn beam_recovers_from_a_greedy_trap() {
        let ep = hanoi_ep();
        let vocab = ep.vocabulary();
        let done = ep.done_action().text;
        let a = vocab.iter().find(|x| !x.is_done).unwrap().text.clone();
        let b = vocab.iter().filter(|x| !x.is_done).nth(1).unwrap().text.clone();
        let leak = |s: &str| -> &'static str { Box::leak(s.to_string().into_boxed_str()) };
        let (a, b, done) = (leak(&a), leak(&b), leak(&done));
        let table = Table(HashMap::from([
            (String::new(), vec![(a, 0.6), (b, 0.4)]),
            (a.to_string(), vec![(done, 0.1)]),
            (b.to_string(), vec![(done, 0.9)]),
        ]));
        let scorers = Scorers {
            say: &table,
            can: None,
            pay: None,
        };
        let g = greedy_action(scorers, &ep, &cfg(Strategy::GreedyAction, ScoreMode::Say, 2, 1)).unwrap();
        assert_eq!(g.plan_texts(), [a, done]);
        assert!((g.final_score - (0.6f64.ln() + 0.1f64.ln()) / 2.0).abs() < 1e-12);
        let bm = beam_action(scorers, &ep, &cfg(Strategy::BeamAction, ScoreMode::Say, 2, 2)).unwrap();
        assert_eq!(bm.plan_texts(), [b, done]);
        assert!((bm.final_score - (0.4f64.ln() + 0.9f64.ln()) / 2.0).abs() < 1e-12);
        assert_eq!(bm.terminated_by, Termination::Done);
        assert_eq!(bm.per_step.len(), 2);
    }

    #[test]
    fn finished_beam_keeps_its_frozen_score() {
        let ep = hanoi_ep();
        let vocab = ep.vocabulary();
        let done: &'static str = Box::leak(ep.done_action().text.into_boxed_str());
        let a: &'static str = Box::leak(vocab.iter().find(|x| !x.is_done).unwrap().text.clone().into_boxed_str());
        let table = Table(HashMap::from([
            (String::new(), vec![(done, 0.5), (a, 0.45)]),
            (a.to_string(), vec![(a, 0.3)]),
            (format!("{a}|{a}"), vec![(done, 0.3)]),
        ]));
        let scorers = Scorers {
            say: &table,
            can: None,
            pay: None,
        };
        let r = beam_action(scorers, &ep, &cfg(Strategy::BeamAction, ScoreMode::Say, 2, 2)).unwrap();
        assert_eq!(r.plan_texts(), [done]);
        assert!((r.final_score - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn can_filters_infeasible_proposals() {
        let oracle = Arc::new(Oracle::default());
        let can = OracleCan(oracle);
        for env in EnvId::ALL {
            let say = SayPolicy::uniform(env);
            for seed in 0..10 {
                let ep = reset(env, seed, Split::Test).unwrap();
                let m = ep.vocabulary().len();
                let scorers = Scorers {
                    say: &say,
                    can: Some(&can),
                    pay: None,
                };
                let r = greedy_action(scorers, &ep, &cfg(Strategy::GreedyAction, ScoreMode::SayCan, m, 1)).unwrap();
                for (t, step) in r.per_step.iter().enumerate() {
                    let h = History {
                        init_obs: ep.init_obs.clone(),
                        actions: r.plan[..t].to_vec(),
                    };
                    let state = replay_history(&ep, &h).unwrap();
                    let any = ep
                        .vocabulary()
                        .iter()
                        .any(|a| state.precondition_holds(&ep.goal, a).unwrap());
                    assert_eq!(step.p_can == 1.0, any, "{env} seed {seed} step {t}");
                    if !any {
                        assert_eq!(t, r.plan.len() - 1);
                    }
                }
                assert!(r.per_step.iter().all(|s| s.f_pay == 1.0));
            }
        }
    }

    #[test]
    fn pay_prefers_progress_over_a_feasible_detour() {
        let ep = locked_grid();
        let table = Table(HashMap::from([(
            String::new(),
            vec![("pick up green box", 0.5), ("pick up yellow key", 0.5)],
        )]));
        let oracle = Arc::new(Oracle::default());
        let (can, pay) = (OracleCan(oracle.clone()), OraclePay(oracle));
        let scorers = Scorers {
            say: &table,
            can: Some(&can),
            pay: Some(&pay),
        };
        let mut c = cfg(Strategy::GreedyAction, ScoreMode::SayCan, 2, 1);
        c.max_steps = 1;
        let r = greedy_action(scorers, &ep, &c).unwrap();
        assert_eq!(r.plan_texts(), ["pick up green box"]);
        assert_eq!(r.terminated_by, Termination::StepLimit);
        c.score_mode = ScoreMode::SayCanPay;
        let r = greedy_action(scorers, &ep, &c).unwrap();
        assert_eq!(r.plan_texts(), ["pick up yellow key"]);
    }

    #[test]
    fn step_limit_ends_the_search() {
        let ep = hanoi_ep();
        let first = ep.vocabulary().into_iter().find(|x| !x.is_done).unwrap();
        let a: &'static str = Box::leak(first.text.into_boxed_str());
        struct Loop(&'static str);
        impl Proposer for Loop {
            fn propose(
                &self,
                ep: &EpisodeSpec,
                _: &History,
                _: &[ActionInstance],
                _: usize,
            ) -> Result<Vec<(ActionInstance, f64)>> {
                Ok(vec![(ep.action(self.0)?, 0.9)])
            }
        }
        let scorers = Scorers {
            say: &Loop(a),
            can: None,
            pay: None,
        };
        let mut c = cfg(Strategy::BeamAction, ScoreMode::Say, 3, 2);
        c.max_steps = 4;
        let r = decode(scorers, &ep, &c).unwrap();
        assert_eq!(r.plan.len(), 4);
        assert_eq!(r.terminated_by, Termination::StepLimit);
    }

    #[test]
    fn empty_proposals_are_an_error() {
        let ep = hanoi_ep();
        let table = Table(HashMap::new());
        let scorers = Scorers {
            say: &table,
            can: None,
            pay: None,
        };
        assert!(matches!(
            greedy_action(scorers, &ep, &DecodingConfig::default()),
            Err(Error::Decode(_))
        ));
        assert!(matches!(
            beam_action(scorers, &ep, &DecodingConfig::default()),
            Err(Error::Decode(_))
        ));
        assert!(matches!(
            greedy_token(scorers, &ep, &DecodingConfig::default()),
            Err(Error::Decode(_))
        ));
    }

    #[test]
    fn missing_scorer_for_mode_is_rejected() {
        let ep = hanoi_ep();
        let say = SayPolicy::uniform(EnvId::Hanoi);
        let scorers = Scorers {
            say: &say,
            can: None,
            pay: None,
        };
        assert!(matches!(
            greedy_action(scorers, &ep, &cfg(Strategy::GreedyAction, ScoreMode::SayCan, 3, 1)),
            Err(Error::Contract(_))
        ));
    }

    /// Greedy descent written directly over action-count marginals.
    fn uniform_token_choice(vocab: &[ActionInstance]) -> String {
        let mut prefix: Vec<String> = Vec::new();
        loop {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for a in vocab.iter().filter(|a| a.tokens.starts_with(&prefix)) {
                let next = a.tokens.get(prefix.len()).cloned().unwrap_or_else(|| EOS.to_string());
                *counts.entry(next).or_default() += 1;
            }
            let best = counts
                .iter()
                .max_by(|x, y| x.1.cmp(y.1).then_with(|| y.0.cmp(x.0)))
                .unwrap()
                .0
                .clone();
            if best == EOS {
                return prefix.join(" ");
            }
            prefix.push(best);
        }
    }

    #[test]
    fn uniform_token_descent_follows_prefix_mass() {
        for env in EnvId::ALL {
            let ep = reset(env, 1, Split::Test).unwrap();
            let say = SayPolicy::uniform(env);
            let scorers = Scorers {
                say: &say,
                can: None,
                pay: None,
            };
            let mut c = cfg(Strategy::GreedyToken, ScoreMode::Say, 6, 1);
            c.max_steps = 1;
            let r = decode(scorers, &ep, &c).unwrap();
            assert_eq!(r.plan_texts(), [uniform_token_choice(&ep.vocabulary())]);
            assert!((r.per_step[0].p_say - 1.0 / ep.vocabulary().len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_token_needs_a_policy() {
        let ep = hanoi_ep();
        let scorers = Scorers {
            say: &PerfectSay { seed: 0 },
            can: None,
            pay: None,
        };
        assert!(matches!(
            greedy_token(scorers, &ep, &cfg(Strategy::GreedyToken, ScoreMode::Say, 6, 1)),
            Err(Error::Decode(_))
        ));
    }

    #[test]
    fn oracle_scorers_plan_optimally() {
        let oracle = Arc::new(Oracle::default());
        let (can, pay) = (OracleCan(oracle.clone()), OraclePay(oracle));
        for env in EnvId::ALL {
            for seed in 0..20 {
                let ep = reset(env, seed, Split::Test).unwrap();
                let expert = bfs_plan(&ep).unwrap();
                let say = PerfectSay { seed };
                let scorers = Scorers {
                    say: &say,
                    can: Some(&can),
                    pay: Some(&pay),
                };
                for strategy in [Strategy::GreedyAction, Strategy::BeamAction] {
                    let r = decode(scorers, &ep, &cfg(strategy, ScoreMode::SayCanPay, 3, 2)).unwrap();
                    assert_eq!(r.terminated_by, Termination::Done);
                    let h = History {
                        init_obs: ep.init_obs.clone(),
                        actions: r.plan[..r.plan.len() - 1].to_vec(),
                    };
                    assert!(
                        replay_history(&ep, &h).unwrap().is_goal(&ep.goal),
                        "{env} seed {seed} {strategy}"
                    );
                    if strategy == Strategy::GreedyAction {
                        assert_eq!(r.plan.len(), expert.len(), "{env} seed {seed}");
                    } else {
                        assert!(r.plan.len() >= expert.len());
                    }
                }
            }
        }
    }

    #[test]
    fn normalized_carry_divides_at_every_step() {
        let ep = hanoi_ep();
        let vocab = ep.vocabulary();
        let a: &'static str = Box::leak(vocab.iter().find(|x| !x.is_done).unwrap().text.clone().into_boxed_str());
        let done: &'static str = Box::leak(ep.done_action().text.into_boxed_str());
        let table = Table(HashMap::from([
            (String::new(), vec![(a, 0.5)]),
            (a.to_string(), vec![(a, 0.25)]),
            (format!("{a}|{a}"), vec![(done, 0.8)]),
        ]));
        let scorers = Scorers {
            say: &table,
            can: None,
            pay: None,
        };
        let mut c = cfg(Strategy::GreedyAction, ScoreMode::Say, 1, 1);
        let (l1, l2, l3) = (0.5f64.ln(), 0.25f64.ln(), 0.8f64.ln());
        let sum = greedy_action(scorers, &ep, &c).unwrap();
        assert!((sum.final_score - (l1 + l2 + l3) / 3.0).abs() < 1e-12);
        c.carry = Carry::Normalized;
        let norm = greedy_action(scorers, &ep, &c).unwrap();
        assert!((norm.final_score - ((l1 + l2) / 2.0 + l3) / 3.0).abs() < 1e-12);
        assert_eq!(norm.plan, sum.plan);
        c.strategy = Strategy::BeamAction;
        assert_eq!(beam_action(scorers, &ep, &c).unwrap(), norm);
    }

    #[test]
    fn decoding_is_deterministic() {
        let oracle = Arc::new(Oracle::default());
        let (can, pay) = (OracleCan(oracle.clone()), OraclePay(oracle));
        let say = SayPolicy::uniform(EnvId::Blocks);
        let ep = reset(EnvId::Blocks, 5, Split::Test).unwrap();
        let scorers = Scorers {
            say: &say,
            can: Some(&can),
            pay: Some(&pay),
        };
        let c = DecodingConfig::default();
        assert_eq!(decode(scorers, &ep, &c).unwrap(), decode(scorers, &ep, &c).unwrap());
    }
}
