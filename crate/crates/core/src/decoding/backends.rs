use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::mapping::map_to_admissible;
use crate::envs::{mix_seed, EpisodeSpec};
use crate::error::{Error, Result};
use crate::models::{hash_parts, perfect_say, rank, say_top_m, ExternalSay, LinearScorer, SayPolicy};
use crate::oracle::{expert_next_action, Oracle};
use crate::plan::{ActionInstance, History};

/// Proposes candidate actions with their generation probabilities.
pub trait Proposer: Send + Sync {
    /// At most `m` admissible actions, best first, with their probability.
    fn propose(
        &self,
        episode: &EpisodeSpec,
        history: &History,
        vocab: &[ActionInstance],
        m: usize,
    ) -> Result<Vec<(ActionInstance, f64)>>;

    /// Action-level policy usable for token-level decoding, if any.
    fn policy(&self) -> Option<&SayPolicy> {
        None
    }
}

/// Scores one candidate extension with a value in [0, 1].
pub trait Scorer: Send + Sync {
    fn score(&self, episode: &EpisodeSpec, history: &History, action: &ActionInstance) -> Result<f64>;
}

impl Proposer for SayPolicy {
    fn propose(
        &self,
        episode: &EpisodeSpec,
        history: &History,
        vocab: &[ActionInstance],
        m: usize,
    ) -> Result<Vec<(ActionInstance, f64)>> {
        say_top_m(self, episode, history, vocab, m)
    }

    fn policy(&self) -> Option<&SayPolicy> {
        Some(self)
    }
}

impl Scorer for LinearScorer {
    fn score(&self, episode: &EpisodeSpec, history: &History, action: &ActionInstance) -> Result<f64> {
        LinearScorer::score(self, episode, history, action)
    }
}

/// Exact feasibility from the simulator.
#[derive(Clone, Debug, Default)]
pub struct OracleCan(pub Arc<Oracle>);

/// Exact discounted payoff from the BFS distance.
#[derive(Clone, Debug, Default)]
pub struct OraclePay(pub Arc<Oracle>);

impl Scorer for OracleCan {
    fn score(&self, episode: &EpisodeSpec, history: &History, action: &ActionInstance) -> Result<f64> {
        self.0.can(episode, history, action)
    }
}

impl Scorer for OraclePay {
    fn score(&self, episode: &EpisodeSpec, history: &History, action: &ActionInstance) -> Result<f64> {
        self.0.pay(episode, history, action)
    }
}

/// Candidates per step in the Perfect-Say ablation: the expert action and
/// two distractors.
pub const PERFECT_SAY_CANDIDATES: usize = 3;

/// Proposes the optimal next action plus random distractors. Once the
/// history has left every optimal path, all proposals are random.
#[derive(Clone, Debug)]
pub struct PerfectSay {
    pub seed: u64,
}

impl PerfectSay {
    /// Distractor seed: a stable function of run seed, episode and history.
    fn step_seed(&self, episode: &EpisodeSpec, history: &History) -> u64 {
        let texts = history.action_texts();
        mix_seed(mix_seed(self.seed, episode.seed), hash_parts(0x9e7f, &texts))
    }
}

impl Proposer for PerfectSay {
    fn propose(
        &self,
        episode: &EpisodeSpec,
        history: &History,
        vocab: &[ActionInstance],
        m: usize,
    ) -> Result<Vec<(ActionInstance, f64)>> {
        let seed = self.step_seed(episode, history);
        let expert = match expert_next_action(episode, history) {
            Some(a) => a,
            None if vocab.is_empty() => return Err(Error::Decode("empty vocabulary".into())),
            None => vocab[(seed % vocab.len() as u64) as usize].clone(),
        };
        perfect_say(&expert, vocab, m, seed)
    }
}

impl Proposer for ExternalSay {
    /// Free-form adapter texts are mapped onto the vocabulary; duplicates
    /// after mapping keep their largest probability.
    fn propose(
        &self,
        episode: &EpisodeSpec,
        history: &History,
        vocab: &[ActionInstance],
        m: usize,
    ) -> Result<Vec<(ActionInstance, f64)>> {
        let texts = history.action_texts();
        let raw = ExternalSay::propose(self, &episode.goal.text, &episode.init_obs, &texts, m)?;
        let mut merged: BTreeMap<ActionInstance, f64> = BTreeMap::new();
        for c in raw {
            let (action, _) = map_to_admissible(&c.text, vocab)?;
            let p = c.probability().min(1.0);
            let slot = merged.entry(action).or_insert(p);
            *slot = slot.max(p);
        }
        Ok(rank(merged.into_iter().collect()))
    }
}

/// Backend names as they appear in configs and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Trained,
    Oracle,
    Uniform,
    PerfectSay,
    External,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Trained => "trained",
            BackendKind::Oracle => "oracle",
            BackendKind::Uniform => "uniform",
            BackendKind::PerfectSay => "perfect-say",
            BackendKind::External => "external",
        }
    }

    /// Say accepts every kind ("oracle" means the uniform policy); Can and
    /// Pay accept only trained and oracle scorers.
    pub fn check_role(self, role: &str) -> Result<()> {
        let ok = match role {
            "say" => true,
            "can" | "pay" => matches!(self, BackendKind::Trained | BackendKind::Oracle),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "backend `{self}` cannot serve the {role} role"
            )))
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trained" => Ok(BackendKind::Trained),
            "oracle" => Ok(BackendKind::Oracle),
            "uniform" => Ok(BackendKind::Uniform),
            "perfect-say" | "perfect" => Ok(BackendKind::PerfectSay),
            "external" => Ok(BackendKind::External),
            _ => Err(Error::contract(format!(
                "unknown backend `{s}` (expected trained, oracle, uniform, perfect-say or external)"
            ))),
        }
    }
}

/// The three scorer roles used by a search.
#[derive(Clone, Copy)]
pub struct Scorers<'a> {
    pub say: &'a dyn Proposer,
    pub can: Option<&'a dyn Scorer>,
    pub pay: Option<&'a dyn Scorer>,
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpListener;
    use std::thread;

    use super::*;
    use crate::envs::{reset, EnvId, Split};

    #[test]
    fn perfect_say_always_contains_expert() {
        let ep = reset(EnvId::Gridworld, 3, Split::Test).unwrap();
        let vocab = ep.vocabulary();
        let p = PerfectSay { seed: 1 };
        let mut h = History::new(ep.init_obs.clone());
        while let Some(expert) = expert_next_action(&ep, &h) {
            let c = p.propose(&ep, &h, &vocab, 3).unwrap();
            assert_eq!(c.len(), 3.min(vocab.len()));
            assert!(c.iter().any(|x| x.0 == expert));
            assert_eq!(c, p.propose(&ep, &h, &vocab, 3).unwrap());
            if expert.is_done {
                break;
            }
            h = h.extended(expert);
        }
    }

    #[test]
    fn perfect_say_is_random_after_broken_history() {
        let ep = reset(EnvId::Hanoi, 0, Split::Test).unwrap();
        let vocab = ep.vocabulary();
        let bad = vocab
            .iter()
            .find(|a| !ep.init_state.precondition_holds(&ep.goal, a).unwrap())
            .unwrap();
        let h = History::new(ep.init_obs.clone()).extended(bad.clone());
        let p = PerfectSay { seed: 0 }.propose(&ep, &h, &vocab, 3).unwrap();
        assert_eq!(p.len(), 3);
        assert!(p
            .iter()
            .all(|(a, q)| vocab.contains(a) && (q - 1.0 / 3.0).abs() < 1e-12));
        assert_eq!(p, PerfectSay { seed: 0 }.propose(&ep, &h, &vocab, 3).unwrap());
    }

    #[test]
    fn external_candidates_are_mapped_and_merged() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut req = String::new();
            BufReader::new(&stream).read_line(&mut req).unwrap();
            let reply = "{\"candidates\":[\
                {\"text\":\"pickup the yellow key\",\"logprob\":-1.0,\"token_logprobs\":[]},\
                {\"text\":\"pick up yellow key\",\"logprob\":-0.5,\"token_logprobs\":[]},\
                {\"text\":\"done picking up\",\"logprob\":-2.0,\"token_logprobs\":[]}]}\n";
            (&stream).write_all(reply.as_bytes()).unwrap();
        });
        let ep = reset(EnvId::Gridworld, 0, Split::Test).unwrap();
        let vocab = ep.vocabulary();
        let key = vocab
            .iter()
            .find(|a| a.text.ends_with("key") && a.text.starts_with("pick"))
            .cloned();
        let h = History::new(ep.init_obs.clone());
        let out = Proposer::propose(&ExternalSay::new(addr), &ep, &h, &vocab, 6).unwrap();
        assert!(out.len() <= 3);
        assert!(out.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(out.iter().all(|(a, _)| vocab.contains(a)));
        if let Some(key) = key.filter(|k| k.text == "pick up yellow key") {
            assert_eq!(out[0], (key, (-0.5f64).exp()));
            assert_eq!(out.len(), 2);
        }
    }

    #[test]
    fn backend_roles() {
        assert!(BackendKind::Oracle.check_role("can").is_ok());
        assert!(BackendKind::PerfectSay.check_role("pay").is_err());
        assert!(BackendKind::External.check_role("say").is_ok());
        assert_eq!("perfect-say".parse::<BackendKind>().unwrap(), BackendKind::PerfectSay);
        assert!("bert".parse::<BackendKind>().is_err());
    }
}
