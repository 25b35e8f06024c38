use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::action_features;
use super::linear::{Head, LinearScorer, ModelKind};
use super::loss::softmax;
use crate::envs::{EnvId, EpisodeSpec};
use crate::error::{Error, Result};
use crate::plan::{ActionInstance, History};

/// Token emitted when a trie path is itself a complete action and also the
/// prefix of a longer one.
pub const EOS: &str = "<eos>";

/// Action-level proposal policy: a softmax over the episode vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct SayPolicy {
    pub scorer: LinearScorer,
}

impl SayPolicy {
    pub fn new(scorer: LinearScorer) -> Self {
        Self { scorer }
    }

    /// All-zero weights: the uniform distribution over the vocabulary.
    pub fn uniform(env: EnvId) -> Self {
        Self::new(LinearScorer::zeros(ModelKind::Say, env))
    }

    /// Probability of each vocabulary action, in vocabulary order.
    pub fn distribution(&self, episode: &EpisodeSpec, history: &History, vocab: &[ActionInstance]) -> Result<Vec<f64>> {
        self.scorer.check_env(episode)?;
        if self.scorer.head() != Head::Softmax {
            return Err(Error::contract("a Say policy needs a softmax-head model"));
        }
        if vocab.is_empty() {
            return Err(Error::contract("empty vocabulary"));
        }
        let seed = self.scorer.hash_seed;
        let logits: Vec<f64> = vocab
            .iter()
            .map(|a| action_features(seed, &episode.goal, history, a).dot(&self.scorer.weights))
            .collect();
        Ok(softmax(&logits))
    }
}

/// Sorts by descending probability, ties by action text.
pub fn rank(mut items: Vec<(ActionInstance, f64)>) -> Vec<(ActionInstance, f64)> {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items
}

/// The `m` most probable vocabulary actions with their softmax mass (not
/// renormalized over the returned set).
pub fn say_top_m(
    policy: &SayPolicy,
    episode: &EpisodeSpec,
    history: &History,
    vocab: &[ActionInstance],
    m: usize,
) -> Result<Vec<(ActionInstance, f64)>> {
    if m == 0 {
        return Err(Error::contract("m must be at least 1"));
    }
    let probs = policy.distribution(episode, history, vocab)?;
    if m > vocab.len() {
        log::debug!(
            "m = {m} exceeds the vocabulary size {}; using {}",
            vocab.len(),
            vocab.len()
        );
    }
    let mut ranked = rank(vocab.iter().cloned().zip(probs).collect());
    ranked.truncate(m);
    Ok(ranked)
}

/// Expert action plus `m - 1` distinct distractors, each with mass `1/m`.
/// Distractors are drawn without replacement from the rest of the
/// vocabulary; the result is ordered by action text.
pub fn perfect_say(
    expert: &ActionInstance,
    vocab: &[ActionInstance],
    m: usize,
    seed: u64,
) -> Result<Vec<(ActionInstance, f64)>> {
    if m == 0 {
        return Err(Error::contract("m must be at least 1"));
    }
    let others: Vec<&ActionInstance> = vocab.iter().filter(|a| a.text != expert.text).collect();
    let k = (m - 1).min(others.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<ActionInstance> = others.choose_multiple(&mut rng, k).map(|a| (*a).clone()).collect();
    picked.push(expert.clone());
    picked.sort();
    let p = 1.0 / picked.len() as f64;
    Ok(picked.into_iter().map(|a| (a, p)).collect())
}

#[derive(Clone, Debug, Default)]
struct Node {
    children: BTreeMap<String, usize>,
    /// Vocabulary index of an action ending exactly here.
    terminal: Option<usize>,
    /// Vocabulary indices of every action in this subtree.
    below: Vec<usize>,
}

/// Prefix tree over the token sequences of a vocabulary.
#[derive(Clone, Debug)]
pub struct TokenTrie {
    nodes: Vec<Node>,
}

impl TokenTrie {
    pub fn new(vocab: &[ActionInstance]) -> Self {
        let mut nodes = vec![Node::default()];
        for (i, a) in vocab.iter().enumerate() {
            let mut at = 0;
            nodes[0].below.push(i);
            for tok in &a.tokens {
                at = match nodes[at].children.get(tok) {
                    Some(&next) => next,
                    None => {
                        nodes.push(Node::default());
                        let next = nodes.len() - 1;
                        nodes[at].children.insert(tok.clone(), next);
                        next
                    }
                };
                nodes[at].below.push(i);
            }
            nodes[at].terminal = Some(i);
        }
        Self { nodes }
    }

    fn find(&self, prefix: &[String]) -> Result<usize> {
        let mut at = 0;
        for tok in prefix {
            at = *self.nodes[at]
                .children
                .get(tok)
                .ok_or_else(|| Error::contract(format!("prefix `{}` is not in the trie", prefix.join(" "))))?;
        }
        Ok(at)
    }

    /// Vocabulary index of the action spelled by `prefix`, if complete.
    pub fn action_at(&self, prefix: &[String]) -> Result<Option<usize>> {
        Ok(self.nodes[self.find(prefix)?].terminal)
    }

    /// Conditional next-token distribution given action probabilities in
    /// vocabulary order. [`EOS`] stands for ending the action here.
    pub fn next_tokens(&self, probs: &[f64], prefix: &[String]) -> Result<BTreeMap<String, f64>> {
        let node = &self.nodes[self.find(prefix)?];
        let mass = |ids: &[usize]| ids.iter().map(|&i| probs[i]).sum::<f64>();
        let total = mass(&node.below);
        let mut out = BTreeMap::new();
        let n_options = node.children.len() + node.terminal.is_some() as usize;
        for (tok, &child) in &node.children {
            let p = if total > 0.0 {
                mass(&self.nodes[child].below) / total
            } else {
                1.0 / n_options as f64
            };
            out.insert(tok.clone(), p);
        }
        if let Some(i) = node.terminal {
            if !node.children.is_empty() {
                let p = if total > 0.0 {
                    probs[i] / total
                } else {
                    1.0 / n_options as f64
                };
                out.insert(EOS.to_string(), p);
            }
        }
        Ok(out)
    }
}

/// `p(next token | prefix)` induced from the action-level policy by
/// marginalizing over vocabulary actions that extend the prefix.
pub fn token_distribution(
    policy: &SayPolicy,
    episode: &EpisodeSpec,
    history: &History,
    vocab: &[ActionInstance],
    prefix: &[String],
) -> Result<BTreeMap<String, f64>> {
    let probs = policy.distribution(episode, history, vocab)?;
    TokenTrie::new(vocab).next_tokens(&probs, prefix)
}

/// Highest-probability token; ties go to the lexicographically smaller one.
pub fn argmax_token(dist: &BTreeMap<String, f64>) -> Option<&str> {
    let mut best: Option<(&str, f64)> = None;
    for (tok, &p) in dist {
        if best.map_or(true, |(_, bp)| p > bp) {
            best = Some((tok, p));
        }
    }
    best.map(|b| b.0)
}
