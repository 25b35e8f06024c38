use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::plan::{ActionInstance, GoalSpec, History};

pub const FEATURE_BITS: u32 = 14;
pub const FEATURE_DIM: usize = 1 << FEATURE_BITS;
pub const HASH_SEED: u64 = 0x5ca9_ca9a_7000_0001;

/// Number of trailing history actions that contribute n-grams.
pub const HISTORY_WINDOW: usize = 3;

const MULT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Sparse bag of hashed features.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| weights[i as usize] * v)
            .sum()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Adds `scale * self` into a dense gradient.
    pub fn add_scaled_to(&self, dense: &mut [f64], scale: f64) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            dense[i as usize] += scale * v;
        }
    }
}

/// Multiplicative hash over a sequence of string parts.
pub fn hash_parts(seed: u64, parts: &[&str]) -> u64 {
    let mut h = seed;
    for part in parts {
        for &b in part.as_bytes() {
            h = (h ^ b as u64).wrapping_mul(MULT);
        }
        h = (h ^ 0xff).wrapping_mul(MULT);
    }
    h ^ (h >> 29)
}

pub fn bucket(seed: u64, parts: &[&str]) -> u32 {
    (hash_parts(seed, parts) >> (64 - FEATURE_BITS)) as u32
}

struct Builder {
    seed: u64,
    counts: BTreeMap<u32, f64>,
}

impl Builder {
    fn add(&mut self, parts: &[&str]) {
        *self.counts.entry(bucket(self.seed, parts)).or_insert(0.0) += 1.0;
    }

    fn grams(&mut self, ns: &str, tokens: &[&str]) {
        for t in tokens {
            self.add(&[ns, t]);
        }
        for w in tokens.windows(2) {
            self.add(&[ns, w[0], w[1]]);
        }
    }

    fn cross(&mut self, ns: &str, left: &[&str], right: &[&str]) {
        for l in left {
            for r in right {
                self.add(&[ns, l, r]);
            }
        }
    }

    fn finish(self) -> FeatureVector {
        let (indices, values) = self.counts.into_iter().unzip();
        FeatureVector { indices, values }
    }
}

fn words(text: &str) -> Vec<&str> {
    text.split(|c: char| c.is_whitespace() || c == ',' || c == '.')
        .filter(|w| !w.is_empty())
        .collect()
}

/// Hashed unigrams and bigrams from the goal, the initial observation plus
/// the last few history actions, and the candidate action, each segment in
/// its own namespace, plus cross features tying the candidate to its context.
pub fn featurize(goal: &GoalSpec, history: &History, action: &ActionInstance) -> FeatureVector {
    featurize_with_seed(HASH_SEED, goal, history, action)
}

pub fn featurize_with_seed(seed: u64, goal: &GoalSpec, history: &History, action: &ActionInstance) -> FeatureVector {
    let mut b = Builder::new(seed);
    context_into(&mut b, goal, history);
    action_into(&mut b, goal, history, action);
    b.finish()
}

/// The candidate-independent part of [`featurize`].
pub fn context_features(seed: u64, goal: &GoalSpec, history: &History) -> FeatureVector {
    let mut b = Builder::new(seed);
    context_into(&mut b, goal, history);
    b.finish()
}

/// The candidate-dependent part of [`featurize`]. The full vector is the
/// sum of this and [`context_features`].
pub fn action_features(seed: u64, goal: &GoalSpec, history: &History, action: &ActionInstance) -> FeatureVector {
    let mut b = Builder::new(seed);
    action_into(&mut b, goal, history, action);
    b.finish()
}

fn context_into(b: &mut Builder, goal: &GoalSpec, history: &History) {
    b.add(&["bias"]);
    b.grams("g", &words(&goal.text));
    b.grams("o", &words(&history.init_obs));
    let start = history.len().saturating_sub(HISTORY_WINDOW);
    for (k, past) in history.actions[start..].iter().enumerate() {
        let toks: Vec<&str> = past.tokens.iter().map(String::as_str).collect();
        b.grams("h", &toks);
        let slot = format!("h{}", history.len() - start - k);
        b.add(&[&slot, &past.text]);
    }
}

fn action_into(b: &mut Builder, goal: &GoalSpec, history: &History, action: &ActionInstance) {
    let cand: Vec<&str> = action.tokens.iter().map(String::as_str).collect();
    b.grams("a", &cand);
    b.add(&["a=", &action.text]);

    let last: Vec<&str> = history
        .last()
        .map(|a| a.tokens.iter().map(String::as_str).collect())
        .unwrap_or_else(|| vec!["<start>"]);
    b.cross("la", &last, &cand);
    b.add(&[
        "la=",
        history.last().map_or("<start>", |a| a.text.as_str()),
        &action.text,
    ]);
    b.cross("ga", &words(&goal.text), &cand);
    let len = history.len().min(9).to_string();
    b.cross("na", &[&len], &cand);

    b.add(&["tg", &template(&words(&goal.text), &cand, true)]);
    let goal_words = words(&goal.text);
    let last_vs_goal = template(&last, &goal_words, false);
    b.add(&["gl", cand[0], &last_vs_goal]);
    b.add(&["gl=", &action.text, &last_vs_goal]);
    let stems: Vec<&str> = goal_words.iter().map(|w| w.strip_suffix('s').unwrap_or(w)).collect();
    for item in pending_items(history) {
        b.add(&["pend", cand[0], &template(&item, &stems, false)]);
    }
    for sentence in history.init_obs.split(". ") {
        let toks = words(sentence);
        if toks.iter().any(|t| cand.contains(t)) {
            b.add(&["to", &template(&toks, &cand, false)]);
            b.add(&["to+", &template(&toks, &cand, true)]);
        }
    }
    let sentences: Vec<Vec<&str>> = history
        .init_obs
        .split(". ")
        .map(|x| words(x.trim_end_matches('.')))
        .collect();
    let linked: Vec<&str> = sentences
        .iter()
        .filter(|toks| toks.iter().any(|t| cand.contains(t)))
        .flatten()
        .copied()
        .collect();
    for (sentence, toks) in history.init_obs.split(". ").zip(&sentences) {
        let marked = mark_state(toks, &cand, history, &linked);
        b.add(&["tm", &marked]);
        if toks.iter().any(|t| cand.contains(t)) {
            for item in sentence.trim_end_matches('.').split(", ") {
                let item = words(item);
                if item.iter().all(|t| !cand.contains(t)) {
                    b.add(&["co", &item.join(" ")]);
                }
            }
        }
    }
    let start = history.len().saturating_sub(HISTORY_WINDOW);
    for (k, past) in history.actions[start..].iter().enumerate() {
        let toks: Vec<&str> = past.tokens.iter().map(String::as_str).collect();
        let ago = (history.len() - start - k).to_string();
        b.add(&["th", &ago, &template(&toks, &cand, false)]);
    }
    for (i, past) in history.actions.iter().enumerate() {
        if past.text == action.text {
            b.add(&["rep", &action.text]);
            b.add(&["rep-ago", &(history.len() - i).min(4).to_string()]);
        } else if past.tokens.len() >= 3 && past.tokens[..3] == action.tokens[..action.tokens.len().min(3)] {
            b.add(&["pre", &past.tokens[..3].join(" ")]);
        }
    }
}

/// Rewrites `tokens` relative to a candidate: a token that occurs in the
/// candidate becomes `#i` (its first position there); any other token is
/// kept when `literal` is set and replaced by `_` otherwise.
fn template(tokens: &[&str], cand: &[&str], literal: bool) -> String {
    tokens
        .iter()
        .map(|t| match cand.iter().position(|c| c == t) {
            Some(i) => format!("#{i}"),
            None if literal => (*t).to_string(),
            None => "_".to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Rewrites an observation sentence relative to a candidate and the
/// history: candidate tokens become `#i`, tokens of an earlier action become
/// `*` plus that action's verb (latest action wins), tokens sharing a
/// sentence with the candidate become `c`, and the rest `_`.
fn mark_state(tokens: &[&str], cand: &[&str], history: &History, linked: &[&str]) -> String {
    tokens
        .iter()
        .map(|t| {
            if let Some(i) = cand.iter().position(|c| c == t) {
                return format!("#{i}");
            }
            if let Some(a) = history.actions.iter().rev().find(|a| a.tokens.iter().any(|x| x == t)) {
                return format!("*{}", a.tokens[0]);
            }
            if linked.contains(t) {
                "c".to_string()
            } else {
                "_".to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Comma-separated observation items that no history action mentions.
fn pending_items(history: &History) -> Vec<Vec<&str>> {
    let mut out = Vec::new();
    for sentence in history.init_obs.split(". ") {
        let sentence = sentence.trim_end_matches('.');
        let body = sentence.strip_prefix("there is a ").unwrap_or(sentence);
        for item in body.split(", ") {
            let toks = words(item);
            let text = format!(" {} ", toks.join(" "));
            let mentioned = history.actions.iter().any(|a| format!(" {} ", a.text).contains(&text));
            if !toks.is_empty() && !mentioned {
                out.push(toks);
            }
        }
    }
    out
}

impl Builder {
    fn new(seed: u64) -> Self {
        Self {
            seed,
            counts: BTreeMap::new(),
        }
    }
}
