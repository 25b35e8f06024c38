//! Domain types shared by every part of the planner and the log-space score
//! algebra used to rank candidate actions.
//!
//! Probabilities are carried in linear space everywhere; logarithms are taken
//! only inside [`decode_score`] and [`action_log_prob`], after clamping at
//! [`PROB_FLOOR`] so that every score is finite and totally ordered.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ContractError;

/// Lower clamp applied to every probability before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-9;

/// Which factors enter the decoding score of a candidate action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Say,
    SayCan,
    SayCanPay,
}

impl ScoreMode {
    pub const ALL: [ScoreMode; 3] = [ScoreMode::Say, ScoreMode::SayCan, ScoreMode::SayCanPay];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Say => "say",
            ScoreMode::SayCan => "saycan",
            ScoreMode::SayCanPay => "saycanpay",
        }
    }

    pub fn uses_can(self) -> bool {
        !matches!(self, ScoreMode::Say)
    }

    pub fn uses_pay(self) -> bool {
        matches!(self, ScoreMode::SayCanPay)
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMode {
    type Err = ContractError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "say" => Ok(ScoreMode::Say),
            "saycan" => Ok(ScoreMode::SayCan),
            "saycanpay" => Ok(ScoreMode::SayCanPay),
            other => Err(ContractError::new(format!("unknown score mode `{other}`"))),
        }
    }
}

/// A symbolic identifier with positional string arguments, e.g. `disk_in(gray,2)`.
///
/// Used both for goal predicates and for action operators; the owning
/// environment gives the arguments their meaning.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol {
    pub name: String,
    pub args: Vec<String>,
}

impl Symbol {
    pub fn new(name: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            name: name.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.args.join(","))
    }
}

impl FromStr for Symbol {
    type Err = ContractError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ContractError::new(format!("malformed symbol `{s}`"));
        let open = s.find('(').ok_or_else(bad)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let name = &s[..open];
        if name.is_empty() {
            return Err(bad());
        }
        let args = if inner.is_empty() {
            Vec::new()
        } else {
            inner.split(',').map(str::to_owned).collect()
        };
        Ok(Symbol {
            name: name.to_owned(),
            args,
        })
    }
}

/// Natural-language goal plus the symbolic predicate an environment checks.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoalSpec {
    pub text: String,
    pub predicate: Symbol,
}

impl GoalSpec {
    pub fn new(text: impl Into<String>, predicate: Symbol) -> Result<Self, ContractError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ContractError::new("goal text must be non-empty"));
        }
        Ok(Self { text, predicate })
    }
}

/// One action: its lowercase text, the whitespace tokens of that text, and
/// the symbolic operator the environment executes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionInstance {
    pub text: String,
    pub tokens: Vec<String>,
    pub op: Symbol,
    pub is_done: bool,
}

impl ActionInstance {
    pub fn new(text: impl Into<String>, op: Symbol, is_done: bool) -> Result<Self, ContractError> {
        let text = text.into();
        let tokens: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
        if tokens.is_empty() {
            return Err(ContractError::new("action text has no tokens"));
        }
        if tokens.join(" ") != text || text.to_lowercase() != text {
            return Err(ContractError::new(format!(
                "action text `{text}` is not lowercase single-spaced"
            )));
        }
        Ok(Self {
            text,
            tokens,
            op,
            is_done,
        })
    }
}

impl PartialOrd for ActionInstance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Actions order by their text; this is the tie-break used by every argmax.
impl Ord for ActionInstance {
    fn cmp(&self, other: &Self) -> Ordering {
        self.text
            .cmp(&other.text)
            .then_with(|| self.op.cmp(&other.op))
            .then_with(|| self.is_done.cmp(&other.is_done))
    }
}

/// Initial observation and the ordered actions executed so far.
///
/// Extending a history returns a new value; the receiver is left untouched.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct History {
    pub init_obs: String,
    pub actions: Vec<ActionInstance>,
}

impl History {
    pub fn new(init_obs: impl Into<String>) -> Self {
        Self {
            init_obs: init_obs.into(),
            actions: Vec::new(),
        }
    }

    pub fn extended(&self, action: ActionInstance) -> Self {
        let mut actions = Vec::with_capacity(self.actions.len() + 1);
        actions.extend(self.actions.iter().cloned());
        actions.push(action);
        Self {
            init_obs: self.init_obs.clone(),
            actions,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn last(&self) -> Option<&ActionInstance> {
        self.actions.last()
    }

    pub fn action_texts(&self) -> Vec<&str> {
        self.actions.iter().map(|a| a.text.as_str()).collect()
    }
}

/// A candidate action with its three factors and combined step score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub action: ActionInstance,
    pub p_say: f64,
    pub p_can: f64,
    pub f_pay: f64,
    pub step_log_score: f64,
}

impl ScoredCandidate {
    pub fn new(
        action: ActionInstance,
        p_say: f64,
        p_can: f64,
        f_pay: f64,
        mode: ScoreMode,
    ) -> Result<Self, ContractError> {
        let step_log_score = decode_score(p_say, p_can, f_pay, mode)?;
        Ok(Self {
            action,
            p_say,
            p_can,
            f_pay,
            step_log_score,
        })
    }
}

/// A partial plan under search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub history: History,
    /// Unnormalized sum of step log-scores.
    pub f_acc: f64,
    pub terminated: bool,
    pub steps: Vec<ScoredCandidate>,
}

impl Beam {
    pub fn root(history: History) -> Self {
        Self {
            history,
            f_acc: 0.0,
            terminated: false,
            steps: Vec::new(),
        }
    }

    pub fn extended(&self, candidate: ScoredCandidate, max_steps: usize) -> Result<Self, ContractError> {
        let f_acc = accumulate(self.f_acc, candidate.step_log_score)?;
        let history = self.history.extended(candidate.action.clone());
        let terminated = candidate.action.is_done || history.len() >= max_steps;
        let mut steps = self.steps.clone();
        steps.push(candidate);
        Ok(Self {
            history,
            f_acc,
            terminated,
            steps,
        })
    }

    /// Length-normalized accumulated score; the root (empty) beam scores 0.
    pub fn normalized_score(&self) -> f64 {
        if self.history.is_empty() {
            0.0
        } else {
            self.f_acc / self.history.len() as f64
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), ContractError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ContractError::new(format!("{name} = {p} is outside [0, 1]")));
    }
    Ok(())
}

fn clamped_ln(x: f64) -> f64 {
    x.max(PROB_FLOOR).ln()
}

/// Log-score of one candidate under the given mode.
pub fn decode_score(p_say: f64, p_can: f64, f_pay: f64, mode: ScoreMode) -> Result<f64, ContractError> {
    check_prob("p_say", p_say)?;
    check_prob("p_can", p_can)?;
    check_prob("f_pay", f_pay)?;
    let product = match mode {
        ScoreMode::Say => p_say,
        ScoreMode::SayCan => p_say * p_can,
        ScoreMode::SayCanPay => p_say * p_can * f_pay,
    };
    Ok(clamped_ln(product))
}

pub fn accumulate(f_acc: f64, step_log_score: f64) -> Result<f64, ContractError> {
    if !f_acc.is_finite() || !step_log_score.is_finite() {
        return Err(ContractError::new(format!(
            "non-finite score in accumulate ({f_acc}, {step_log_score})"
        )));
    }
    Ok(f_acc + step_log_score)
}

pub fn length_normalize(f_acc: f64, plan_length: usize) -> Result<f64, ContractError> {
    if plan_length == 0 {
        return Err(ContractError::new("plan length must be positive"));
    }
    Ok(f_acc / plan_length as f64)
}

/// Log-probability of an action from its per-token conditionals.
///
/// A zero (or negative) token probability is clamped at [`PROB_FLOOR`]; the
/// returned flag reports whether any clamp happened.
pub fn action_log_prob(token_probs: &[f64]) -> Result<(f64, bool), ContractError> {
    if token_probs.is_empty() {
        return Err(ContractError::new("token probability list is empty"));
    }
    let mut clamped = false;
    let mut total = 0.0;
    for &p in token_probs {
        if !(p <= 1.0) || p.is_nan() {
            return Err(ContractError::new(format!("token probability {p} exceeds 1")));
        }
        if p <= 0.0 {
            clamped = true;
            log::warn!("token probability {p} clamped to {PROB_FLOOR}");
        }
        total += clamped_ln(p);
    }
    Ok((total, clamped))
}
