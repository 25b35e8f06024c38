use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::features::{action_features, context_features, FeatureVector, FEATURE_DIM, HASH_SEED};
use super::loss::sigmoid;
use super::train::TrainRecord;
use crate::envs::{EnvId, EpisodeSpec};
use crate::error::{Error, Result};
use crate::plan::{ActionInstance, GoalSpec, History};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Can,
    Pay,
    Say,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Can, ModelKind::Pay, ModelKind::Say];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Can => "can",
            ModelKind::Pay => "pay",
            ModelKind::Say => "say",
        }
    }

    pub fn head(self) -> Head {
        match self {
            ModelKind::Say => Head::Softmax,
            ModelKind::Can | ModelKind::Pay => Head::Sigmoid,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "can" => Ok(ModelKind::Can),
            "pay" => Ok(ModelKind::Pay),
            "say" => Ok(ModelKind::Say),
            _ => Err(Error::contract(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Softmax over the candidate set.
    Softmax,
    Sigmoid,
}

/// Linear model over hashed features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearScorer {
    pub kind: ModelKind,
    pub env: EnvId,
    pub dim: usize,
    pub hash_seed: u64,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: TrainRecord,
    pub val_metric: f64,
}

impl LinearScorer {
    /// All-zero model; sigmoid heads output 0.5 everywhere.
    pub fn zeros(kind: ModelKind, env: EnvId) -> Self {
        Self {
            kind,
            env,
            dim: FEATURE_DIM,
            hash_seed: HASH_SEED,
            weights: vec![0.0; FEATURE_DIM],
            bias: 0.0,
            config: TrainRecord::default(),
            val_metric: 0.0,
        }
    }

    pub fn head(&self) -> Head {
        self.kind.head()
    }

    pub fn check_env(&self, episode: &EpisodeSpec) -> Result<()> {
        if self.env != episode.env() {
            return Err(Error::EnvMismatch {
                model: format!("{}-{}", self.env, self.kind),
                episode: episode.env().to_string(),
            });
        }
        Ok(())
    }

    pub fn logit(&self, context: &FeatureVector, action: &FeatureVector) -> f64 {
        context.dot(&self.weights) + action.dot(&self.weights) + self.bias
    }

    pub fn raw_logit(&self, goal: &GoalSpec, history: &History, action: &ActionInstance) -> f64 {
        let ctx = if self.config.candidate_only {
            FeatureVector::default()
        } else {
            context_features(self.hash_seed, goal, history)
        };
        let act = action_features(self.hash_seed, goal, history, action);
        self.logit(&ctx, &act)
    }

    /// `sigmoid(w . phi + b)`; the value is a feasibility probability for
    /// Can models and a payoff estimate for Pay models.
    pub fn score(&self, episode: &EpisodeSpec, history: &History, action: &ActionInstance) -> Result<f64> {
        self.check_env(episode)?;
        if self.head() != Head::Sigmoid {
            return Err(Error::contract("score() needs a sigmoid-head model"));
        }
        Ok(sigmoid(self.raw_logit(&episode.goal, history, action)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != FEATURE_DIM || self.weights.len() != self.dim {
            return Err(Error::contract(format!(
                "model has dim {} with {} weights; expected {FEATURE_DIM}",
                self.dim,
                self.weights.len()
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::contract("model has non-finite weights"));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        model.validate().map_err(|e| Error::Format {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        Ok(model)
    }
}

/// Can model: feasibility probability.
pub fn can_score(m: &LinearScorer, episode: &EpisodeSpec, history: &History, action: &ActionInstance) -> Result<f64> {
    m.score(episode, history, action)
}

/// Pay model: estimated discounted payoff.
pub fn pay_score(m: &LinearScorer, episode: &EpisodeSpec, history: &History, action: &ActionInstance) -> Result<f64> {
    m.score(episode, history, action)
}
