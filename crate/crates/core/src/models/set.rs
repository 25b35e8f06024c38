use std::path::{Path, PathBuf};

use super::{train_can, train_pay, train_say, LinearScorer, ModelKind, SayPolicy, TrainConfig};
use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::oracle::Trajectory;

/// Trained models of one environment. Any of them may be absent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelSet {
    pub say: Option<SayPolicy>,
    pub can: Option<LinearScorer>,
    pub pay: Option<LinearScorer>,
}

/// `<dir>/<env>/<kind>.json`
pub fn model_path(dir: &Path, env: EnvId, kind: ModelKind) -> PathBuf {
    dir.join(env.as_str()).join(format!("{kind}.json"))
}

impl ModelSet {
    /// Trains all three models on the same trajectories.
    pub fn train(trajectories: &[Trajectory], config: &TrainConfig) -> Result<Self> {
        Ok(Self {
            say: Some(train_say(trajectories, config)?),
            can: Some(train_can(trajectories, config)?),
            pay: Some(train_pay(trajectories, config)?),
        })
    }

    pub fn get(&self, kind: ModelKind) -> Option<&LinearScorer> {
        match kind {
            ModelKind::Say => self.say.as_ref().map(|p| &p.scorer),
            ModelKind::Can => self.can.as_ref(),
            ModelKind::Pay => self.pay.as_ref(),
        }
    }

    /// Loads whichever model files exist. A file that exists but is corrupt,
    /// of the wrong kind, or trained on another env is an error.
    pub fn load(dir: &Path, env: EnvId) -> Result<Self> {
        let load = |kind: ModelKind| -> Result<Option<LinearScorer>> {
            let path = model_path(dir, env, kind);
            if !path.exists() {
                return Ok(None);
            }
            let m = LinearScorer::load(&path)?;
            if m.kind != kind || m.env != env {
                return Err(Error::Format {
                    message: format!("expected a {env} {kind} model, found {} {}", m.env, m.kind),
                    path,
                });
            }
            Ok(Some(m))
        };
        Ok(Self {
            say: load(ModelKind::Say)?.map(SayPolicy::new),
            can: load(ModelKind::Can)?,
            pay: load(ModelKind::Pay)?,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for kind in [ModelKind::Say, ModelKind::Can, ModelKind::Pay] {
            if let Some(m) = self.get(kind) {
                let path = model_path(dir, m.env, kind);
                m.save(&path)?;
                out.push(path);
            }
        }
        Ok(out)
    }
}
