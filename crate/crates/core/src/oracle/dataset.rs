use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bfs_plan_with_id, Trajectory};
use crate::envs::{mix_seed, reset, EnvId, EpisodeSpec, Split, SymbolicState, MAX_STEPS};
use crate::error::{Error, Result};
use crate::plan::{GoalSpec, Symbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
    pub gen: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 400,
            test: 100,
            gen: 100,
        }
    }
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Test => self.test,
            Split::TestGeneralize => self.gen,
        }
    }
}

/// Oracle trajectories for every split of one environment.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub env: EnvId,
    pub train: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    pub test_generalize: Vec<Trajectory>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Trajectory] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
            Split::TestGeneralize => &self.test_generalize,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        Split::ALL
            .iter()
            .map(|&split| {
                let path = split_path(dir, self.env, split);
                write_trajectories(&path, self.split(split))?;
                Ok(path)
            })
            .collect()
    }

    pub fn read(dir: &Path, env: EnvId) -> Result<Self> {
        Ok(Self {
            env,
            train: read_trajectories(&split_path(dir, env, Split::Train))?,
            test: read_trajectories(&split_path(dir, env, Split::Test))?,
            test_generalize: read_trajectories(&split_path(dir, env, Split::TestGeneralize))?,
        })
    }
}

pub fn split_path(dir: &Path, env: EnvId, split: Split) -> PathBuf {
    dir.join(env.as_str()).join(format!("{split}.jsonl"))
}

/// Draws disjoint train / test / test-generalize episodes and solves each
/// with the BFS oracle. Test splits are drawn first so that they do not
/// depend on the size of the train split. Parallelism follows the ambient
/// rayon pool; the result does not depend on it.
pub fn generate_dataset(env: EnvId, counts: SplitCounts, seed: u64) -> Result<Dataset> {
    if counts.train == 0 || counts.test == 0 || counts.gen == 0 {
        return Err(Error::contract("every split needs at least one episode"));
    }
    let mut seen: HashSet<(SymbolicState, GoalSpec)> = HashSet::new();
    let mut out = Dataset {
        env,
        train: Vec::new(),
        test: Vec::new(),
        test_generalize: Vec::new(),
    };
    for split in [Split::Test, Split::TestGeneralize, Split::Train] {
        let n = counts.get(split);
        let base = mix_seed(seed, split as u64 + 1);
        let seeds: Vec<u64> = (0..n as u64).map(|i| mix_seed(base, i) >> 16).collect();
        let drawn: Vec<EpisodeSpec> = seeds.par_iter().map(|&s| reset(env, s, split)).collect::<Result<_>>()?;
        let mut specs = Vec::with_capacity(n);
        for (i, mut spec) in drawn.into_iter().enumerate() {
            let mut s = seeds[i];
            while !seen.insert((spec.init_state.clone(), spec.goal.clone())) {
                s = s.wrapping_add(1);
                log::info!("{env} {split} episode {i}: duplicate draw, retrying with seed {s}");
                spec = reset(env, s, split)?;
            }
            specs.push(spec);
        }
        let trajs: Vec<Trajectory> = specs
            .par_iter()
            .enumerate()
            .map(|(i, spec)| bfs_plan_with_id(spec, format!("{env}-{split}-{i:05}")))
            .collect::<Result<_>>()?;
        match split {
            Split::Train => out.train = trajs,
            Split::Test => out.test = trajs,
            Split::TestGeneralize => out.test_generalize = trajs,
        }
    }
    Ok(out)
}

/// One line of a trajectory file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub episode_id: String,
    pub env: String,
    pub split: String,
    pub seed: u64,
    pub goal: String,
    pub goal_predicate: String,
    pub init_obs: String,
    pub init_state: serde_json::Value,
    pub actions: Vec<String>,
    pub reward: u8,
    pub optimal_length: usize,
}

impl TrajectoryRecord {
    pub fn from_trajectory(t: &Trajectory) -> Result<Self> {
        Ok(Self {
            episode_id: t.episode_id.clone(),
            env: t.episode.env().to_string(),
            split: t.episode.split.to_string(),
            seed: t.episode.seed,
            goal: t.episode.goal.text.clone(),
            goal_predicate: t.episode.goal.predicate.to_string(),
            init_obs: t.episode.init_obs.clone(),
            init_state: serde_json::to_value(&t.episode.init_state)?,
            actions: t.actions.iter().map(|a| a.text.clone()).collect(),
            reward: t.reward,
            optimal_length: t.optimal_length,
        })
    }

    pub fn into_trajectory(self) -> Result<Trajectory> {
        let env: EnvId = self.env.parse()?;
        let init_state: SymbolicState = serde_json::from_value(self.init_state)?;
        if init_state.env() != env {
            return Err(Error::contract(format!(
                "{}: init_state is a {} state but env is {env}",
                self.episode_id,
                init_state.env()
            )));
        }
        let predicate: Symbol = self.goal_predicate.parse()?;
        let episode = EpisodeSpec {
            goal: GoalSpec::new(self.goal, predicate)?,
            init_obs: self.init_obs,
            init_state,
            split: self.split.parse()?,
            seed: self.seed,
            max_steps: MAX_STEPS,
        };
        let actions = self.actions.iter().map(|a| episode.action(a)).collect::<Result<_>>()?;
        Ok(Trajectory {
            episode_id: self.episode_id,
            episode,
            actions,
            reward: self.reward,
            optimal_length: self.optimal_length,
        })
    }
}

/// Writes one JSON object per line, sorted by episode id.
pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut sorted: Vec<&Trajectory> = trajectories.iter().collect();
    sorted.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in sorted {
        let line = serde_json::to_string(&TrajectoryRecord::from_trajectory(t)?)?;
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_owned(),
            message: format!("line {}: {e}", n + 1),
        })?;
        out.push(record.into_trajectory().map_err(|e| Error::Format {
            path: path.to_owned(),
            message: format!("line {}: {e}", n + 1),
        })?);
    }
    Ok(out)
}
