use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use log::info;

use scp_core::decoding::{decode, BackendKind, DecodingConfig};
use scp_core::envs::{reset, EnvId, EpisodeSpec, Split};
use scp_core::eval::{execute_actions, provision, write_episode_results, AblationKind, Evaluator, Grid};
use scp_core::models::{model_path, train_can, train_pay, train_say, ExternalSay, ModelKind, ModelSet, TrainConfig};
use scp_core::oracle::{generate_dataset, split_path, Dataset, Oracle, SplitCounts};

use crate::settings::usage;

pub fn gen_data(envs: &[EnvId], counts: SplitCounts, seed: u64, out: &Path) -> Result<String> {
    let mut text = String::new();
    for &env in envs {
        let ds = generate_dataset(env, counts, seed).with_context(|| format!("generating {env} data"))?;
        ds.write(out)
            .with_context(|| format!("writing {env} data under {}", out.display()))?;
        for split in Split::ALL {
            let trajs = ds.split(split);
            let mean = trajs.iter().map(|t| t.optimal_length as f64).sum::<f64>() / trajs.len() as f64;
            let _ = writeln!(
                text,
                "{env} {split}: {} episodes, mean oracle length {mean:.2} -> {}",
                trajs.len(),
                split_path(out, env, split).display()
            );
        }
    }
    Ok(text)
}

pub fn read_dataset(data_dir: &Path, env: EnvId) -> Result<Dataset> {
    Dataset::read(data_dir, env).with_context(|| {
        format!(
            "reading {env} data from {} (run `scp gen-data` first)",
            data_dir.join(env.as_str()).display()
        )
    })
}

pub fn train(envs: &[EnvId], kinds: &[ModelKind], config: &TrainConfig, data_dir: &Path, out: &Path) -> Result<String> {
    let mut text = String::new();
    for &env in envs {
        let ds = read_dataset(data_dir, env)?;
        for &kind in kinds {
            info!("training {env} {kind} on {} trajectories", ds.train.len());
            let model = match kind {
                ModelKind::Say => train_say(&ds.train, config)?.scorer,
                ModelKind::Can => train_can(&ds.train, config)?,
                ModelKind::Pay => train_pay(&ds.train, config)?,
            };
            let path = model_path(out, env, kind);
            model.save(&path)?;
            let metrics: Vec<String> = model
                .config
                .metrics
                .iter()
                .map(|(k, v)| format!("{k}={v:.4}"))
                .collect();
            let _ = writeln!(text, "{env} {kind}: {} -> {}", metrics.join(" "), path.display());
        }
    }
    Ok(text)
}

/// Models for one seed: `<dir>/seed-<seed>` when it exists, else `<dir>`.
pub fn model_dir_for_seed(dir: &Path, seed: u64) -> PathBuf {
    let per_seed = dir.join(format!("seed-{seed}"));
    if per_seed.is_dir() {
        per_seed
    } else {
        dir.to_owned()
    }
}

fn require_models(config: &DecodingConfig, env: EnvId, dir: &Path, models: &ModelSet) -> Result<()> {
    let b = config.backends;
    let needed = [
        (b.say == BackendKind::Trained, ModelKind::Say),
        (
            b.can == BackendKind::Trained && config.score_mode.uses_can(),
            ModelKind::Can,
        ),
        (
            b.pay == BackendKind::Trained && config.score_mode.uses_pay(),
            ModelKind::Pay,
        ),
    ];
    for (needed, kind) in needed {
        if needed && models.get(kind).is_none() {
            bail!(
                "missing model file {} (run `scp train` or choose another backend)",
                model_path(dir, env, kind).display()
            );
        }
    }
    Ok(())
}

pub struct PlanRequest<'a> {
    pub env: EnvId,
    pub split: Split,
    pub seed: u64,
    pub episode: Option<&'a str>,
    pub config: DecodingConfig,
    pub delta: f64,
    pub data_dir: &'a Path,
    pub model_dir: &'a Path,
    pub adapter: Option<ExternalSay>,
}

/// Decodes one episode and renders the plan with its per-step scores.
pub fn plan(req: PlanRequest<'_>) -> Result<String> {
    let (episode, optimal): (EpisodeSpec, Option<usize>) = match req.episode {
        Some(id) => {
            let ds = read_dataset(req.data_dir, req.env)?;
            let t = ds
                .split(req.split)
                .iter()
                .find(|t| t.episode_id == id)
                .ok_or_else(|| usage(format!("no episode `{id}` in the {} {} split", req.env, req.split)))?;
            (t.episode.clone(), Some(t.optimal_length))
        }
        None => (reset(req.env, req.seed, req.split)?, None),
    };
    let dir = model_dir_for_seed(req.model_dir, req.seed);
    let models = ModelSet::load(&dir, req.env)?;
    require_models(&req.config, req.env, &dir, &models)?;
    let oracle = Arc::new(Oracle::new(req.delta));
    let backends = provision(
        &req.config,
        req.env,
        Some(&models),
        &oracle,
        req.adapter.as_ref(),
        req.seed,
    )?
    .map_err(anyhow::Error::msg)?;
    let result = decode(backends.scorers(), &episode, &req.config)?;
    let exec = execute_actions(&episode, &result.plan)?;

    let mut out = String::new();
    let _ = writeln!(out, "env: {}  split: {}  seed: {}", req.env, req.split, episode.seed);
    let _ = writeln!(out, "goal: {}", episode.goal.text);
    let _ = writeln!(out, "observation: {}", episode.init_obs);
    let _ = writeln!(out, "config: {}", req.config.fingerprint());
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:>4}  {:<40} {:>9} {:>9} {:>9} {:>10}",
        "step", "action", "p_say", "p_can", "f_pay", "score"
    );
    for (i, s) in result.per_step.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>4}  {:<40} {:>9.4} {:>9.4} {:>9.4} {:>10.4}",
            i + 1,
            s.action.text,
            s.p_say,
            s.p_can,
            s.f_pay,
            s.step_log_score
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "final score: {:.4}", result.final_score);
    let _ = writeln!(out, "terminated by: {:?}", result.terminated_by);
    let optimal = match optimal {
        Some(n) => n,
        None => scp_core::oracle::bfs_plan(&episode).map(|t| t.optimal_length)?,
    };
    let _ = writeln!(
        out,
        "executed: {}  reached goal: {}  length: {} (oracle {optimal})",
        exec.executed_ok,
        exec.reached_goal,
        result.plan.len()
    );
    Ok(out)
}

pub struct EvalRequest<'a> {
    pub grid: Grid,
    pub delta: f64,
    pub data_dir: &'a Path,
    pub model_dir: &'a Path,
    pub adapter: Option<ExternalSay>,
    pub out: &'a Path,
    pub dump_episodes: bool,
}

fn evaluator(req: &EvalRequest<'_>) -> Result<Evaluator> {
    let mut datasets = BTreeMap::new();
    let mut models = BTreeMap::new();
    for &env in &req.grid.envs {
        datasets.insert(env, read_dataset(req.data_dir, env)?);
        for &seed in &req.grid.seeds {
            let dir = model_dir_for_seed(req.model_dir, seed);
            models.insert((seed, env), ModelSet::load(&dir, env)?);
        }
    }
    let mut ev = Evaluator::new(datasets, models);
    ev.oracle = Arc::new(Oracle::new(req.delta));
    ev.adapter = req.adapter.clone();
    Ok(ev)
}

/// Runs the grid (or an ablation) and writes `<stem>.json` / `<stem>.txt`.
pub fn eval(req: EvalRequest<'_>, ablation: Option<AblationKind>) -> Result<String> {
    let ev = evaluator(&req)?;
    let (report, episodes, stem) = match ablation {
        None => {
            let (r, e) = ev.run_matrix(&req.grid)?;
            (r, e, "eval".to_string())
        }
        Some(kind) => {
            let (r, e) = ev.ablate(kind, &req.grid)?;
            (r, e, format!("ablate-{kind}"))
        }
    };
    let paths = report
        .write(req.out, &stem)
        .with_context(|| format!("writing report under {}", req.out.display()))?;
    let mut text = report.render();
    if req.dump_episodes {
        let path = req.out.join(format!("{stem}-episodes.jsonl"));
        write_episode_results(&path, &episodes)?;
        let _ = writeln!(text, "episodes -> {}", path.display());
    }
    for p in paths {
        let _ = writeln!(text, "report -> {}", p.display());
    }
    Ok(text)
}
