use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Cell, CellMetrics, Check, Report, SeedMetrics};
use super::{execute_plan, failed_episode, EpisodeResult};
use crate::decoding::{
    decode, BackendKind, DecodingConfig, OracleCan, OraclePay, PerfectSay, Proposer, Scorer, Scorers, Strategy,
    PERFECT_SAY_CANDIDATES,
};
use crate::envs::{EnvId, Split};
use crate::error::{Error, Result};
use crate::models::{ExternalSay, ModelSet, SayPolicy};
use crate::oracle::{Dataset, Oracle};
use crate::plan::ScoreMode;

/// Owned scorer backends for one (env, seed, config).
pub struct Provisioned {
    say: Box<dyn Proposer>,
    can: Option<Box<dyn Scorer>>,
    pay: Option<Box<dyn Scorer>>,
}

impl Provisioned {
    pub fn scorers(&self) -> Scorers<'_> {
        Scorers {
            say: self.say.as_ref(),
            can: self.can.as_deref(),
            pay: self.pay.as_deref(),
        }
    }
}

/// Builds the backends `config` asks for. `Ok(Err(reason))` means a trained
/// model is missing and the caller should skip rather than fail.
pub fn provision(
    config: &DecodingConfig,
    env: EnvId,
    models: Option<&ModelSet>,
    oracle: &Arc<Oracle>,
    adapter: Option<&ExternalSay>,
    seed: u64,
) -> Result<std::result::Result<Provisioned, String>> {
    config.validate()?;
    let missing = |kind: &str| format!("no trained {kind} model for {env} (seed {seed})");
    let b = config.backends;
    let say: Box<dyn Proposer> = match b.say {
        BackendKind::Trained => match models.and_then(|m| m.say.clone()) {
            Some(p) => Box::new(p),
            None => return Ok(Err(missing("say"))),
        },
        BackendKind::Uniform | BackendKind::Oracle => Box::new(SayPolicy::uniform(env)),
        BackendKind::PerfectSay => Box::new(PerfectSay { seed }),
        BackendKind::External => match adapter {
            Some(a) => Box::new(a.clone()),
            None => return Err(Error::contract("the external Say backend needs an adapter endpoint")),
        },
    };
    let scorer = |uses: bool, kind: BackendKind, role: &str| -> std::result::Result<Option<Box<dyn Scorer>>, String> {
        if !uses {
            return Ok(None);
        }
        let trained = match role {
            "can" => models.and_then(|m| m.can.clone()),
            _ => models.and_then(|m| m.pay.clone()),
        };
        Ok(Some(match (kind, role) {
            (BackendKind::Oracle, "can") => Box::new(OracleCan(oracle.clone())),
            (BackendKind::Oracle, _) => Box::new(OraclePay(oracle.clone())),
            _ => Box::new(trained.ok_or_else(|| missing(role))?),
        }))
    };
    let can = match scorer(config.score_mode.uses_can(), b.can, "can") {
        Ok(s) => s,
        Err(why) => return Ok(Err(why)),
    };
    let pay = match scorer(config.score_mode.uses_pay(), b.pay, "pay") {
        Ok(s) => s,
        Err(why) => return Ok(Err(why)),
    };
    Ok(Ok(Provisioned { say, can, pay }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationKind {
    BeamSize,
    PerfectSay,
}

impl AblationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationKind::BeamSize => "beam-size",
            AblationKind::PerfectSay => "perfect-say",
        }
    }
}

impl fmt::Display for AblationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beam-size" => Ok(AblationKind::BeamSize),
            "perfect-say" => Ok(AblationKind::PerfectSay),
            _ => Err(Error::contract(format!(
                "unknown ablation `{s}` (expected beam-size or perfect-say)"
            ))),
        }
    }
}

/// Axes of an evaluation grid. `base` supplies everything not swept.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub envs: Vec<EnvId>,
    pub splits: Vec<Split>,
    pub strategies: Vec<Strategy>,
    pub score_modes: Vec<ScoreMode>,
    pub base: DecodingConfig,
    pub seeds: Vec<u64>,
}

impl Grid {
    pub fn new(base: DecodingConfig, seeds: Vec<u64>) -> Self {
        Self {
            envs: EnvId::ALL.to_vec(),
            splits: vec![Split::Test, Split::TestGeneralize],
            strategies: vec![Strategy::GreedyAction, Strategy::BeamAction],
            score_modes: ScoreMode::ALL.to_vec(),
            base,
            seeds,
        }
    }
}

/// Evaluates decoding configs on held-out splits.
pub struct Evaluator {
    pub datasets: BTreeMap<EnvId, Dataset>,
    /// Trained models keyed by (seed, env).
    pub models: BTreeMap<(u64, EnvId), ModelSet>,
    pub oracle: Arc<Oracle>,
    pub adapter: Option<ExternalSay>,
}

/// Greedy strategies do not use `k`; it is pinned to 1 so fingerprints agree.
fn normalize(mut config: DecodingConfig) -> DecodingConfig {
    if config.strategy != Strategy::BeamAction {
        config.k = 1;
    }
    config
}

impl Evaluator {
    pub fn new(datasets: BTreeMap<EnvId, Dataset>, models: BTreeMap<(u64, EnvId), ModelSet>) -> Self {
        Self {
            datasets,
            models,
            oracle: Arc::new(Oracle::default()),
            adapter: None,
        }
    }

    fn dataset(&self, env: EnvId) -> Result<&Dataset> {
        self.datasets
            .get(&env)
            .ok_or_else(|| Error::contract(format!("no dataset loaded for {env}")))
    }

    /// Decodes and executes every episode of the split, in episode-id order.
    /// `Ok(Err(reason))` when a required trained model is missing.
    pub fn run_episodes(
        &self,
        env: EnvId,
        split: Split,
        config: &DecodingConfig,
        seed: u64,
    ) -> Result<std::result::Result<Vec<EpisodeResult>, String>> {
        let trajectories = self.dataset(env)?.split(split);
        let models = self.models.get(&(seed, env));
        let backends = match provision(config, env, models, &self.oracle, self.adapter.as_ref(), seed)? {
            Ok(b) => b,
            Err(why) => return Ok(Err(why)),
        };
        let scorers = backends.scorers();
        let fingerprint = config.fingerprint();
        let mut results: Vec<EpisodeResult> = trajectories
            .par_iter()
            .map(|t| {
                let start = Instant::now();
                let mut r = match decode(scorers, &t.episode, config) {
                    Ok(plan) => execute_plan(t, plan, &fingerprint, seed)?,
                    Err(e @ (Error::Contract(_) | Error::EnvMismatch { .. })) => return Err(e),
                    Err(e) => {
                        log::warn!("{}: {e}", t.episode_id);
                        failed_episode(t, &e, &fingerprint, seed)
                    }
                };
                r.wall_time = start.elapsed().as_secs_f64();
                Ok(r)
            })
            .collect::<Result<_>>()?;
        results.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
        Ok(Ok(results))
    }

    /// Evaluates one cell over every seed; episode results are appended to
    /// `episodes`.
    pub fn cell(
        &self,
        env: EnvId,
        split: Split,
        config: &DecodingConfig,
        seeds: &[u64],
        episodes: &mut Vec<EpisodeResult>,
    ) -> Result<Cell> {
        let config = normalize(*config);
        let n = self.dataset(env)?.split(split).len();
        let mut cell = Cell::new(env, split, &config, n);
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            match self.run_episodes(env, split, &config, seed)? {
                Ok(results) => {
                    per_seed.push(SeedMetrics::from_results(seed, &results, n)?);
                    episodes.extend(results);
                }
                Err(why) => {
                    log::warn!("skipping {env} {split} {}: {why}", config.fingerprint());
                    cell.skipped = Some(why);
                    return Ok(cell);
                }
            }
        }
        cell.metrics = Some(CellMetrics::new(per_seed));
        Ok(cell)
    }

    /// Every env × split × strategy × score mode of the grid.
    pub fn run_matrix(&self, grid: &Grid) -> Result<(Report, Vec<EpisodeResult>)> {
        let mut episodes = Vec::new();
        let mut cells = Vec::new();
        for &env in &grid.envs {
            for &split in &grid.splits {
                for &strategy in &grid.strategies {
                    for &score_mode in &grid.score_modes {
                        let config = DecodingConfig {
                            strategy,
                            score_mode,
                            ..grid.base
                        };
                        cells.push(self.cell(env, split, &config, &grid.seeds, &mut episodes)?);
                    }
                }
            }
        }
        let checks = cells
            .iter()
            .filter_map(|c| {
                let m = c.metrics.as_ref()?;
                Some(Check {
                    description: format!(
                        "{} {} {} {}: cost-effective <= success",
                        c.env, c.split, c.strategy, c.score_mode
                    ),
                    holds: m.per_seed.iter().all(|s| s.cost_effective <= s.success),
                })
            })
            .filter(|c| !c.holds)
            .collect();
        Ok((
            Report {
                kind: "matrix".into(),
                max_steps: grid.base.max_steps,
                seeds: grid.seeds.clone(),
                cells,
                checks,
            },
            episodes,
        ))
    }

    /// Beam-size sweep (k = 1, 2, 3 with Beam-Action SayCanPay at the grid's
    /// m) or trained-vs-perfect Say under Greedy-Action SayCan / SayCanPay;
    /// Perfect-Say cells propose [`PERFECT_SAY_CANDIDATES`] actions.
    pub fn ablate(&self, kind: AblationKind, grid: &Grid) -> Result<(Report, Vec<EpisodeResult>)> {
        let mut episodes = Vec::new();
        let mut cells = Vec::new();
        let mut checks = Vec::new();
        for &env in &grid.envs {
            for &split in &grid.splits {
                match kind {
                    AblationKind::BeamSize => {
                        let mut row = Vec::new();
                        let mut k1_eps = Vec::new();
                        for k in 1..=3 {
                            let config = DecodingConfig {
                                strategy: Strategy::BeamAction,
                                score_mode: ScoreMode::SayCanPay,
                                k,
                                ..grid.base
                            };
                            let sink = if k == 1 { &mut k1_eps } else { &mut episodes };
                            row.push(self.cell(env, split, &config, &grid.seeds, sink)?);
                        }
                        let greedy = DecodingConfig {
                            strategy: Strategy::GreedyAction,
                            score_mode: ScoreMode::SayCanPay,
                            ..grid.base
                        };
                        let mut greedy_eps = Vec::new();
                        let g = self.cell(env, split, &greedy, &grid.seeds, &mut greedy_eps)?;
                        if g.metrics.is_some() && row[0].metrics.is_some() {
                            let plans = |rs: &[EpisodeResult]| rs.iter().map(|r| r.plan.clone()).collect::<Vec<_>>();
                            checks.push(Check {
                                description: format!("{env} {split}: k=1 equals greedy-action"),
                                holds: plans(&greedy_eps) == plans(&k1_eps),
                            });
                        }
                        episodes.extend(k1_eps);
                        let s: Vec<Option<f64>> = row.iter().map(Cell::success_mean).collect();
                        if s.iter().all(Option::is_some) {
                            let s: Vec<f64> = s.into_iter().flatten().collect();
                            checks.push(Check {
                                description: format!("{env} {split}: success non-decreasing in k (2-episode slack)"),
                                holds: s.windows(2).all(|w| w[1] + 2.0 >= w[0]),
                            });
                        }
                        cells.extend(row);
                    }
                    AblationKind::PerfectSay => {
                        for score_mode in [ScoreMode::SayCan, ScoreMode::SayCanPay] {
                            let mut pair = Vec::new();
                            for say in [grid.base.backends.say, BackendKind::PerfectSay] {
                                let mut config = DecodingConfig {
                                    strategy: Strategy::GreedyAction,
                                    score_mode,
                                    ..grid.base
                                };
                                config.backends.say = say;
                                if say == BackendKind::PerfectSay {
                                    config.m = PERFECT_SAY_CANDIDATES;
                                    config.k = config.k.min(config.m);
                                }
                                pair.push(self.cell(env, split, &config, &grid.seeds, &mut episodes)?);
                            }
                            if let (Some(t), Some(p)) = (pair[0].success_mean(), pair[1].success_mean()) {
                                checks.push(Check {
                                    description: format!(
                                        "{env} {split} {score_mode}: perfect-say >= {} say",
                                        grid.base.backends.say
                                    ),
                                    holds: p >= t,
                                });
                            }
                            cells.extend(pair);
                        }
                    }
                }
            }
        }
        Ok((
            Report {
                kind: kind.to_string(),
                max_steps: grid.base.max_steps,
                seeds: grid.seeds.clone(),
                cells,
                checks,
            },
            episodes,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::Backends;
    use crate::models::{LinearScorer, ModelKind};
    use crate::oracle::{generate_dataset, SplitCounts};

    fn evaluator(envs: &[EnvId], test: usize) -> Evaluator {
        let datasets = envs
            .iter()
            .map(|&e| {
                (
                    e,
                    generate_dataset(e, SplitCounts { train: 2, test, gen: 5 }, 0).unwrap(),
                )
            })
            .collect();
        Evaluator::new(datasets, BTreeMap::new())
    }

    fn oracle_grid(envs: &[EnvId]) -> Grid {
        let base = DecodingConfig {
            backends: Backends::oracle(),
            ..DecodingConfig::default()
        };
        Grid {
            envs: envs.to_vec(),
            splits: vec![Split::Test],
            ..Grid::new(base, vec![0])
        }
    }

    #[test]
    fn matrix_has_six_cells_per_env_and_split() {
        let ev = evaluator(&[EnvId::Hanoi], 10);
        let mut grid = oracle_grid(&[EnvId::Hanoi]);
        grid.splits = vec![Split::Test, Split::TestGeneralize];
        let (report, episodes) = ev.run_matrix(&grid).unwrap();
        assert_eq!(report.cells.len(), 12);
        assert_eq!(episodes.len(), 6 * 10 + 6 * 5);
        assert!(report.render().contains("max_steps = 20"));
        for c in &report.cells {
            let m = c.metrics.as_ref().unwrap();
            assert!(m.cost_effective_mean <= m.success_mean);
        }
    }

    #[test]
    fn oracle_greedy_solves_every_hanoi_episode() {
        let ev = evaluator(&[EnvId::Hanoi], 30);
        let mut grid = oracle_grid(&[EnvId::Hanoi]);
        grid.base.m = 12;
        let mut eps = Vec::new();
        let config = DecodingConfig {
            strategy: Strategy::GreedyAction,
            score_mode: ScoreMode::SayCanPay,
            ..grid.base
        };
        let cell = ev.cell(EnvId::Hanoi, Split::Test, &config, &[0], &mut eps).unwrap();
        let m = cell.metrics.unwrap();
        assert_eq!(m.success_mean, 30.0);
        assert_eq!(m.cost_effective_mean, 30.0);
        assert_eq!(m.relative_length_mean, 1.0);
        assert_eq!(cell.k, 1);
    }

    #[test]
    fn missing_model_skips_the_cell() {
        let ev = evaluator(&[EnvId::Blocks], 3);
        let grid = Grid {
            envs: vec![EnvId::Blocks],
            splits: vec![Split::Test],
            ..Grid::new(DecodingConfig::default(), vec![0])
        };
        let (report, episodes) = ev.run_matrix(&grid).unwrap();
        assert!(episodes.is_empty());
        assert!(report
            .cells
            .iter()
            .all(|c| c.skipped.as_deref().unwrap().contains("no trained say model")));
        assert!(report.render().contains("SKIPPED"));
    }

    #[test]
    fn say_mode_needs_no_can_or_pay_model() {
        let mut ev = evaluator(&[EnvId::Blocks], 3);
        let set = ModelSet {
            say: Some(SayPolicy::uniform(EnvId::Blocks)),
            ..ModelSet::default()
        };
        ev.models.insert((0, EnvId::Blocks), set);
        let config = DecodingConfig {
            score_mode: ScoreMode::Say,
            ..DecodingConfig::default()
        };
        let cell = ev
            .cell(EnvId::Blocks, Split::Test, &config, &[0], &mut Vec::new())
            .unwrap();
        assert!(cell.metrics.is_some());
        let config = DecodingConfig {
            score_mode: ScoreMode::SayCan,
            ..DecodingConfig::default()
        };
        let cell = ev
            .cell(EnvId::Blocks, Split::Test, &config, &[0], &mut Vec::new())
            .unwrap();
        assert!(cell.skipped.unwrap().contains("can"));
    }

    #[test]
    fn wrong_env_model_is_an_error() {
        let mut ev = evaluator(&[EnvId::Blocks], 3);
        let set = ModelSet {
            say: Some(SayPolicy::new(LinearScorer::zeros(ModelKind::Say, EnvId::Hanoi))),
            ..ModelSet::default()
        };
        ev.models.insert((0, EnvId::Blocks), set);
        let config = DecodingConfig {
            score_mode: ScoreMode::Say,
            ..DecodingConfig::default()
        };
        assert!(matches!(
            ev.cell(EnvId::Blocks, Split::Test, &config, &[0], &mut Vec::new()),
            Err(Error::EnvMismatch { .. })
        ));
    }

    #[test]
    fn reports_do_not_depend_on_thread_count_or_episode_order() {
        let ev = evaluator(&EnvId::ALL, 8);
        let grid = oracle_grid(&EnvId::ALL);
        let run = |threads: usize, ev: &Evaluator| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| ev.run_matrix(&grid).unwrap().0.to_json().unwrap())
        };
        let one = run(1, &ev);
        assert_eq!(one, run(4, &ev));
        let mut shuffled = evaluator(&EnvId::ALL, 8);
        for ds in shuffled.datasets.values_mut() {
            ds.test.reverse();
        }
        assert_eq!(one, run(3, &shuffled));
    }

    #[test]
    fn ablations_emit_expected_cells_and_checks() {
        let ev = evaluator(&[EnvId::Gridworld], 6);
        let grid = oracle_grid(&[EnvId::Gridworld]);
        let (beam, _) = ev.ablate(AblationKind::BeamSize, &grid).unwrap();
        let ks: Vec<usize> = beam.cells.iter().map(|c| c.k).collect();
        assert_eq!(ks, [1, 2, 3]);
        assert!(beam
            .checks
            .iter()
            .any(|c| c.description.contains("k=1 equals greedy") && c.holds));
        let (perfect, _) = ev.ablate(AblationKind::PerfectSay, &grid).unwrap();
        assert_eq!(perfect.cells.len(), 4);
        assert_eq!(perfect.cells[1].backends.say, BackendKind::PerfectSay);
        assert_eq!(perfect.checks.len(), 2);
        assert!(perfect.checks.iter().all(|c| c.holds));
        assert_eq!("perfect-say".parse::<AblationKind>().unwrap(), AblationKind::PerfectSay);
    }

    #[test]
    fn external_backend_without_endpoint_is_an_error() {
        let ev = evaluator(&[EnvId::Hanoi], 2);
        let mut config = DecodingConfig {
            score_mode: ScoreMode::Say,
            ..DecodingConfig::default()
        };
        config.backends.say = BackendKind::External;
        assert!(ev
            .cell(EnvId::Hanoi, Split::Test, &config, &[0], &mut Vec::new())
            .is_err());
    }
}
