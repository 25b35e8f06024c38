use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{cost_effectiveness, planning_success, relative_length, EpisodeResult};
use crate::decoding::{Backends, Carry, DecodingConfig, Strategy};
use crate::envs::{EnvId, Split};
use crate::error::{Error, Result};
use crate::plan::ScoreMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub success: usize,
    pub cost_effective: usize,
    pub relative_length: f64,
}

impl SeedMetrics {
    pub fn from_results(seed: u64, results: &[EpisodeResult], expected: usize) -> Result<Self> {
        let rel: Vec<f64> = results.iter().map(relative_length).collect();
        Ok(Self {
            seed,
            success: planning_success(results, expected)?,
            cost_effective: cost_effectiveness(results),
            relative_length: mean(&rel),
        })
    }
}

/// Mean and sample standard deviation over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub success_mean: f64,
    pub success_std: f64,
    pub cost_effective_mean: f64,
    pub cost_effective_std: f64,
    pub relative_length_mean: f64,
    pub relative_length_std: f64,
    pub per_seed: Vec<SeedMetrics>,
}

impl CellMetrics {
    pub fn new(per_seed: Vec<SeedMetrics>) -> Self {
        let s: Vec<f64> = per_seed.iter().map(|m| m.success as f64).collect();
        let c: Vec<f64> = per_seed.iter().map(|m| m.cost_effective as f64).collect();
        let r: Vec<f64> = per_seed.iter().map(|m| m.relative_length).collect();
        Self {
            success_mean: mean(&s),
            success_std: std_dev(&s),
            cost_effective_mean: mean(&c),
            cost_effective_std: std_dev(&c),
            relative_length_mean: mean(&r),
            relative_length_std: std_dev(&r),
            per_seed,
        }
    }
}

/// One (env, split, decoding config) entry of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub env: EnvId,
    pub split: Split,
    pub strategy: Strategy,
    pub score_mode: ScoreMode,
    pub m: usize,
    pub k: usize,
    pub carry: Carry,
    pub backends: Backends,
    pub episodes: usize,
    pub metrics: Option<CellMetrics>,
    /// Why the cell was not evaluated.
    pub skipped: Option<String>,
}

impl Cell {
    pub fn new(env: EnvId, split: Split, config: &DecodingConfig, episodes: usize) -> Self {
        Self {
            env,
            split,
            strategy: config.strategy,
            score_mode: config.score_mode,
            m: config.m,
            k: config.k,
            carry: config.carry,
            backends: config.backends,
            episodes,
            metrics: None,
            skipped: None,
        }
    }

    pub fn success_mean(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.success_mean)
    }

    pub fn cost_effective_mean(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.cost_effective_mean)
    }
}

/// A soft property checked while building a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub description: String,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub max_steps: usize,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn find(&self, pred: impl Fn(&Cell) -> bool) -> Option<&Cell> {
        self.cells.iter().find(|c| pred(c))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(
            out,
            "{} report (max_steps = {}, seeds = {})",
            self.kind,
            self.max_steps,
            seeds.join(",")
        );
        let _ = writeln!(
            out,
            "{:<10} {:<16} {:<14} {:<10} {:>2} {:>2} {:<30} {:>14} {:>14} {:>13}",
            "env", "split", "strategy", "score", "m", "k", "say/can/pay", "success", "cost-eff", "rel-length"
        );
        for c in &self.cells {
            let backends = format!("{}/{}/{}", c.backends.say, c.backends.can, c.backends.pay);
            let head = format!(
                "{:<10} {:<16} {:<14} {:<10} {:>2} {:>2} {:<30}",
                c.env.as_str(),
                c.split.as_str(),
                c.strategy.as_str(),
                c.score_mode.as_str(),
                c.m,
                c.k,
                backends
            );
            match (&c.metrics, &c.skipped) {
                (Some(m), _) => {
                    let _ = writeln!(
                        out,
                        "{head} {:>14} {:>14} {:>13}",
                        format!("{:.1}±{:.1}/{}", m.success_mean, m.success_std, c.episodes),
                        format!(
                            "{:.1}±{:.1}/{}",
                            m.cost_effective_mean, m.cost_effective_std, c.episodes
                        ),
                        format!("{:.3}±{:.3}", m.relative_length_mean, m.relative_length_std),
                    );
                }
                (None, Some(why)) => {
                    let _ = writeln!(out, "{head} SKIPPED: {why}");
                }
                (None, None) => {
                    let _ = writeln!(out, "{head} -");
                }
            }
        }
        if !self.checks.is_empty() {
            let _ = writeln!(out);
            for c in &self.checks {
                let _ = writeln!(out, "[{}] {}", if c.holds { "ok" } else { "FLAG" }, c.description);
            }
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        let txt = dir.join(format!("{stem}.txt"));
        fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        fs::write(&txt, self.render()).map_err(|e| Error::io(&txt, e))?;
        Ok(vec![json, txt])
    }
}

/// Writes one JSON object per line, with the field names of [`EpisodeResult`].
pub fn write_episode_results(path: &Path, results: &[EpisodeResult]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = String::new();
    for r in results {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        assert_eq!(mean(&[]), 0.0);
        assert_eq!(std_dev(&[3.0]), 0.0);
        assert!((std_dev(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-12);
        let m = CellMetrics::new(vec![
            SeedMetrics {
                seed: 0,
                success: 90,
                cost_effective: 80,
                relative_length: 0.9,
            },
            SeedMetrics {
                seed: 1,
                success: 94,
                cost_effective: 84,
                relative_length: 0.8,
            },
        ]);
        assert_eq!(m.success_mean, 92.0);
        assert!((m.success_std - 8f64.sqrt()).abs() < 1e-12);
        assert!(m.cost_effective_mean <= m.success_mean);
    }

    #[test]
    fn render_marks_skipped_cells() {
        let mut cell = Cell::new(EnvId::Hanoi, Split::Test, &DecodingConfig::default(), 100);
        cell.skipped = Some("missing model".into());
        let r = Report {
            kind: "matrix".into(),
            max_steps: 20,
            seeds: vec![0],
            cells: vec![cell],
            checks: vec![],
        };
        let text = r.render();
        assert!(text.contains("max_steps = 20"));
        assert!(text.contains("SKIPPED: missing model"));
        let back: Report = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
