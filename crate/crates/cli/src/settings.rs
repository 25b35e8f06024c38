//! Flag, config-file and default resolution.
//!
//! Precedence is flag > config file > built-in default. The data directory
//! additionally honours `SCP_DATA_DIR`, which sits between the flag and the
//! config file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use serde::Deserialize;

use scp_core::decoding::{BackendKind, Backends, Carry, DecodingConfig, Strategy};
use scp_core::envs::{EnvId, Split, MAX_STEPS};
use scp_core::models::TrainConfig;
use scp_core::oracle::SplitCounts;
use scp_core::plan::ScoreMode;

pub const DATA_DIR_VAR: &str = "SCP_DATA_DIR";

/// Bad flags, config values or arguments; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// A TOML scalar that may be written as a string or a number.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Int(u64),
    Float(f64),
    Text(String),
    List(Vec<Scalar>),
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Float(v) => write!(f, "{v}"),
            Scalar::Text(v) => f.write_str(v),
            Scalar::List(v) => {
                let parts: Vec<String> = v.iter().map(|s| s.to_string()).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

/// Keys accepted in a `--config` TOML file; names follow the flags with
/// `-` replaced by `_`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub env: Option<Scalar>,
    pub split: Option<Scalar>,
    pub strategy: Option<Scalar>,
    pub score: Option<Scalar>,
    pub m: Option<Scalar>,
    pub k: Option<Scalar>,
    pub max_steps: Option<Scalar>,
    pub carry: Option<Scalar>,
    pub delta: Option<Scalar>,
    pub lr: Option<Scalar>,
    pub wd: Option<Scalar>,
    pub batch: Option<Scalar>,
    pub epochs: Option<Scalar>,
    pub seed: Option<Scalar>,
    pub jobs: Option<Scalar>,
    pub backend_say: Option<Scalar>,
    pub backend_can: Option<Scalar>,
    pub backend_pay: Option<Scalar>,
    pub adapter_endpoint: Option<Scalar>,
    pub train: Option<Scalar>,
    pub test: Option<Scalar>,
    pub gen: Option<Scalar>,
    pub data_dir: Option<Scalar>,
    pub model_dir: Option<Scalar>,
    pub report_dir: Option<Scalar>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

/// Picks the flag, then the file value, then `default`, and parses it.
pub fn pick<T>(name: &str, flag: Option<&str>, file: Option<&Scalar>, default: &str) -> Result<T>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    let file = file.map(Scalar::to_string);
    let raw = flag.map(str::to_owned).or(file).unwrap_or_else(|| default.to_owned());
    raw.parse::<T>()
        .map_err(|e| usage(format!("invalid value `{raw}` for {name}: {e}")))
}

/// Comma-separated list; `all` expands to `all_values`.
pub fn pick_list<T>(
    name: &str,
    flag: Option<&str>,
    file: Option<&Scalar>,
    default: &str,
    all_values: &[T],
) -> Result<Vec<T>>
where
    T: FromStr + Clone + PartialEq,
    T::Err: fmt::Display,
{
    let raw: String = pick(name, flag, file, default)?;
    if raw.trim() == "all" && !all_values.is_empty() {
        return Ok(all_values.to_vec());
    }
    let mut out = Vec::new();
    for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let v: T = part
            .parse()
            .map_err(|e| usage(format!("invalid value `{part}` for {name}: {e}")))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(usage(format!("{name} needs at least one value")));
    }
    Ok(out)
}

pub fn data_dir(flag: Option<&Path>, file: &FileConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_owned();
    }
    if let Some(v) = std::env::var_os(DATA_DIR_VAR).filter(|v| !v.is_empty()) {
        return PathBuf::from(v);
    }
    file.data_dir
        .as_ref()
        .map_or_else(|| PathBuf::from("data"), |s| PathBuf::from(s.to_string()))
}

pub fn model_dir(flag: Option<&Path>, file: &FileConfig) -> PathBuf {
    flag.map(Path::to_owned)
        .or_else(|| file.model_dir.as_ref().map(|s| PathBuf::from(s.to_string())))
        .unwrap_or_else(|| PathBuf::from("models"))
}

pub fn report_dir(flag: Option<&Path>, file: &FileConfig) -> PathBuf {
    flag.map(Path::to_owned)
        .or_else(|| file.report_dir.as_ref().map(|s| PathBuf::from(s.to_string())))
        .unwrap_or_else(|| PathBuf::from("reports"))
}

pub fn envs(flag: Option<&str>, file: &FileConfig) -> Result<Vec<EnvId>> {
    pick_list("--env", flag, file.env.as_ref(), "all", &EnvId::ALL)
}

pub fn seeds(flag: Option<&str>, file: &FileConfig) -> Result<Vec<u64>> {
    pick_list("--seed", flag, file.seed.as_ref(), "0", &[])
}

pub fn jobs(flag: Option<usize>, file: &FileConfig) -> Result<usize> {
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    let n: usize = pick(
        "--jobs",
        flag.map(|v| v.to_string()).as_deref(),
        file.jobs.as_ref(),
        &default.to_string(),
    )?;
    if n == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    Ok(n)
}

pub fn split_counts(
    train: Option<usize>,
    test: Option<usize>,
    gen: Option<usize>,
    file: &FileConfig,
) -> Result<SplitCounts> {
    let d = SplitCounts::default();
    let get = |name: &str, flag: Option<usize>, f: Option<&Scalar>, def: usize| -> Result<usize> {
        pick(name, flag.map(|v| v.to_string()).as_deref(), f, &def.to_string())
    };
    Ok(SplitCounts {
        train: get("--train", train, file.train.as_ref(), d.train)?,
        test: get("--test", test, file.test.as_ref(), d.test)?,
        gen: get("--gen", gen, file.gen.as_ref(), d.gen)?,
    })
}

/// Training hyperparameters given as flags.
#[derive(Clone, Debug, Default)]
pub struct TrainFlags {
    pub delta: Option<f64>,
    pub lr: Option<f64>,
    pub wd: Option<f64>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
}

pub fn train_config(flags: &TrainFlags, seed: u64, file: &FileConfig) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let s = |v: Option<String>| v;
    let cfg = TrainConfig {
        lr: pick(
            "--lr",
            s(flags.lr.map(|v| v.to_string())).as_deref(),
            file.lr.as_ref(),
            &d.lr.to_string(),
        )?,
        weight_decay: pick(
            "--wd",
            s(flags.wd.map(|v| v.to_string())).as_deref(),
            file.wd.as_ref(),
            &d.weight_decay.to_string(),
        )?,
        batch: pick(
            "--batch",
            s(flags.batch.map(|v| v.to_string())).as_deref(),
            file.batch.as_ref(),
            &d.batch.to_string(),
        )?,
        epochs: pick(
            "--epochs",
            s(flags.epochs.map(|v| v.to_string())).as_deref(),
            file.epochs.as_ref(),
            &d.epochs.to_string(),
        )?,
        delta: pick(
            "--delta",
            s(flags.delta.map(|v| v.to_string())).as_deref(),
            file.delta.as_ref(),
            &d.delta.to_string(),
        )?,
        seed,
        ..d
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// Decoding options given as flags. Strategy and score may be lists for
/// `eval`; single-valued commands take the first entry.
#[derive(Clone, Debug, Default)]
pub struct DecodeFlags {
    pub strategy: Option<String>,
    pub score: Option<String>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub max_steps: Option<usize>,
    pub carry: Option<String>,
    pub backend_say: Option<String>,
    pub backend_can: Option<String>,
    pub backend_pay: Option<String>,
}

pub struct Decoding {
    pub base: DecodingConfig,
    pub strategies: Vec<Strategy>,
    pub score_modes: Vec<ScoreMode>,
}

pub fn decoding(
    flags: &DecodeFlags,
    file: &FileConfig,
    default_strategies: &str,
    default_scores: &str,
) -> Result<Decoding> {
    let d = DecodingConfig::default();
    let num = |name: &str, flag: Option<usize>, f: Option<&Scalar>, def: usize| -> Result<usize> {
        pick(name, flag.map(|v| v.to_string()).as_deref(), f, &def.to_string())
    };
    let backend = |name: &str, flag: &Option<String>, f: Option<&Scalar>| -> Result<BackendKind> {
        pick(name, flag.as_deref(), f, BackendKind::Trained.as_str())
    };
    let strategies = pick_list(
        "--strategy",
        flags.strategy.as_deref(),
        file.strategy.as_ref(),
        default_strategies,
        &Strategy::ALL,
    )?;
    let score_modes = pick_list(
        "--score",
        flags.score.as_deref(),
        file.score.as_ref(),
        default_scores,
        &ScoreMode::ALL,
    )?;
    let base = DecodingConfig {
        strategy: strategies[0],
        score_mode: score_modes[0],
        m: num("--m", flags.m, file.m.as_ref(), d.m)?,
        k: num("--k", flags.k, file.k.as_ref(), d.k)?,
        max_steps: num("--max-steps", flags.max_steps, file.max_steps.as_ref(), MAX_STEPS)?,
        carry: pick::<Carry>(
            "--carry",
            flags.carry.as_deref(),
            file.carry.as_ref(),
            Carry::Sum.as_str(),
        )?,
        backends: Backends {
            say: backend("--backend-say", &flags.backend_say, file.backend_say.as_ref())?,
            can: backend("--backend-can", &flags.backend_can, file.backend_can.as_ref())?,
            pay: backend("--backend-pay", &flags.backend_pay, file.backend_pay.as_ref())?,
        },
    };
    base.validate().map_err(|e| usage(e.to_string()))?;
    Ok(Decoding {
        base,
        strategies,
        score_modes,
    })
}

pub fn splits(flag: Option<&str>, file: &FileConfig, default: &str) -> Result<Vec<Split>> {
    pick_list(
        "--split",
        flag,
        file.split.as_ref(),
        default,
        &[Split::Test, Split::TestGeneralize],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let file: FileConfig = toml::from_str("m = 8\nk = 2\nscore = \"say,saycan\"").unwrap();
        let flags = DecodeFlags {
            k: Some(1),
            ..DecodeFlags::default()
        };
        let d = decoding(&flags, &file, "beam-action", "saycanpay").unwrap();
        assert_eq!(d.base.m, 8);
        assert_eq!(d.base.k, 1);
        assert_eq!(d.base.max_steps, MAX_STEPS);
        assert_eq!(d.score_modes, [ScoreMode::Say, ScoreMode::SayCan]);
    }

    #[test]
    fn lists_and_all() {
        let file = FileConfig::default();
        assert_eq!(
            envs(Some("hanoi, blocks,hanoi"), &file).unwrap(),
            [EnvId::Hanoi, EnvId::Blocks]
        );
        assert_eq!(envs(None, &file).unwrap(), EnvId::ALL);
        let file: FileConfig = toml::from_str("seed = [0, 1, 2]").unwrap();
        assert_eq!(seeds(None, &file).unwrap(), [0, 1, 2]);
        assert!(envs(Some("mars"), &file)
            .unwrap_err()
            .downcast_ref::<UsageError>()
            .is_some());
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        assert!(toml::from_str::<FileConfig>("beams = 3").is_err());
    }

    #[test]
    fn invalid_combination_is_a_usage_error() {
        let flags = DecodeFlags {
            m: Some(2),
            k: Some(3),
            ..DecodeFlags::default()
        };
        let err = decoding(&flags, &FileConfig::default(), "beam-action", "say")
            .err()
            .unwrap();
        assert!(err.downcast_ref::<UsageError>().is_some());
        let err = train_config(
            &TrainFlags {
                delta: Some(1.5),
                ..TrainFlags::default()
            },
            0,
            &FileConfig::default(),
        )
        .err()
        .unwrap();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }
}
