//! `scp`: generate oracle data, train the scorers, plan, and evaluate.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use scp_core::envs::Split;
use scp_core::eval::{AblationKind, Grid};
use scp_core::models::{ExternalSay, ModelKind};
use scp_core::oracle::DEFAULT_DELTA;

use settings::{usage, DecodeFlags, FileConfig, TrainFlags, UsageError};

#[derive(Debug, Parser)]
#[command(
    name = "scp",
    version,
    about = "Plan with Say, Can and Pay scorers over text environments"
)]
struct Cli {
    /// TOML file with defaults for any flag (keys use `_` instead of `-`)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train / test / test-generalize oracle trajectories
    GenData(GenDataArgs),
    /// Train the Say, Can and Pay models
    Train(TrainArgs),
    /// Plan one episode and print per-step scores
    Plan(PlanArgs),
    /// Evaluate the strategy x score grid
    Eval(EvalArgs),
    /// Beam-size or perfect-Say ablation
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Environment(s): hanoi, blocks, gridworld, comma list or `all` [default: all]
    #[arg(long)]
    env: Option<String>,
    /// Run seed; `eval` and `ablate` accept a comma list [default: 0]
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads [default: available cores]
    #[arg(long)]
    jobs: Option<usize>,
    /// Data directory [default: $SCP_DATA_DIR, else `data`]
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// greedy-token, greedy-action or beam-action (`eval`: comma list or `all`) [default: beam-action; eval: greedy-action,beam-action]
    #[arg(long)]
    strategy: Option<String>,
    /// say, saycan or saycanpay (`eval`: comma list or `all`) [default: saycanpay; eval: all]
    #[arg(long)]
    score: Option<String>,
    /// Candidates per expansion [default: 6]
    #[arg(long)]
    m: Option<usize>,
    /// Beams kept, at most m [default: 3]
    #[arg(long)]
    k: Option<usize>,
    /// Step limit per plan [default: 20]
    #[arg(long)]
    max_steps: Option<usize>,
    /// Beam score carried between steps: sum or normalized [default: sum]
    #[arg(long)]
    carry: Option<String>,
    /// Payoff discount of the oracle Pay backend [default: 0.6]
    #[arg(long)]
    delta: Option<f64>,
    /// Say backend: trained, uniform, perfect-say or external [default: trained]
    #[arg(long)]
    backend_say: Option<String>,
    /// Can backend: trained or oracle [default: trained]
    #[arg(long)]
    backend_can: Option<String>,
    /// Pay backend: trained or oracle [default: trained]
    #[arg(long)]
    backend_pay: Option<String>,
    /// host:port of an external Say adapter (NDJSON over TCP)
    #[arg(long)]
    adapter_endpoint: Option<String>,
    /// Directory of trained models [default: `models`]
    #[arg(long)]
    model_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[command(flatten)]
    common: Common,
    /// Train episodes per env [default: 400]
    #[arg(long)]
    train: Option<usize>,
    /// Test episodes per env [default: 100]
    #[arg(long)]
    test: Option<usize>,
    /// Test-generalize episodes per env [default: 100]
    #[arg(long)]
    gen: Option<usize>,
    /// Output directory [default: the data directory]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Which models: say, can, pay, comma list or `all` [default: all]
    #[arg(long)]
    model: Option<String>,
    /// Payoff discount for Pay targets [default: 0.6]
    #[arg(long)]
    delta: Option<f64>,
    /// AdamW learning rate [default: 0.01]
    #[arg(long)]
    lr: Option<f64>,
    /// AdamW weight decay [default: 1e-5]
    #[arg(long)]
    wd: Option<f64>,
    /// Batch size [default: 50]
    #[arg(long)]
    batch: Option<usize>,
    /// Epochs [default: 20]
    #[arg(long)]
    epochs: Option<usize>,
    /// Model output directory [default: `models`]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    decode: DecodeArgs,
    /// Split the episode is drawn from [default: test]
    #[arg(long)]
    split: Option<String>,
    /// Episode id from the data directory; otherwise a fresh episode is drawn from --seed
    #[arg(long)]
    episode: Option<String>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    decode: DecodeArgs,
    /// test, test-generalize, comma list or `all` [default: all]
    #[arg(long)]
    split: Option<String>,
    /// Report directory [default: `reports`]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-episode results as JSONL
    #[arg(long)]
    dump_episodes: bool,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// beam-size or perfect-say
    kind: String,
    #[command(flatten)]
    eval: EvalArgs,
}

impl DecodeArgs {
    fn flags(&self) -> DecodeFlags {
        DecodeFlags {
            strategy: self.strategy.clone(),
            score: self.score.clone(),
            m: self.m,
            k: self.k,
            max_steps: self.max_steps,
            carry: self.carry.clone(),
            backend_say: self.backend_say.clone(),
            backend_can: self.backend_can.clone(),
            backend_pay: self.backend_pay.clone(),
        }
    }

    fn delta(&self, file: &FileConfig) -> Result<f64> {
        let d: f64 = settings::pick(
            "--delta",
            self.delta.map(|v| v.to_string()).as_deref(),
            file.delta.as_ref(),
            &DEFAULT_DELTA.to_string(),
        )?;
        if !(d > 0.0 && d < 1.0) {
            return Err(usage(format!("--delta {d} is outside (0, 1)")));
        }
        Ok(d)
    }

    fn adapter(&self, file: &FileConfig) -> Option<ExternalSay> {
        self.adapter_endpoint
            .clone()
            .or_else(|| file.adapter_endpoint.as_ref().map(|s| s.to_string()))
            .map(ExternalSay::new)
    }
}

fn single<T: Copy>(name: &str, values: &[T]) -> Result<T> {
    match values {
        [v] => Ok(*v),
        _ => Err(usage(format!("{name} takes a single value for this command"))),
    }
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(f)
}

fn eval_request<'a>(
    args: &EvalArgs,
    file: &FileConfig,
    strategies_default: &str,
    scores_default: &str,
    dirs: &'a (PathBuf, PathBuf, PathBuf),
) -> Result<commands::EvalRequest<'a>> {
    let d = settings::decoding(&args.decode.flags(), file, strategies_default, scores_default)?;
    let grid = Grid {
        envs: settings::envs(args.common.env.as_deref(), file)?,
        splits: settings::splits(args.split.as_deref(), file, "all")?,
        strategies: d.strategies,
        score_modes: d.score_modes,
        base: d.base,
        seeds: settings::seeds(args.common.seed.as_deref(), file)?,
    };
    Ok(commands::EvalRequest {
        grid,
        delta: args.decode.delta(file)?,
        data_dir: &dirs.0,
        model_dir: &dirs.1,
        adapter: args.decode.adapter(file),
        out: &dirs.2,
        dump_episodes: args.dump_episodes,
    })
}

fn eval_dirs(args: &EvalArgs, file: &FileConfig) -> (PathBuf, PathBuf, PathBuf) {
    (
        settings::data_dir(args.common.data_dir.as_deref(), file),
        settings::model_dir(args.decode.model_dir.as_deref(), file),
        settings::report_dir(args.out.as_deref(), file),
    )
}

fn run(cli: Cli) -> Result<String> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::GenData(a) => {
            let envs = settings::envs(a.common.env.as_deref(), &file)?;
            let seed = single("--seed", &settings::seeds(a.common.seed.as_deref(), &file)?)?;
            let counts = settings::split_counts(a.train, a.test, a.gen, &file)?;
            if counts.train == 0 || counts.test == 0 || counts.gen == 0 {
                return Err(usage("--train, --test and --gen must be at least 1"));
            }
            let out = a
                .out
                .clone()
                .unwrap_or_else(|| settings::data_dir(a.common.data_dir.as_deref(), &file));
            let jobs = settings::jobs(a.common.jobs, &file)?;
            with_jobs(jobs, || commands::gen_data(&envs, counts, seed, &out))
        }
        Command::Train(a) => {
            let envs = settings::envs(a.common.env.as_deref(), &file)?;
            let seed = single("--seed", &settings::seeds(a.common.seed.as_deref(), &file)?)?;
            let kinds = settings::pick_list(
                "--model",
                a.model.as_deref(),
                None,
                "all",
                &[ModelKind::Say, ModelKind::Can, ModelKind::Pay],
            )?;
            let flags = TrainFlags {
                delta: a.delta,
                lr: a.lr,
                wd: a.wd,
                batch: a.batch,
                epochs: a.epochs,
            };
            let config = settings::train_config(&flags, seed, &file)?;
            let data_dir = settings::data_dir(a.common.data_dir.as_deref(), &file);
            let out = settings::model_dir(a.out.as_deref(), &file);
            let jobs = settings::jobs(a.common.jobs, &file)?;
            with_jobs(jobs, || commands::train(&envs, &kinds, &config, &data_dir, &out))
        }
        Command::Plan(a) => {
            let env = single("--env", &settings::envs(a.common.env.as_deref(), &file)?)?;
            let seed = single("--seed", &settings::seeds(a.common.seed.as_deref(), &file)?)?;
            let split: Split = single("--split", &settings::splits(a.split.as_deref(), &file, "test")?)?;
            let d = settings::decoding(&a.decode.flags(), &file, "beam-action", "saycanpay")?;
            if d.strategies.len() > 1 || d.score_modes.len() > 1 {
                return Err(usage("plan takes a single --strategy and --score"));
            }
            let data_dir = settings::data_dir(a.common.data_dir.as_deref(), &file);
            let model_dir = settings::model_dir(a.decode.model_dir.as_deref(), &file);
            commands::plan(commands::PlanRequest {
                env,
                split,
                seed,
                episode: a.episode.as_deref(),
                config: d.base,
                delta: a.decode.delta(&file)?,
                data_dir: &data_dir,
                model_dir: &model_dir,
                adapter: a.decode.adapter(&file),
            })
        }
        Command::Eval(a) => {
            let dirs = eval_dirs(&a, &file);
            let req = eval_request(&a, &file, "greedy-action,beam-action", "all", &dirs)?;
            let jobs = settings::jobs(a.common.jobs, &file)?;
            with_jobs(jobs, || commands::eval(req, None))
        }
        Command::Ablate(a) => {
            let kind: AblationKind = a.kind.parse().map_err(|e: scp_core::Error| usage(e.to_string()))?;
            let dirs = eval_dirs(&a.eval, &file);
            let req = eval_request(&a.eval, &file, "beam-action", "saycanpay", &dirs)?;
            let jobs = settings::jobs(a.eval.common.jobs, &file)?;
            with_jobs(jobs, || commands::eval(req, Some(kind)))
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
