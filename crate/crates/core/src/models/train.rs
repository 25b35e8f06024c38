use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{action_features, context_features, FeatureVector, FEATURE_DIM};
use super::linear::{LinearScorer, ModelKind};
use super::loss::{infonce_loss, mse_loss, sigmoid, softmax, softmax_cross_entropy};
use super::say::SayPolicy;
use crate::envs::{mix_seed, EnvId};
use crate::error::{Error, Result};
use crate::oracle::{make_can_samples, make_pay_samples, Trajectory, DEFAULT_DELTA};

/// Optimizer and data settings for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub delta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            weight_decay: 1e-5,
            batch: 50,
            epochs: 20,
            seed: 0,
            val_fraction: 0.2,
            delta: DEFAULT_DELTA,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.weight_decay >= 0.0
            && self.batch >= 1
            && self.epochs >= 1
            && self.val_fraction > 0.0
            && self.val_fraction < 1.0
            && self.delta > 0.0
            && self.delta < 1.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!("invalid training config {self:?}")))
        }
    }
}

/// Training settings plus what came out of the run; stored with the model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    #[serde(flatten)]
    pub config: Option<TrainConfig>,
    pub epoch_losses: Vec<f64>,
    pub train_samples: usize,
    pub val_samples: usize,
    pub metrics: BTreeMap<String, f64>,
    /// Scores ignore the candidate-independent context features.
    #[serde(default)]
    pub candidate_only: bool,
}

/// Adam with decoupled weight decay over a dense parameter vector.
#[derive(Clone, Debug)]
pub struct AdamW {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(config: &TrainConfig, n: usize) -> Self {
        Self {
            lr: config.lr,
            weight_decay: config.weight_decay,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

/// Splits trajectory indices into (train, validation) by a seeded shuffle.
pub fn split_trajectories(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::contract("need at least two trajectories to train and validate"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5b1)));
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    Ok((idx, val))
}

fn check_env(trajectories: &[Trajectory]) -> Result<EnvId> {
    let env = trajectories
        .first()
        .ok_or_else(|| Error::contract("empty training set"))?
        .episode
        .env();
    if let Some(t) = trajectories.iter().find(|t| t.episode.env() != env) {
        return Err(Error::EnvMismatch {
            model: env.to_string(),
            episode: t.episode.env().to_string(),
        });
    }
    Ok(env)
}

/// Linear example: shared context plus one or more candidate parts.
struct Example {
    context: FeatureVector,
    candidates: Vec<FeatureVector>,
    target: Target,
}

enum Target {
    /// InfoNCE with candidate 0 as the positive.
    Contrast,
    Regress(f64),
    Class(usize),
}

struct Params {
    w: Vec<f64>,
}

impl Params {
    fn logit(&self, ex: &Example, c: usize) -> f64 {
        ex.context.dot(&self.w) + ex.candidates[c].dot(&self.w) + self.w[FEATURE_DIM]
    }

    fn say_logits(&self, ex: &Example) -> Vec<f64> {
        ex.candidates.iter().map(|f| f.dot(&self.w)).collect()
    }

    /// Loss for one example, adding its gradient times `scale` into `grad`.
    fn loss_grad(&self, ex: &Example, grad: Option<(&mut [f64], f64)>) -> Result<f64> {
        let (loss, dz, with_context): (f64, Vec<f64>, bool) = match ex.target {
            Target::Contrast => {
                let s: Vec<f64> = (0..ex.candidates.len()).map(|c| sigmoid(self.logit(ex, c))).collect();
                let (loss, ds) = infonce_loss(s[0].max(f64::MIN_POSITIVE), &clamp_pos(&s[1..]))?;
                let dz: Vec<f64> = ds.iter().zip(&s).map(|(d, s)| d * s * (1.0 - s)).collect();
                (loss, dz, true)
            }
            Target::Regress(t) => {
                let p = sigmoid(self.logit(ex, 0));
                let (loss, dp) = mse_loss(p, t);
                (loss, vec![dp * p * (1.0 - p)], true)
            }
            Target::Class(t) => {
                let (loss, dz) = softmax_cross_entropy(&self.say_logits(ex), t)?;
                (loss, dz, false)
            }
        };
        if let Some((grad, scale)) = grad {
            let (dense, bias) = grad.split_at_mut(FEATURE_DIM);
            for (c, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                ex.candidates[c].add_scaled_to(dense, d * scale);
                if with_context {
                    ex.context.add_scaled_to(dense, d * scale);
                    bias[0] += d * scale;
                }
            }
        }
        Ok(loss)
    }
}

fn clamp_pos(s: &[f64]) -> Vec<f64> {
    s.iter().map(|&x| x.max(f64::MIN_POSITIVE)).collect()
}

/// Minibatch AdamW over `train`; returns final parameters and per-epoch
/// mean losses.
fn fit(train: &[Example], config: &TrainConfig) -> Result<(Params, Vec<f64>)> {
    let n = FEATURE_DIM + 1;
    let mut params = Params { w: vec![0.0; n] };
    let mut opt = AdamW::new(config, n);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0xe90c));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; n];
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                batch_loss += params.loss_grad(&train[i], Some((&mut grad, scale)))?;
            }
            if !batch_loss.is_finite() {
                log::error!("non-finite loss at epoch {epoch}, batch {b}");
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: batch_loss,
                });
            }
            total += batch_loss;
            opt.step(&mut params.w, &grad);
        }
        let mean = total / train.len() as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok((params, epoch_losses))
}

fn mean_loss(params: &Params, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        total += params.loss_grad(ex, None)?;
    }
    Ok(total / examples.len().max(1) as f64)
}

fn into_scorer(kind: ModelKind, env: EnvId, params: Params, record: TrainRecord, val_metric: f64) -> LinearScorer {
    let mut m = LinearScorer::zeros(kind, env);
    m.bias = params.w[FEATURE_DIM];
    m.weights = params.w;
    m.weights.truncate(FEATURE_DIM);
    m.config = record;
    m.val_metric = val_metric;
    m
}

fn partition<T>(items: Vec<T>, key: impl Fn(&T) -> usize, val: &[usize]) -> (Vec<T>, Vec<T>) {
    items.into_iter().partition(|x| !val.contains(&key(x)))
}

/// Fits `sigmoid(a * z + b)` to binary labels: damped Newton steps on the
/// mean log-loss with a small ridge term, over standardized inputs.
pub fn platt_scale(points: &[(f64, bool)]) -> (f64, f64) {
    const RIDGE: f64 = 1e-4;
    if points.is_empty() {
        return (1.0, 0.0);
    }
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let sd = (points.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / n)
        .sqrt()
        .max(1e-12);
    let xs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(z, y)| ((z - mean) / sd, if y { 1.0 } else { 0.0 }))
        .collect();
    let objective = |a: f64, b: f64| {
        xs.iter()
            .map(|&(x, y)| {
                let z = a * x + b;
                // log(1 + e^z) - y z, computed stably
                z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
            })
            .sum::<f64>()
            / n
            + 0.5 * RIDGE * (a * a + b * b)
    };
    let (mut a, mut b) = (1.0, 0.0);
    let mut f = objective(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y) in &xs {
            let p = sigmoid(a * x + b);
            let w = p * (1.0 - p);
            ga += (p - y) * x;
            gb += p - y;
            haa += w * x * x;
            hab += w * x;
            hbb += w;
        }
        let (ga, gb) = (ga / n + RIDGE * a, gb / n + RIDGE * b);
        let (haa, hab, hbb) = (haa / n + RIDGE, hab / n, hbb / n + RIDGE);
        let det = haa * hbb - hab * hab;
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-10 {
            let (na, nb) = (a - step * da, b - step * db);
            let nf = objective(na, nb);
            if nf <= f {
                improved = f - nf > 1e-15;
                a = na;
                b = nb;
                f = nf;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (a / sd, b - a * mean / sd)
}

/// F1 over candidates where the predicted positive is the highest-scoring
/// candidate (ties to the lexicographically smaller text), provided its
/// score reaches 0.5. Candidate 0 of each row is the true positive.
pub fn contrastive_f1(rows: &[Vec<(f64, &str)>]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for s in rows {
        let best = (0..s.len()).fold(0, |b, i| {
            if s[i].0 > s[b].0 || (s[i].0 == s[b].0 && s[i].1 < s[b].1) {
                i
            } else {
                b
            }
        });
        let predicted = s[best].0 >= 0.5;
        match (predicted, best == 0) {
            (true, true) => tp += 1,
            (true, false) => {
                fp += 1;
                fn_ += 1;
            }
            (false, _) => fn_ += 1,
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

fn record(config: &TrainConfig, epoch_losses: Vec<f64>, n_train: usize, n_val: usize) -> TrainRecord {
    TrainRecord {
        config: Some(config.clone()),
        epoch_losses,
        train_samples: n_train,
        val_samples: n_val,
        metrics: BTreeMap::new(),
        candidate_only: false,
    }
}

/// Whether each of (positive, same-trajectory negative, cross-trajectory
/// negative) is executable after the sample's history.
fn feasibility_labels(traj: &Trajectory, s: &crate::oracle::CanSample) -> [bool; 3] {
    let Some(state) = crate::oracle::replay_history(&traj.episode, &s.history) else {
        return [false; 3];
    };
    [&s.positive, &s.neg_same, &s.neg_cross].map(|a| state.precondition_holds(&s.goal, a).unwrap_or(false))
}

/// Trains the feasibility scorer with InfoNCE over candidate-dependent
/// features, then maps its logits to feasibility probabilities by Platt
/// scaling against simulator labels on the training split. The ranking is
/// unchanged by the calibration; the validation metric is F1.
pub fn train_can(trajectories: &[Trajectory], config: &TrainConfig) -> Result<LinearScorer> {
    config.validate()?;
    let env = check_env(trajectories)?;
    let (_, val) = split_trajectories(trajectories.len(), config.val_fraction, config.seed)?;
    let samples = make_can_samples(trajectories, config.seed)?;
    let (train_s, val_s) = partition(samples, |s| s.trajectory, &val);
    let featurize = |s: &crate::oracle::CanSample| {
        let seed = super::features::HASH_SEED;
        Example {
            context: FeatureVector::default(),
            candidates: [&s.positive, &s.neg_same, &s.neg_cross]
                .map(|a| action_features(seed, &s.goal, &s.history, a))
                .to_vec(),
            target: Target::Contrast,
        }
    };
    let train: Vec<Example> = train_s.par_iter().map(featurize).collect();
    let valid: Vec<Example> = val_s.par_iter().map(featurize).collect();
    let (mut params, losses) = fit(&train, config)?;
    let points: Vec<(f64, bool)> = train
        .par_iter()
        .zip(&train_s)
        .flat_map_iter(|(ex, s)| {
            let labels = feasibility_labels(&trajectories[s.trajectory], s);
            (0..3).map(|c| (params.logit(ex, c), labels[c])).collect::<Vec<_>>()
        })
        .collect();
    let (a, b) = platt_scale(&points);
    params.w.iter_mut().for_each(|w| *w *= a);
    params.w[FEATURE_DIM] += b;
    let rows: Vec<Vec<(f64, &str)>> = valid
        .iter()
        .zip(&val_s)
        .map(|(ex, s)| {
            let texts = [&s.positive.text, &s.neg_same.text, &s.neg_cross.text];
            (0..3)
                .map(|c| (sigmoid(params.logit(ex, c)), texts[c].as_str()))
                .collect()
        })
        .collect();
    let f1 = contrastive_f1(&rows);
    let mut rec = record(config, losses, train.len(), valid.len());
    rec.candidate_only = true;
    rec.metrics.insert("val_f1".into(), f1);
    rec.metrics.insert("platt_a".into(), a);
    rec.metrics.insert("platt_b".into(), b);
    rec.metrics.insert("val_loss".into(), mean_loss(&params, &valid)?);
    let top1 = rows
        .iter()
        .filter(|r| r[1..].iter().all(|n| r[0].0 > n.0 || (r[0].0 == n.0 && r[0].1 < n.1)))
        .count() as f64
        / rows.len().max(1) as f64;
    rec.metrics.insert("val_top1".into(), top1);
    rec.metrics.insert(
        "val_mean_pos".into(),
        rows.iter().map(|r| r[0].0).sum::<f64>() / rows.len().max(1) as f64,
    );
    log::info!("{env} can: validation F1 {f1:.4}");
    Ok(into_scorer(ModelKind::Can, env, params, rec, f1))
}

/// Trains the payoff regressor with MSE; the validation metric is MSE.
pub fn train_pay(trajectories: &[Trajectory], config: &TrainConfig) -> Result<LinearScorer> {
    config.validate()?;
    let env = check_env(trajectories)?;
    let (_, val) = split_trajectories(trajectories.len(), config.val_fraction, config.seed)?;
    let samples = make_pay_samples(trajectories, config.delta, config.seed)?;
    let (train_s, val_s) = partition(samples, |s| s.trajectory, &val);
    let featurize = |s: &crate::oracle::PaySample| {
        let seed = super::features::HASH_SEED;
        Example {
            context: context_features(seed, &s.goal, &s.history),
            candidates: vec![action_features(seed, &s.goal, &s.history, &s.action)],
            target: Target::Regress(s.target),
        }
    };
    let train: Vec<Example> = train_s.par_iter().map(featurize).collect();
    let valid: Vec<Example> = val_s.par_iter().map(featurize).collect();
    let (params, losses) = fit(&train, config)?;
    let mse = mean_loss(&params, &valid)?;
    let mut rec = record(config, losses, train.len(), valid.len());
    rec.metrics.insert("val_mse".into(), mse);
    log::info!("{env} pay: validation MSE {mse:.5}");
    Ok(into_scorer(ModelKind::Pay, env, params, rec, mse))
}

/// Trains the proposal policy with softmax cross-entropy over the episode
/// vocabulary; the validation metric is mean negative log-likelihood.
pub fn train_say(trajectories: &[Trajectory], config: &TrainConfig) -> Result<SayPolicy> {
    config.validate()?;
    let env = check_env(trajectories)?;
    let (_, val) = split_trajectories(trajectories.len(), config.val_fraction, config.seed)?;
    let steps: Vec<(usize, usize)> = trajectories
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len()).map(move |s| (i, s)))
        .collect();
    let featurize = |&(i, s): &(usize, usize)| -> Result<(usize, Example)> {
        let traj = &trajectories[i];
        let seed = super::features::HASH_SEED;
        let history = traj.history_before(s);
        let vocab = traj.episode.vocabulary();
        let target = vocab
            .iter()
            .position(|a| a == &traj.actions[s])
            .ok_or_else(|| Error::contract(format!("{}: expert action outside vocabulary", traj.episode_id)))?;
        let candidates = vocab
            .iter()
            .map(|a| action_features(seed, &traj.episode.goal, &history, a))
            .collect();
        Ok((
            i,
            Example {
                context: FeatureVector::default(),
                candidates,
                target: Target::Class(target),
            },
        ))
    };
    let all: Vec<(usize, Example)> = steps.par_iter().map(featurize).collect::<Result<_>>()?;
    let (train, valid): (Vec<_>, Vec<_>) = partition(all, |x| x.0, &val);
    let train: Vec<Example> = train.into_iter().map(|x| x.1).collect();
    let valid: Vec<Example> = valid.into_iter().map(|x| x.1).collect();
    let (params, losses) = fit(&train, config)?;
    let nll = mean_loss(&params, &valid)?;
    let top6 = valid
        .iter()
        .filter(|ex| {
            let Target::Class(t) = ex.target else {
                return false;
            };
            let p = softmax(&params.say_logits(ex));
            p.iter().filter(|&&q| q > p[t]).count() < 6
        })
        .count() as f64
        / valid.len().max(1) as f64;
    let mut rec = record(config, losses, train.len(), valid.len());
    rec.metrics.insert("val_nll".into(), nll);
    rec.metrics.insert("val_top6".into(), top6);
    log::info!("{env} say: validation NLL {nll:.4}, top-6 {top6:.3}");
    Ok(SayPolicy::new(into_scorer(ModelKind::Say, env, params, rec, nll)))
}
