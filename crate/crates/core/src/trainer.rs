//! Seeded minibatch training for regression and Bradley-Terry reward models.
//!
//! Every run is a pure function of (config, corpus, initial parameters):
//! epoch shuffles depend only on `(seed, epoch)` and gradients are summed in
//! minibatch order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{loss_regression_mse, BtVariant};
use crate::optim::{Optimizer, OptimizerKind};
use crate::prefdata::{AggregatedPreference, AnnotationTask, Chosen, Split};
use crate::rmcore::{HeadKind, RewardModelParams, ValPair, ATTRIBUTE_COUNT};
use crate::synth::TaskFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    RegressionAll,
    RegressionHelpfulness,
    BtRegular,
    BtMargin,
    BtScaled,
}

impl LossKind {
    pub fn bt_variant(self) -> Option<BtVariant> {
        match self {
            LossKind::BtRegular => Some(BtVariant::Regular),
            LossKind::BtMargin => Some(BtVariant::Margin),
            LossKind::BtScaled => Some(BtVariant::Scaled),
            _ => None,
        }
    }

    pub fn is_regression(self) -> bool {
        self.bt_variant().is_none()
    }

    /// Output width of a model trained with this loss.
    pub fn output_dim(self) -> usize {
        if self == LossKind::RegressionAll {
            ATTRIBUTE_COUNT
        } else {
            1
        }
    }

    pub fn head_kind(self) -> HeadKind {
        if self.is_regression() {
            HeadKind::Regression
        } else {
            HeadKind::BradleyTerry
        }
    }
}

fn default_learning_rate() -> f64 {
    1e-3
}
fn default_batch_size() -> usize {
    16
}
fn default_epochs() -> usize {
    1
}
fn default_checkpoint_every() -> u64 {
    20
}
fn default_warmup_steps() -> u64 {
    10
}
fn default_hidden_dim() -> usize {
    crate::rmcore::DEFAULT_HIDDEN_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub loss_kind: LossKind,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
    #[serde(default = "default_warmup_steps")]
    pub warmup_steps: u64,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
}

impl TrainConfig {
    pub fn new(loss_kind: LossKind) -> Self {
        Self {
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            seed: 0,
            optimizer: OptimizerKind::default(),
            loss_kind,
            checkpoint_every: default_checkpoint_every(),
            warmup_steps: default_warmup_steps(),
            hidden_dim: default_hidden_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be > 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be >= 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionExample {
    pub features: Vec<f64>,
    /// Five attribute targets, or just helpfulness.
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExample {
    pub chosen: Vec<f64>,
    pub rejected: Vec<f64>,
    #[serde(alias = "m")]
    pub margin: f64,
}

impl PairExample {
    pub fn mirrored(&self) -> Self {
        Self { chosen: self.rejected.clone(), rejected: self.chosen.clone(), margin: self.margin }
    }

    pub fn to_val_pair(&self) -> ValPair {
        ValPair { chosen: self.chosen.clone(), rejected: self.rejected.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainCheckpoint {
    pub step: u64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub params: RewardModelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub params: RewardModelParams,
    pub checkpoints: Vec<TrainCheckpoint>,
    /// Index into `checkpoints` of the lowest validation loss, if validated.
    pub best_val: Option<usize>,
    pub steps: u64,
}

impl TrainOutput {
    pub fn trace(&self) -> Vec<TraceRow> {
        self.checkpoints
            .iter()
            .map(|c| TraceRow { step: c.step, train_loss: c.train_loss, val_loss: c.val_loss })
            .collect()
    }

    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace())
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("step,train_loss,val_loss\n");
    for r in rows {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", r.step, r.train_loss, val);
    }
    out
}

/// Permutation of `0..n` for one epoch; depends only on `(seed, epoch)`.
pub fn epoch_permutation(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

fn check_finite(value: f64, what: &str, step: u64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} is {value} at step {step}")))
    }
}

fn regression_target(kind: LossKind, ex: &RegressionExample) -> Result<&[f64]> {
    match (kind, ex.targets.len()) {
        (LossKind::RegressionAll, ATTRIBUTE_COUNT) => Ok(&ex.targets),
        (LossKind::RegressionHelpfulness, 1 | ATTRIBUTE_COUNT) => Ok(&ex.targets[..1]),
        (_, n) => Err(Error::LengthMismatch { expected: kind.output_dim(), actual: n }),
    }
}

/// Mean MSE over a regression set.
pub fn regression_loss(
    params: &RewardModelParams,
    kind: LossKind,
    examples: &[RegressionExample],
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("regression set is empty".into()));
    }
    let mut total = 0.0;
    for ex in examples {
        let pred = params.predict(&ex.features)?;
        total += loss_regression_mse(&pred, regression_target(kind, ex)?)?.0;
    }
    Ok(total / examples.len() as f64)
}

/// Mean pairwise loss over a pair set.
pub fn bt_loss(params: &RewardModelParams, variant: BtVariant, pairs: &[PairExample]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pair set is empty".into()));
    }
    let mut total = 0.0;
    for p in pairs {
        let delta = params.score(&p.chosen)? - params.score(&p.rejected)?;
        total += variant.eval(delta, p.margin).loss;
    }
    Ok(total / pairs.len() as f64)
}

/// Loss and gradient of one pair, accumulated into `grads` with weight `scale`.
pub fn bt_pair_grad(
    params: &RewardModelParams,
    variant: BtVariant,
    pair: &PairExample,
    scale: f64,
    grads: &mut [f64],
) -> Result<f64> {
    let (c, cache_c) = params.forward(&pair.chosen)?;
    let (r, cache_r) = params.forward(&pair.rejected)?;
    let lg = variant.eval(c[0] - r[0], pair.margin);
    params.backward_into(&cache_c, &[lg.dloss_ddelta], scale, grads)?;
    params.backward_into(&cache_r, &[-lg.dloss_ddelta], scale, grads)?;
    Ok(lg.loss)
}

/// Shared minibatch loop. `batch_grad` returns the summed loss of a batch and
/// accumulates the mean gradient.
fn run<F, V>(
    config: &TrainConfig,
    n: usize,
    mut params: RewardModelParams,
    batch_grad: F,
    val_loss: V,
) -> Result<TrainOutput>
where
    F: Fn(&RewardModelParams, &[usize], &mut [f64]) -> Result<f64>,
    V: Fn(&RewardModelParams) -> Result<Option<f64>>,
{
    config.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput("training corpus is empty".into()));
    }
    let mut opt =
        Optimizer::new(config.optimizer, config.learning_rate, config.warmup_steps, params.n_params());
    let mut checkpoints = Vec::new();
    let mut grads = vec![0.0; params.n_params()];
    let (mut interval_loss, mut interval_count) = (0.0, 0usize);
    let mut step = 0u64;
    let batches_per_epoch = n.div_ceil(config.batch_size) as u64;
    let total_steps = batches_per_epoch * config.epochs as u64;

    for epoch in 0..config.epochs as u64 {
        let perm = epoch_permutation(config.seed, epoch, n);
        for batch in perm.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let loss = batch_grad(&params, batch, &mut grads)? / batch.len() as f64;
            check_finite(loss, "training loss", step)?;
            if let Some(g) = grads.iter().find(|g| !g.is_finite()) {
                check_finite(*g, "gradient", step)?;
            }
            opt.step(params.values_mut(), &grads);
            step += 1;
            interval_loss += loss;
            interval_count += 1;

            if step.is_multiple_of(config.checkpoint_every) || step == total_steps {
                let val = val_loss(&params)?;
                if let Some(v) = val {
                    check_finite(v, "validation loss", step)?;
                }
                checkpoints.push(TrainCheckpoint {
                    step,
                    train_loss: interval_loss / interval_count as f64,
                    val_loss: val,
                    params: params.clone(),
                });
                interval_loss = 0.0;
                interval_count = 0;
            }
        }
    }

    let best_val = checkpoints
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.val_loss.map(|v| (i, v)))
        .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, bv)) if bv <= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i);

    Ok(TrainOutput { params, checkpoints, best_val, steps: step })
}

fn check_model(config: &TrainConfig, params: &RewardModelParams) -> Result<()> {
    if params.output_dim() != config.loss_kind.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} needs {} outputs, model has {}",
            config.loss_kind,
            config.loss_kind.output_dim(),
            params.output_dim()
        )));
    }
    Ok(())
}

pub fn train_regression(
    config: &TrainConfig,
    train: &[RegressionExample],
    val: Option<&[RegressionExample]>,
    params: RewardModelParams,
) -> Result<TrainOutput> {
    let kind = config.loss_kind;
    if !kind.is_regression() {
        return Err(Error::Config(format!("{kind:?} is not a regression loss")));
    }
    check_model(config, &params)?;
    for ex in train.iter().chain(val.unwrap_or_default()) {
        regression_target(kind, ex)?;
    }
    let batch_grad = |p: &RewardModelParams, batch: &[usize], grads: &mut [f64]| {
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for &i in batch {
            let ex = &train[i];
            let (pred, cache) = p.forward(&ex.features)?;
            let (loss, upstream) = loss_regression_mse(&pred, regression_target(kind, ex)?)?;
            p.backward_into(&cache, &upstream, scale, grads)?;
            total += loss;
        }
        Ok(total)
    };
    let val_loss = |p: &RewardModelParams| match val {
        Some(v) if !v.is_empty() => regression_loss(p, kind, v).map(Some),
        _ => Ok(None),
    };
    run(config, train.len(), params, batch_grad, val_loss)
}

pub fn train_bt(
    config: &TrainConfig,
    train: &[PairExample],
    val: Option<&[PairExample]>,
    params: RewardModelParams,
) -> Result<TrainOutput> {
    let variant = config
        .loss_kind
        .bt_variant()
        .ok_or_else(|| Error::Config(format!("{:?} is not a pairwise loss", config.loss_kind)))?;
    check_model(config, &params)?;
    if let Some(p) = train.iter().find(|p| !p.margin.is_finite()) {
        return Err(Error::InvalidValue(format!("pair margin {}", p.margin)));
    }
    let batch_grad = |p: &RewardModelParams, batch: &[usize], grads: &mut [f64]| {
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for &i in batch {
            total += bt_pair_grad(p, variant, &train[i], scale, grads)?;
        }
        Ok(total)
    };
    let val_loss = |p: &RewardModelParams| match val {
        Some(v) if !v.is_empty() => bt_loss(p, variant, v).map(Some),
        _ => Ok(None),
    };
    run(config, train.len(), params, batch_grad, val_loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSelection {
    /// Candidate indices in trace order.
    pub candidates: Vec<usize>,
    pub chosen: usize,
    pub metric: f64,
}

/// Picks among the `k` lowest-validation-loss checkpoints plus the last one
/// by the highest downstream `metric`. Metric ties go to the lower
/// validation loss, then the earlier checkpoint.
pub fn select_checkpoint<F>(
    checkpoints: &[TrainCheckpoint],
    k: usize,
    metric: F,
) -> Result<CheckpointSelection>
where
    F: Fn(&TrainCheckpoint) -> Result<f64>,
{
    if checkpoints.is_empty() {
        return Err(Error::EmptyInput("no checkpoints to select from".into()));
    }
    let mut by_val: Vec<(usize, f64)> =
        checkpoints.iter().enumerate().filter_map(|(i, c)| c.val_loss.map(|v| (i, v))).collect();
    by_val.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut candidates: Vec<usize> = by_val.iter().take(k).map(|(i, _)| *i).collect();
    candidates.push(checkpoints.len() - 1);
    candidates.sort_unstable();
    candidates.dedup();

    let mut best: Option<(usize, f64)> = None;
    for &i in &candidates {
        let m = metric(&checkpoints[i])?;
        let better = match best {
            None => true,
            Some((bi, bm)) => {
                let (vi, vb) = (checkpoints[i].val_loss, checkpoints[bi].val_loss);
                m > bm || (m == bm && matches!((vi, vb), (Some(a), Some(b)) if a < b))
            }
        };
        if better {
            best = Some((i, m));
        }
    }
    let (chosen, metric) = best.expect("at least one candidate");
    Ok(CheckpointSelection { candidates, chosen, metric })
}

fn feature_index(features: &[TaskFeatures]) -> HashMap<&str, &TaskFeatures> {
    features.iter().map(|f| (f.task_id.as_str(), f)).collect()
}

fn missing_features(task_id: &str) -> Error {
    Error::InvalidValue(format!("no features for task {task_id}"))
}

/// Two regression examples per task (one per response) with targets equal to
/// the mean attribute ratings over annotators. Tasks outside `split` are
/// skipped when a split is given.
pub fn build_regression_examples(
    tasks: &[AnnotationTask],
    features: &[TaskFeatures],
    split: Option<Split>,
) -> Result<Vec<RegressionExample>> {
    let index = feature_index(features);
    let mut out = Vec::new();
    for task in tasks.iter().filter(|t| split.is_none_or(|s| t.split == s)) {
        let f = index.get(task.task_id.as_str()).ok_or_else(|| missing_features(&task.task_id))?;
        let n = task.annotations.len() as f64;
        let mut t1 = vec![0.0; ATTRIBUTE_COUNT];
        let mut t2 = vec![0.0; ATTRIBUTE_COUNT];
        for a in &task.annotations {
            for (k, (r1, r2)) in a.ratings_1.as_array().iter().zip(a.ratings_2.as_array()).enumerate() {
                t1[k] += *r1 as f64 / n;
                t2[k] += r2 as f64 / n;
            }
        }
        out.push(RegressionExample { features: f.features_1.clone(), targets: t1 });
        out.push(RegressionExample { features: f.features_2.clone(), targets: t2 });
    }
    Ok(out)
}

/// Preference pairs from kept aggregates, with the magnitude as margin.
pub fn build_pair_examples(
    tasks: &[AnnotationTask],
    aggregates: &[AggregatedPreference],
    features: &[TaskFeatures],
    split: Option<Split>,
) -> Result<Vec<PairExample>> {
    let index = feature_index(features);
    let splits: HashMap<&str, Split> = tasks.iter().map(|t| (t.task_id.as_str(), t.split)).collect();
    let mut out = Vec::new();
    for agg in aggregates.iter().filter(|a| a.is_kept()) {
        if let Some(s) = split {
            if splits.get(agg.task_id.as_str()) != Some(&s) {
                continue;
            }
        }
        let f = index.get(agg.task_id.as_str()).ok_or_else(|| missing_features(&agg.task_id))?;
        let (chosen, rejected) = match agg.chosen {
            Chosen::Response1 => (&f.features_1, &f.features_2),
            Chosen::Response2 => (&f.features_2, &f.features_1),
            Chosen::None => continue,
        };
        out.push(PairExample {
            chosen: chosen.clone(),
            rejected: rejected.clone(),
            margin: agg.magnitude.unwrap_or(1) as f64,
        });
    }
    Ok(out)
}
