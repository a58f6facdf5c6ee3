//! Tabular-policy alignment simulator.
//!
//! A [`PolicyTable`] holds one softmax distribution over responses per
//! context plus a frozen reference copy. On top of it: DPO with the three
//! Bradley-Terry variants, and REINFORCE with a leave-one-out baseline and a
//! KL-regularized reward.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::BtVariant;
use crate::optim::{Optimizer, OptimizerKind};
use crate::trainer::epoch_permutation;

pub type DpoVariant = BtVariant;

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

fn softmax(row: &[f64]) -> Vec<f64> {
    log_softmax(row).into_iter().map(f64::exp).collect()
}

#[derive(Debug, Deserialize)]
struct PolicyRepr {
    n_contexts: usize,
    n_responses: usize,
    logits: Vec<f64>,
    reference_logits: Vec<f64>,
}

/// Row-major `n_contexts x n_responses` logits and a frozen reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRepr")]
pub struct PolicyTable {
    n_contexts: usize,
    n_responses: usize,
    logits: Vec<f64>,
    reference_logits: Vec<f64>,
}

impl TryFrom<PolicyRepr> for PolicyTable {
    type Error = Error;

    fn try_from(r: PolicyRepr) -> Result<Self> {
        let mut p = PolicyTable::from_logits(r.n_contexts, r.n_responses, r.logits)?;
        if r.reference_logits.len() != p.logits.len() {
            return Err(Error::LengthMismatch { expected: p.logits.len(), actual: r.reference_logits.len() });
        }
        if r.reference_logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite reference logit".into()));
        }
        p.reference_logits = r.reference_logits;
        Ok(p)
    }
}

impl PolicyTable {
    /// Uniform policy; the reference is the same uniform table.
    pub fn uniform(n_contexts: usize, n_responses: usize) -> Result<Self> {
        Self::from_logits(n_contexts, n_responses, vec![0.0; n_contexts * n_responses])
    }

    /// Policy whose reference is a frozen copy of `logits`.
    pub fn from_logits(n_contexts: usize, n_responses: usize, logits: Vec<f64>) -> Result<Self> {
        if n_contexts == 0 || n_responses < 2 {
            return Err(Error::ShapeMismatch("policy needs at least one context and two responses".into()));
        }
        if logits.len() != n_contexts * n_responses {
            return Err(Error::LengthMismatch { expected: n_contexts * n_responses, actual: logits.len() });
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite logit".into()));
        }
        Ok(Self { n_contexts, n_responses, reference_logits: logits.clone(), logits })
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }
    pub fn n_responses(&self) -> usize {
        self.n_responses
    }
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
    /// Trainable logits; the reference stays untouched.
    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }
    pub fn reference_logits(&self) -> &[f64] {
        &self.reference_logits
    }

    fn row<'a>(&self, table: &'a [f64], ctx: usize) -> &'a [f64] {
        &table[ctx * self.n_responses..(ctx + 1) * self.n_responses]
    }

    fn check_context(&self, ctx: usize) -> Result<()> {
        if ctx >= self.n_contexts {
            return Err(Error::InvalidValue(format!("context {ctx} out of range")));
        }
        Ok(())
    }

    fn check_response(&self, resp: usize) -> Result<()> {
        if resp >= self.n_responses {
            return Err(Error::InvalidValue(format!("response {resp} out of range")));
        }
        Ok(())
    }

    pub fn probs(&self, ctx: usize) -> Vec<f64> {
        softmax(self.row(&self.logits, ctx))
    }
    pub fn log_probs(&self, ctx: usize) -> Vec<f64> {
        log_softmax(self.row(&self.logits, ctx))
    }
    pub fn reference_log_probs(&self, ctx: usize) -> Vec<f64> {
        log_softmax(self.row(&self.reference_logits, ctx))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub per_context: Vec<f64>,
    pub mean: f64,
}

/// Exact `KL(pi || pi_ref)` per context and its unweighted mean.
pub fn kl_divergence(policy: &PolicyTable) -> KlReport {
    let per_context: Vec<f64> = (0..policy.n_contexts)
        .map(|c| {
            let lp = policy.log_probs(c);
            let lr = policy.reference_log_probs(c);
            let kl: f64 = lp.iter().zip(&lr).map(|(p, r)| p.exp() * (p - r)).sum();
            kl.max(0.0)
        })
        .collect();
    let mean = per_context.iter().sum::<f64>() / per_context.len() as f64;
    KlReport { per_context, mean }
}

#[derive(Debug, Deserialize)]
struct EnvRepr {
    n_contexts: usize,
    n_responses: usize,
    reward_table: Vec<f64>,
    prompt_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvRepr")]
pub struct BanditEnv {
    n_contexts: usize,
    n_responses: usize,
    reward_table: Vec<f64>,
    prompt_probs: Vec<f64>,
}

impl TryFrom<EnvRepr> for BanditEnv {
    type Error = Error;

    fn try_from(r: EnvRepr) -> Result<Self> {
        BanditEnv::new(r.n_contexts, r.n_responses, r.reward_table, r.prompt_probs)
    }
}

impl BanditEnv {
    pub fn new(
        n_contexts: usize,
        n_responses: usize,
        reward_table: Vec<f64>,
        prompt_probs: Vec<f64>,
    ) -> Result<Self> {
        if reward_table.len() != n_contexts * n_responses {
            return Err(Error::LengthMismatch {
                expected: n_contexts * n_responses,
                actual: reward_table.len(),
            });
        }
        if prompt_probs.len() != n_contexts {
            return Err(Error::LengthMismatch { expected: n_contexts, actual: prompt_probs.len() });
        }
        if reward_table.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite reward".into()));
        }
        let total: f64 = prompt_probs.iter().sum();
        if prompt_probs.iter().any(|p| p.is_nan() || *p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidValue(format!(
                "prompt probabilities must be non-negative and sum to 1 (sum {total})"
            )));
        }
        Ok(Self { n_contexts, n_responses, reward_table, prompt_probs })
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }
    pub fn n_responses(&self) -> usize {
        self.n_responses
    }
    pub fn prompt_probs(&self) -> &[f64] {
        &self.prompt_probs
    }

    pub fn reward(&self, ctx: usize, resp: usize) -> f64 {
        self.reward_table[ctx * self.n_responses + resp]
    }

    pub fn best_response(&self, ctx: usize) -> usize {
        let row = &self.reward_table[ctx * self.n_responses..(ctx + 1) * self.n_responses];
        (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b })
    }

    pub fn sample_context<R: Rng>(&self, rng: &mut R) -> usize {
        if self.n_contexts == 1 {
            return 0;
        }
        WeightedIndex::new(&self.prompt_probs).expect("validated probabilities").sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlConfig {
    pub beta: f64,
}

impl KlConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("KL coefficient {beta} must be >= 0")));
        }
        Ok(Self { beta })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoPair {
    pub context: usize,
    pub chosen: usize,
    pub rejected: usize,
    #[serde(alias = "m", default = "one")]
    pub margin: f64,
}

fn one() -> f64 {
    1.0
}

/// DPO loss of one pair and its gradient with respect to the policy logits
/// (full table layout; only the pair's context row is non-zero).
pub fn dpo_loss(
    policy: &PolicyTable,
    pair: &DpoPair,
    beta: f64,
    variant: DpoVariant,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; policy.logits.len()];
    let loss = dpo_loss_into(policy, pair, beta, variant, 1.0, &mut grad)?;
    Ok((loss, grad))
}

fn dpo_loss_into(
    policy: &PolicyTable,
    pair: &DpoPair,
    beta: f64,
    variant: DpoVariant,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    policy.check_context(pair.context)?;
    policy.check_response(pair.chosen)?;
    policy.check_response(pair.rejected)?;
    if pair.chosen == pair.rejected {
        return Err(Error::InvalidValue("chosen and rejected responses are identical".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("DPO beta {beta} must be > 0")));
    }
    if variant != BtVariant::Regular && (pair.margin.is_nan() || pair.margin < 1.0) {
        return Err(Error::InvalidValue(format!("margin {} must be >= 1", pair.margin)));
    }
    let lp = policy.log_probs(pair.context);
    let lr = policy.reference_log_probs(pair.context);
    let (c, r) = (pair.chosen, pair.rejected);
    let u = beta * ((lp[c] - lr[c]) - (lp[r] - lr[r]));
    let lg = variant.eval(u, pair.margin);
    // d log pi(y) / d logit_j = [j = y] - pi_j; the pi_j terms cancel in u.
    let g = scale * lg.dloss_ddelta * beta;
    let base = pair.context * policy.n_responses;
    grad[base + c] += g;
    grad[base + r] -= g;
    Ok(lg.loss)
}

fn default_dpo_epochs() -> usize {
    2
}
fn default_dpo_lr() -> f64 {
    0.05
}
fn default_dpo_batch() -> usize {
    8
}
fn default_dpo_beta() -> f64 {
    0.1
}
fn default_variant() -> DpoVariant {
    BtVariant::Regular
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpoConfig {
    #[serde(default = "default_dpo_beta")]
    pub beta: f64,
    #[serde(default = "default_variant")]
    pub variant: DpoVariant,
    #[serde(default = "default_dpo_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_dpo_batch")]
    pub batch_size: usize,
    #[serde(default = "default_dpo_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub warmup_steps: u64,
}

impl Default for DpoConfig {
    fn default() -> Self {
        Self {
            beta: default_dpo_beta(),
            variant: default_variant(),
            learning_rate: default_dpo_lr(),
            batch_size: default_dpo_batch(),
            epochs: default_dpo_epochs(),
            seed: 0,
            optimizer: OptimizerKind::default(),
            warmup_steps: 0,
        }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta {} must be > 0", self.beta)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be > 0", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoTraceRow {
    pub step: u64,
    pub loss: f64,
    pub mean_kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpoOutput {
    pub policy: PolicyTable,
    pub trace: Vec<DpoTraceRow>,
}

impl DpoOutput {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("step,loss,mean_kl\n");
        for r in &self.trace {
            let _ = writeln!(out, "{},{},{}", r.step, r.loss, r.mean_kl);
        }
        out
    }
}

/// Seeded minibatch DPO. The reference is the policy's frozen table.
pub fn dpo_train(policy: &PolicyTable, pairs: &[DpoPair], config: &DpoConfig) -> Result<DpoOutput> {
    config.validate()?;
    let mut policy = policy.clone();
    if pairs.is_empty() {
        return Ok(DpoOutput { policy, trace: Vec::new() });
    }
    let mut opt =
        Optimizer::new(config.optimizer, config.learning_rate, config.warmup_steps, policy.logits.len());
    let mut grad = vec![0.0; policy.logits.len()];
    let mut trace = Vec::new();
    let mut step = 0u64;
    for epoch in 0..config.epochs as u64 {
        for batch in epoch_permutation(config.seed, epoch, pairs.len()).chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            for &i in batch {
                loss += dpo_loss_into(&policy, &pairs[i], config.beta, config.variant, scale, &mut grad)?;
            }
            loss *= scale;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("DPO loss {loss} at step {step}")));
            }
            opt.step(&mut policy.logits, &grad);
            step += 1;
            trace.push(DpoTraceRow { step, loss, mean_kl: kl_divergence(&policy).mean });
        }
    }
    Ok(DpoOutput { policy, trace })
}

/// Fraction of pairs where the policy gives the chosen response more mass.
pub fn pair_ranking_accuracy(policy: &PolicyTable, pairs: &[DpoPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs to rank".into()));
    }
    let mut correct = 0usize;
    for p in pairs {
        policy.check_context(p.context)?;
        let lp = policy.log_probs(p.context);
        if lp[p.chosen] > lp[p.rejected] {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// Leave-one-out advantages `A_i = R_i - mean_{j != i} R_j`.
///
/// Rewards are first taken relative to the first sample (the advantage is
/// shift-invariant), so identical rewards give exactly zero advantages; the
/// last advantage absorbs rounding so the sum is exactly zero.
pub fn leave_one_out_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    let k = rewards.len();
    if k < 2 {
        return Err(Error::Config("leave-one-out baseline needs k >= 2 samples".into()));
    }
    let rel: Vec<f64> = rewards.iter().map(|r| r - rewards[0]).collect();
    let total: f64 = rel.iter().sum();
    let mut adv: Vec<f64> = rel.iter().map(|r| (k as f64 * r - total) / (k - 1) as f64).collect();
    let head: f64 = adv[..k - 1].iter().sum();
    adv[k - 1] = -head;
    Ok(adv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReinforceStats {
    pub context: usize,
    pub responses: Vec<usize>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub mean_reward: f64,
    /// Mean per-sample log-ratio `log pi(y|x) - log pi_ref(y|x)`.
    pub mean_log_ratio: f64,
}

/// One REINFORCE update: samples a context and `k` responses, scores them with
/// the KL-regularized reward, and ascends `mean_i A_i grad log pi(y_i|x)`.
pub fn reinforce_step<F, R>(
    policy: &mut PolicyTable,
    env: &BanditEnv,
    reward_fn: F,
    k: usize,
    kl: KlConfig,
    lr: f64,
    rng: &mut R,
) -> Result<ReinforceStats>
where
    F: Fn(usize, usize) -> f64,
    R: Rng,
{
    if k < 2 {
        return Err(Error::Config("leave-one-out baseline needs k >= 2 samples".into()));
    }
    if env.n_contexts != policy.n_contexts || env.n_responses != policy.n_responses {
        return Err(Error::ShapeMismatch("environment and policy shapes differ".into()));
    }
    let ctx = env.sample_context(rng);
    let probs = policy.probs(ctx);
    let lp = policy.log_probs(ctx);
    let lr_ref = policy.reference_log_probs(ctx);
    let dist =
        WeightedIndex::new(&probs).map_err(|e| Error::NonFinite(format!("policy distribution: {e}")))?;
    let responses: Vec<usize> = (0..k).map(|_| dist.sample(rng)).collect();
    let rewards: Vec<f64> = responses.iter().map(|&y| reward_fn(ctx, y)).collect();
    let log_ratio: Vec<f64> = responses.iter().map(|&y| lp[y] - lr_ref[y]).collect();
    let regularized: Vec<f64> = rewards.iter().zip(&log_ratio).map(|(r, l)| r - kl.beta * l).collect();
    let advantages = leave_one_out_advantages(&regularized)?;

    let n = policy.n_responses;
    let mut grad = vec![0.0; n];
    for (&y, &a) in responses.iter().zip(&advantages) {
        if a == 0.0 {
            continue;
        }
        for (j, g) in grad.iter_mut().enumerate() {
            let indicator = if j == y { 1.0 } else { 0.0 };
            *g += a * (indicator - probs[j]) / k as f64;
        }
    }
    let row = &mut policy.logits[ctx * n..(ctx + 1) * n];
    for (l, g) in row.iter_mut().zip(&grad) {
        *l += lr * g;
    }
    if row.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("policy logits diverged".into()));
    }

    Ok(ReinforceStats {
        context: ctx,
        responses,
        mean_reward: rewards.iter().sum::<f64>() / k as f64,
        mean_log_ratio: log_ratio.iter().sum::<f64>() / k as f64,
        rewards,
        advantages,
    })
}

fn default_k() -> usize {
    4
}
fn default_reinforce_lr() -> f64 {
    0.1
}
fn default_steps() -> u64 {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReinforceConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_reinforce_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            beta: 0.0,
            learning_rate: default_reinforce_lr(),
            steps: default_steps(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReinforceTraceRow {
    pub step: u64,
    pub mean_reward: f64,
    /// Exact mean KL to the reference after the step.
    pub mean_kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReinforceOutput {
    pub policy: PolicyTable,
    pub trace: Vec<ReinforceTraceRow>,
}

impl ReinforceOutput {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("step,mean_reward,mean_kl\n");
        for r in &self.trace {
            let _ = writeln!(out, "{},{},{}", r.step, r.mean_reward, r.mean_kl);
        }
        out
    }

    /// Average of the per-step mean KL over the run.
    pub fn run_mean_kl(&self) -> f64 {
        if self.trace.is_empty() {
            return 0.0;
        }
        self.trace.iter().map(|r| r.mean_kl).sum::<f64>() / self.trace.len() as f64
    }
}

/// REINFORCE against the environment's reward table.
pub fn reinforce_train(
    policy: &PolicyTable,
    env: &BanditEnv,
    config: &ReinforceConfig,
) -> Result<ReinforceOutput> {
    let kl = KlConfig::new(config.beta)?;
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Config(format!("learning_rate {} must be > 0", config.learning_rate)));
    }
    let mut policy = policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = Vec::with_capacity(config.steps as usize);
    for step in 1..=config.steps {
        let stats = reinforce_step(
            &mut policy,
            env,
            |c, y| env.reward(c, y),
            config.k,
            kl,
            config.learning_rate,
            &mut rng,
        )?;
        trace.push(ReinforceTraceRow {
            step,
            mean_reward: stats.mean_reward,
            mean_kl: kl_divergence(&policy).mean,
        });
    }
    Ok(ReinforceOutput { policy, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_policy(seed: u64, c: usize, r: usize) -> PolicyTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference: Vec<f64> = (0..c * r).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut p = PolicyTable::from_logits(c, r, reference).unwrap();
        for l in p.logits_mut() {
            *l += rng.random_range(-1.0..1.0);
        }
        p
    }

    #[test]
    fn dpo_at_reference_is_ln2() {
        let p = PolicyTable::uniform(2, 4).unwrap();
        for (c, r) in [(0, 1), (2, 3), (3, 0)] {
            let pair = DpoPair { context: 1, chosen: c, rejected: r, margin: 2.0 };
            let (loss, _) = dpo_loss(&p, &pair, 0.1, BtVariant::Regular).unwrap();
            assert_eq!(loss, std::f64::consts::LN_2);
        }
    }

    #[test]
    fn dpo_errors() {
        let p = PolicyTable::uniform(1, 3).unwrap();
        let same = DpoPair { context: 0, chosen: 1, rejected: 1, margin: 1.0 };
        assert!(dpo_loss(&p, &same, 0.1, BtVariant::Regular).is_err());
        let ok = DpoPair { context: 0, chosen: 0, rejected: 1, margin: 0.5 };
        assert!(dpo_loss(&p, &ok, 0.0, BtVariant::Regular).is_err());
        assert!(dpo_loss(&p, &ok, 0.1, BtVariant::Margin).is_err());
        assert!(dpo_loss(&p, &ok, 0.1, BtVariant::Regular).is_ok());
    }

    #[test]
    fn dpo_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let p = random_policy(seed, 2, 4);
            let pair = DpoPair { context: (seed % 2) as usize, chosen: 1, rejected: 3, margin: 2.0 };
            for v in BtVariant::ALL {
                let (_, g) = dpo_loss(&p, &pair, 0.7, v).unwrap();
                for (i, &gi) in g.iter().enumerate() {
                    let h = 1e-5;
                    let mut plus = p.clone();
                    plus.logits[i] += h;
                    let mut minus = p.clone();
                    minus.logits[i] -= h;
                    let fd = (dpo_loss(&plus, &pair, 0.7, v).unwrap().0
                        - dpo_loss(&minus, &pair, 0.7, v).unwrap().0)
                        / (2.0 * h);
                    let denom = gi.abs().max(fd.abs()).max(1e-8);
                    assert!((gi - fd).abs() / denom < 1e-6 || (gi - fd).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn dpo_gradient_grows_with_beta_at_reference() {
        let p = PolicyTable::uniform(1, 3).unwrap();
        let pair = DpoPair { context: 0, chosen: 0, rejected: 2, margin: 1.0 };
        let norm = |beta| {
            let (_, g) = dpo_loss(&p, &pair, beta, BtVariant::Regular).unwrap();
            g.iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        assert!(norm(0.01) < norm(0.1) && norm(0.1) < norm(1.0));
    }

    #[test]
    fn kl_closed_forms() {
        let p = PolicyTable::uniform(2, 4).unwrap();
        assert_eq!(kl_divergence(&p).mean, 0.0);
        let mut q = p.clone();
        q.logits_mut()[..4].copy_from_slice(&[800.0, 0.0, 0.0, 0.0]);
        let report = kl_divergence(&q);
        assert!((report.per_context[0] - 4f64.ln()).abs() < 1e-12);
        assert_eq!(report.per_context[1], 0.0);
    }

    #[test]
    fn loo_advantages() {
        let a = leave_one_out_advantages(&[1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(a[0], 1.0 - 11.0 / 3.0);
        assert_eq!(a.iter().sum::<f64>(), 0.0);
        let z = leave_one_out_advantages(&[0.1, 0.1, 0.1]).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
        assert!(leave_one_out_advantages(&[1.0]).is_err());
    }

    #[test]
    fn equal_rewards_leave_policy_unchanged() {
        let env = BanditEnv::new(1, 3, vec![0.5, 0.5, 0.5], vec![1.0]).unwrap();
        let mut p = PolicyTable::uniform(1, 3).unwrap();
        let before = p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            reinforce_step(&mut p, &env, |c, y| env.reward(c, y), 4, KlConfig { beta: 0.0 }, 0.1, &mut rng)
                .unwrap();
        }
        assert_eq!(p, before);
        let err = reinforce_step(&mut p, &env, |_, _| 0.0, 1, KlConfig { beta: 0.0 }, 0.1, &mut rng);
        assert!(err.is_err());
    }

    #[test]
    fn env_probability_check() {
        assert!(BanditEnv::new(2, 2, vec![0.0; 4], vec![0.5, 0.5]).is_ok());
        assert!(BanditEnv::new(2, 2, vec![0.0; 4], vec![0.5, 0.6]).is_err());
        assert!(BanditEnv::new(2, 2, vec![0.0; 4], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn policy_json_round_trip_keeps_reference() {
        let p = random_policy(3, 2, 3);
        let back: PolicyTable = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
