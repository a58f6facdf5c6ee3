//! Synthetic preference corpora with ground-truth oracles.
//!
//! Each response gets a feature vector `phi ~ N(0, I_d)` and a latent quality
//! `q = w . phi`. Annotators see the gap `q2 - q1` plus Gaussian noise and
//! report a signed strength on the 1..3 scale; a position bias flips some
//! response-1 preferences toward response 2. Attribute ratings are noisy
//! affine functions of quality. Every task draws from its own RNG stream, so
//! output does not depend on generation order.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchharness::{BenchTask, Category, ReasoningKind};
use crate::error::{Error, Result};
use crate::prefdata::{
    AggregatedPreference, Annotation, AnnotationTask, AttributeRating, Chosen, PreferenceScore, Split,
    Status, INVALID_PREFERENCE, MAX_SPREAD,
};
use crate::rlhfsim::{BanditEnv, DpoPair};

/// Stream offsets keep corpus, bench and weight draws on disjoint streams.
const WEIGHT_STREAM: u64 = u64::MAX;
const BENCH_STREAM_BASE: u64 = 1 << 40;

fn default_n_tasks() -> usize {
    2000
}
fn default_annotators() -> [usize; 2] {
    [3, 5]
}
fn default_feature_dim() -> usize {
    16
}
fn default_weight_norm() -> f64 {
    1.2
}
fn default_noise() -> f64 {
    0.5
}
fn default_thresholds() -> [f64; 3] {
    [0.25, 1.0, 2.5]
}
fn default_loadings() -> [f64; 5] {
    [0.9, 0.8, 0.5, 0.2, 0.1]
}
fn default_rating_noise() -> f64 {
    0.4
}
fn default_val_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_tasks")]
    pub n_tasks: usize,
    #[serde(default = "default_annotators")]
    pub n_annotators_range: [usize; 2],
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    /// Drawn from the seed and scaled to `weight_norm` when absent.
    #[serde(default)]
    pub true_weights: Option<Vec<f64>>,
    #[serde(default = "default_weight_norm")]
    pub weight_norm: f64,
    #[serde(default = "default_noise")]
    pub annotator_noise_sd: f64,
    #[serde(default)]
    pub position_bias: f64,
    #[serde(default)]
    pub invalid_rate: f64,
    /// Gap thresholds: the forced-choice band, then the 1/2 and 2/3 strength cuts.
    #[serde(default = "default_thresholds")]
    pub thresholds: [f64; 3],
    /// Per-attribute slope of rating on quality, around the scale midpoint 2.
    #[serde(default = "default_loadings")]
    pub rating_loadings: [f64; 5],
    #[serde(default = "default_rating_noise")]
    pub rating_noise_sd: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.n_annotators_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("bad annotator range [{lo},{hi}]")));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be >= 1".into()));
        }
        if let Some(w) = &self.true_weights {
            if w.len() != self.feature_dim {
                return Err(Error::Config(format!(
                    "true_weights has {} entries, feature_dim is {}",
                    w.len(),
                    self.feature_dim
                )));
            }
        }
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if !unit(self.position_bias) || !unit(self.invalid_rate) || !unit(self.val_fraction) {
            return Err(Error::Config(
                "position_bias, invalid_rate and val_fraction must lie in [0,1)".into(),
            ));
        }
        if [self.annotator_noise_sd, self.rating_noise_sd].iter().any(|s| s.is_nan() || *s < 0.0) {
            return Err(Error::Config("noise levels must be >= 0".into()));
        }
        let t = self.thresholds;
        if !(0.0 <= t[0] && t[0] <= t[1] && t[1] <= t[2]) {
            return Err(Error::Config(format!("thresholds {t:?} must be increasing")));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: GenConfig = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The quality weights used for generation.
    pub fn weights(&self) -> Vec<f64> {
        if let Some(w) = &self.true_weights {
            return w.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(WEIGHT_STREAM);
        let raw: Vec<f64> = (0..self.feature_dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.iter().map(|x| x * self.weight_norm / norm).collect()
    }

    /// Signed score for a perceived gap, before position bias.
    pub fn discretize(&self, gap: f64) -> i32 {
        let a = gap.abs();
        let strength = if a < self.thresholds[1] {
            1
        } else if a < self.thresholds[2] {
            2
        } else {
            3
        };
        if gap >= 0.0 {
            strength
        } else {
            -strength
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFeatures {
    pub task_id: String,
    pub features_1: Vec<f64>,
    pub features_2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOracle {
    pub task_id: String,
    pub quality_1: f64,
    pub quality_2: f64,
    pub true_gap: f64,
    pub correct: Chosen,
    /// Gap inside the forced-choice band.
    pub near_tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub true_weights: Vec<f64>,
    pub tasks: Vec<TaskOracle>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub tasks: Vec<AnnotationTask>,
    pub features: Vec<TaskFeatures>,
    pub oracle: Oracle,
}

fn task_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gaussian<R: Rng>(rng: &mut R, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sd
}

fn rating<R: Rng>(rng: &mut R, cfg: &GenConfig, q: f64) -> AttributeRating {
    let mut r = [0u8; 5];
    for (slot, loading) in r.iter_mut().zip(cfg.rating_loadings) {
        let v = (2.0 + loading * q + gaussian(rng, cfg.rating_noise_sd)).round();
        *slot = v.clamp(0.0, 4.0) as u8;
    }
    AttributeRating {
        helpfulness: r[0],
        correctness: r[1],
        coherence: r[2],
        complexity: r[3],
        verbosity: r[4],
    }
}

pub fn task_id(index: usize) -> String {
    format!("task-{index:06}")
}

fn generate_task(
    cfg: &GenConfig,
    weights: &[f64],
    index: usize,
) -> (AnnotationTask, TaskFeatures, TaskOracle) {
    let mut rng = task_rng(cfg.seed, index as u64);
    let id = task_id(index);
    let f1 = normal_vec(&mut rng, cfg.feature_dim);
    let f2 = normal_vec(&mut rng, cfg.feature_dim);
    let (q1, q2) = (dot(weights, &f1), dot(weights, &f2));
    let true_gap = q2 - q1;
    let split = if rng.random::<f64>() < cfg.val_fraction { Split::Val } else { Split::Train };
    let [lo, hi] = cfg.n_annotators_range;
    let n_annotators = rng.random_range(lo..=hi);

    let annotations = (0..n_annotators)
        .map(|a| {
            let mut score = cfg.discretize(true_gap + gaussian(&mut rng, cfg.annotator_noise_sd));
            if score < 0 && rng.random::<f64>() < cfg.position_bias {
                score = -score;
            }
            if rng.random::<f64>() < cfg.invalid_rate {
                score = INVALID_PREFERENCE;
            }
            let ratings_1 = rating(&mut rng, cfg, q1);
            let ratings_2 = rating(&mut rng, cfg, q2);
            let justification = justification_text(score);
            Annotation {
                annotator_id: format!("annotator-{a}"),
                preference: PreferenceScore::new(score).expect("generated scores are valid"),
                ratings_1,
                ratings_2,
                justification,
            }
        })
        .collect();

    let task = AnnotationTask {
        task_id: id.clone(),
        prompt: format!("prompt {id}"),
        response_1: format!("response 1 of {id}"),
        response_2: format!("response 2 of {id}"),
        annotations,
        split,
    };
    let features = TaskFeatures { task_id: id.clone(), features_1: f1, features_2: f2 };
    let oracle = TaskOracle {
        task_id: id,
        quality_1: q1,
        quality_2: q2,
        true_gap,
        correct: if true_gap >= 0.0 { Chosen::Response2 } else { Chosen::Response1 },
        near_tie: true_gap.abs() < cfg.thresholds[0],
    };
    (task, features, oracle)
}

fn justification_text(score: i32) -> String {
    let (better, worse) = if score < 0 { (1, 2) } else { (2, 1) };
    let strength = match score.abs() {
        1 => "slightly better than",
        2 => "better than",
        3 => "much better than",
        _ => return "Neither response is valid.".into(),
    };
    format!(
        "@Response {better} addresses the request more directly. \
         @Response {better} is {strength} @Response {worse}."
    )
}

pub fn generate_corpus(cfg: &GenConfig) -> Result<Corpus> {
    cfg.validate()?;
    let weights = cfg.weights();
    let parts: Vec<_> = (0..cfg.n_tasks).into_par_iter().map(|i| generate_task(cfg, &weights, i)).collect();
    let mut tasks = Vec::with_capacity(parts.len());
    let mut features = Vec::with_capacity(parts.len());
    let mut oracle_tasks = Vec::with_capacity(parts.len());
    for (t, f, o) in parts {
        tasks.push(t);
        features.push(f);
        oracle_tasks.push(o);
    }
    Ok(Corpus { tasks, features, oracle: Oracle { true_weights: weights, tasks: oracle_tasks } })
}

/// Bench tasks from the same quality model on streams disjoint from the
/// corpus. `per_group` tasks for each of chat, chat_hard, safety, math and
/// code; chat_hard pairs have gaps inside `[thresholds[0], thresholds[1])`.
pub fn generate_bench(cfg: &GenConfig, per_group: usize) -> Result<Vec<BenchTask>> {
    cfg.validate()?;
    if per_group == 0 {
        return Err(Error::Config("bench needs at least one task per group".into()));
    }
    let weights = cfg.weights();
    let groups = [
        (Category::Chat, ReasoningKind::None),
        (Category::ChatHard, ReasoningKind::None),
        (Category::Safety, ReasoningKind::None),
        (Category::Reasoning, ReasoningKind::Math),
        (Category::Reasoning, ReasoningKind::Code),
    ];
    let tasks = (0..groups.len() * per_group)
        .into_par_iter()
        .map(|i| {
            let (category, reasoning_kind) = groups[i / per_group];
            let mut rng = task_rng(cfg.seed, BENCH_STREAM_BASE + i as u64);
            let prompt = normal_vec(&mut rng, cfg.feature_dim);
            loop {
                let a = normal_vec(&mut rng, cfg.feature_dim);
                let b = normal_vec(&mut rng, cfg.feature_dim);
                let gap = dot(&weights, &a) - dot(&weights, &b);
                let hard = (cfg.thresholds[0]..cfg.thresholds[1]).contains(&gap.abs());
                let usable = if category == Category::ChatHard { hard } else { gap != 0.0 };
                if usable {
                    let (chosen, rejected) = if gap > 0.0 { (a, b) } else { (b, a) };
                    return BenchTask { prompt, chosen, rejected, category, reasoning_kind };
                }
            }
        })
        .collect();
    Ok(tasks)
}

/// Aggregation oracle: enumerates every size-3 index combination and applies
/// the selection rules literally with exact integer arithmetic.
pub fn brute_force_aggregate(task_id: &str, raw: &[i32]) -> Result<AggregatedPreference> {
    let scores: Vec<i32> = raw.iter().copied().filter(|&s| s != INVALID_PREFERENCE).collect();
    if scores.len() > 8 {
        return Err(Error::InvalidValue("brute-force oracle handles at most 8 scores".into()));
    }
    if scores.is_empty() {
        return Ok(AggregatedPreference {
            task_id: task_id.to_string(),
            used_annotations: Vec::new(),
            overall: 0,
            magnitude: None,
            chosen: Chosen::None,
            status: Status::DroppedAllInvalid,
        });
    }
    let n = scores.len() as i64;
    let total: i64 = scores.iter().map(|&s| s as i64).sum();
    let mut used = if scores.len() <= 3 {
        scores.clone()
    } else {
        type Key = (i64, i64, Vec<i32>);
        let mut best: Option<(Key, Vec<i32>)> = None;
        for i in 0..scores.len() {
            for j in i + 1..scores.len() {
                for k in j + 1..scores.len() {
                    let mut subset = vec![scores[i], scores[j], scores[k]];
                    subset.sort_unstable();
                    let spread = (subset[2] - subset[0]) as i64;
                    let sum: i64 = subset.iter().map(|&s| s as i64).sum();
                    // |sum/3 - total/n| scaled by 3n.
                    let distance = (sum * n - total * 3).abs();
                    let key = (spread, distance, subset.clone());
                    if best.as_ref().is_none_or(|(b, _)| key < *b) {
                        best = Some((key, subset));
                    }
                }
            }
        }
        best.expect("at least one subset").1
    };
    used.sort_unstable();

    let len = used.len() as i64;
    let sum: i64 = used.iter().map(|&s| s as i64).sum();
    // Round half away from zero: sign(sum) * floor((2|sum| + len) / (2 len)).
    let overall = (sum.signum() * ((2 * sum.abs() + len) / (2 * len))) as i32;
    let spread = used[used.len() - 1] - used[0];
    let status = if spread > MAX_SPREAD {
        Status::DroppedSpread
    } else if overall == 0 {
        Status::DroppedZero
    } else {
        Status::Kept
    };
    Ok(AggregatedPreference {
        task_id: task_id.to_string(),
        used_annotations: used,
        overall,
        magnitude: (overall != 0).then(|| overall.unsigned_abs() as u8),
        chosen: if overall < 0 {
            Chosen::Response1
        } else if overall > 0 {
            Chosen::Response2
        } else {
            Chosen::None
        },
        status,
    })
}

/// Random bandit environment: standard-normal rewards, uniform prompts.
pub fn generate_bandit(n_contexts: usize, n_responses: usize, seed: u64) -> Result<BanditEnv> {
    if n_contexts == 0 {
        return Err(Error::Config("bandit needs at least one context".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards = normal_vec(&mut rng, n_contexts * n_responses);
    let mut probs = vec![1.0 / n_contexts as f64; n_contexts];
    probs[0] = 1.0 - probs[1..].iter().sum::<f64>();
    BanditEnv::new(n_contexts, n_responses, rewards, probs)
}

/// Every response pair in every context, labelled by the reward table, with
/// the reward gap discretized to a 1..3 margin.
pub fn all_bandit_pairs(env: &BanditEnv, thresholds: [f64; 2]) -> Vec<DpoPair> {
    let mut pairs = Vec::new();
    for c in 0..env.n_contexts() {
        for a in 0..env.n_responses() {
            for b in a + 1..env.n_responses() {
                let (ra, rb) = (env.reward(c, a), env.reward(c, b));
                if ra == rb {
                    continue;
                }
                let (chosen, rejected) = if ra > rb { (a, b) } else { (b, a) };
                let gap = (ra - rb).abs();
                let margin = if gap < thresholds[0] {
                    1.0
                } else if gap < thresholds[1] {
                    2.0
                } else {
                    3.0
                };
                pairs.push(DpoPair { context: c, chosen, rejected, margin });
            }
        }
    }
    pairs
}

/// Splits [`all_bandit_pairs`] into train and held-out sets. Pairs of
/// adjacent reward rank always go to train, so the full per-context order is
/// identifiable from the training pairs; the remaining pairs go to train with
/// probability `train_fraction`.
pub fn split_bandit_pairs(
    env: &BanditEnv,
    thresholds: [f64; 2],
    train_fraction: f64,
    seed: u64,
) -> (Vec<DpoPair>, Vec<DpoPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranks: Vec<Vec<usize>> = (0..env.n_contexts())
        .map(|c| {
            let mut order: Vec<usize> = (0..env.n_responses()).collect();
            order.sort_by(|&a, &b| env.reward(c, a).total_cmp(&env.reward(c, b)));
            let mut rank = vec![0; order.len()];
            for (r, &y) in order.iter().enumerate() {
                rank[y] = r;
            }
            rank
        })
        .collect();
    let (mut train, mut held_out) = (Vec::new(), Vec::new());
    for pair in all_bandit_pairs(env, thresholds) {
        let rank = &ranks[pair.context];
        let adjacent = rank[pair.chosen].abs_diff(rank[pair.rejected]) == 1;
        if adjacent || rng.random::<f64>() < train_fraction {
            train.push(pair);
        } else {
            held_out.push(pair);
        }
    }
    (train, held_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefdata::aggregate_scores;

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenConfig { n_tasks: 50, ..GenConfig::default() };
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a, b);
        let other = generate_corpus(&GenConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.features, other.features);
    }

    #[test]
    fn prefix_is_stable_across_sizes() {
        let small = generate_corpus(&GenConfig { n_tasks: 10, ..GenConfig::default() }).unwrap();
        let big = generate_corpus(&GenConfig { n_tasks: 40, ..GenConfig::default() }).unwrap();
        assert_eq!(small.tasks[..], big.tasks[..10]);
    }

    #[test]
    fn noiseless_annotators_agree_with_oracle() {
        let cfg = GenConfig { n_tasks: 200, annotator_noise_sd: 0.0, ..GenConfig::default() };
        let corpus = generate_corpus(&cfg).unwrap();
        for (task, oracle) in corpus.tasks.iter().zip(&corpus.oracle.tasks) {
            let scores = task.valid_scores();
            assert!(scores.windows(2).all(|w| w[0] == w[1]));
            let agg = aggregate_scores(&task.task_id, &scores);
            assert_eq!(agg.status, Status::Kept);
            assert_eq!(agg.chosen, oracle.correct);
        }
    }

    #[test]
    fn oracle_direction_follows_gap() {
        let cfg = GenConfig { n_tasks: 100, position_bias: 0.5, ..GenConfig::default() };
        for o in generate_corpus(&cfg).unwrap().oracle.tasks {
            let expect = if o.quality_2 - o.quality_1 >= 0.0 { Chosen::Response2 } else { Chosen::Response1 };
            assert_eq!(o.correct, expect);
        }
    }

    #[test]
    fn discretization_thresholds() {
        let cfg = GenConfig::default();
        assert_eq!(cfg.discretize(0.1), 1);
        assert_eq!(cfg.discretize(-0.99), -1);
        assert_eq!(cfg.discretize(1.0), 2);
        assert_eq!(cfg.discretize(-2.49), -2);
        assert_eq!(cfg.discretize(2.5), 3);
        assert_eq!(cfg.discretize(-7.0), -3);
    }

    #[test]
    fn default_weight_norm() {
        let w = GenConfig::default().weights();
        assert_eq!(w.len(), 16);
        assert!((w.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn brute_force_examples() {
        let a = brute_force_aggregate("t", &[-3, -1, 2, 3]).unwrap();
        assert_eq!(a.used_annotations, vec![-1, 2, 3]);
        assert_eq!(a.status, Status::DroppedSpread);
        let b = brute_force_aggregate("t", &[3, -2]).unwrap();
        assert_eq!(b.used_annotations, vec![-2, 3]);
        assert_eq!(b.overall, 1);
        assert_eq!(brute_force_aggregate("t", &[-100]).unwrap().status, Status::DroppedAllInvalid);
    }

    #[test]
    fn bench_has_all_groups_and_hard_band() {
        let cfg = GenConfig::default();
        let bench = generate_bench(&cfg, 20).unwrap();
        assert_eq!(bench.len(), 100);
        crate::benchharness::check_coverage(&bench).unwrap();
        let w = cfg.weights();
        for t in &bench {
            let gap = dot(&w, &t.chosen) - dot(&w, &t.rejected);
            assert!(gap > 0.0);
            if t.category == Category::ChatHard {
                assert!(gap < cfg.thresholds[1]);
            }
        }
    }

    #[test]
    fn bandit_pairs_follow_rewards() {
        let env = generate_bandit(3, 5, 2).unwrap();
        let pairs = all_bandit_pairs(&env, [0.5, 1.5]);
        assert_eq!(pairs.len(), 3 * 10);
        for p in pairs {
            assert!(env.reward(p.context, p.chosen) > env.reward(p.context, p.rejected));
        }
    }
}
