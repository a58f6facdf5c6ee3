//! Small feature-based reward model.
//!
//! The model is `tanh(x W1 + b1) W2 + b2` with `o = 1` output (helpfulness
//! regression or Bradley-Terry reward) or `o = 5` outputs (one per rated
//! attribute). Parameters are stored in one flat vector laid out as
//! `[W1 (d x h, row-major), b1 (h), W2 (h x o, row-major), b2 (o)]`, which is
//! also the layout of gradients, optimizer state and checkpoints.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchharness::{self, BenchTask, GroupCounts};
use crate::error::{Error, Result};

pub const ATTRIBUTE_COUNT: usize = 5;
pub const DEFAULT_INPUT_DIM: usize = 16;
pub const DEFAULT_HIDDEN_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Regression,
    BradleyTerry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardModelParams {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    head_kind: HeadKind,
    values: Vec<f64>,
}

fn param_count(d: usize, h: usize, o: usize) -> usize {
    d * h + h + h * o + o
}

fn check_shape(d: usize, h: usize, o: usize, kind: HeadKind) -> Result<()> {
    if d == 0 || h == 0 {
        return Err(Error::ShapeMismatch("input and hidden dims must be positive".into()));
    }
    if o != 1 && o != ATTRIBUTE_COUNT {
        return Err(Error::ShapeMismatch(format!("output dim {o} not in {{1,5}}")));
    }
    if kind == HeadKind::BradleyTerry && o != 1 {
        return Err(Error::ShapeMismatch("bradley_terry head requires one output".into()));
    }
    Ok(())
}

impl RewardModelParams {
    pub fn zeros(d: usize, h: usize, o: usize, head_kind: HeadKind) -> Result<Self> {
        Self::from_flat(d, h, o, head_kind, vec![0.0; param_count(d, h, o)])
    }

    pub fn from_flat(d: usize, h: usize, o: usize, head_kind: HeadKind, values: Vec<f64>) -> Result<Self> {
        check_shape(d, h, o, head_kind)?;
        if values.len() != param_count(d, h, o) {
            return Err(Error::LengthMismatch { expected: param_count(d, h, o), actual: values.len() });
        }
        Ok(Self { input_dim: d, hidden_dim: h, output_dim: o, head_kind, values })
    }

    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer.
    pub fn init_uniform(d: usize, h: usize, o: usize, head_kind: HeadKind, seed: u64) -> Result<Self> {
        check_shape(d, h, o, head_kind)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b_in = 1.0 / (d as f64).sqrt();
        let b_hidden = 1.0 / (h as f64).sqrt();
        let mut values = Vec::with_capacity(param_count(d, h, o));
        values.extend((0..d * h + h).map(|_| rng.random_range(-b_in..=b_in)));
        values.extend((0..h * o + o).map(|_| rng.random_range(-b_hidden..=b_hidden)));
        Self::from_flat(d, h, o, head_kind, values)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }
    pub fn head_kind(&self) -> HeadKind {
        self.head_kind
    }
    pub fn n_params(&self) -> usize {
        self.values.len()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim
            && self.hidden_dim == other.hidden_dim
            && self.output_dim == other.output_dim
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let (d, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        let b1 = d * h;
        let w2 = b1 + h;
        let b2 = w2 + h * o;
        (b1, w2, b2)
    }

    /// Word-wise hash of shape and parameter bits; ties a cache to a
    /// parameter state.
    pub fn fingerprint(&self) -> u64 {
        const K: u64 = 0x9e37_79b9_7f4a_7c15;
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            hash = (hash.rotate_left(23) ^ x).wrapping_mul(K);
        };
        eat(self.input_dim as u64);
        eat(self.hidden_dim as u64);
        eat(self.output_dim as u64);
        for v in &self.values {
            eat(v.to_bits());
        }
        hash ^ (hash >> 29)
    }

    pub fn forward(&self, features: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if features.len() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "feature length {} != input dim {}",
                features.len(),
                self.input_dim
            )));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite feature {bad}")));
        }
        let (h, o) = (self.hidden_dim, self.output_dim);
        let (b1_at, w2_at, b2_at) = self.offsets();
        let w1 = &self.values[..b1_at];
        let b1 = &self.values[b1_at..w2_at];
        let w2 = &self.values[w2_at..b2_at];
        let b2 = &self.values[b2_at..];

        let mut hidden = b1.to_vec();
        for (i, &x) in features.iter().enumerate() {
            let row = &w1[i * h..(i + 1) * h];
            for (acc, w) in hidden.iter_mut().zip(row) {
                *acc += x * w;
            }
        }
        hidden.iter_mut().for_each(|a| *a = a.tanh());

        let mut out = b2.to_vec();
        for (j, &a) in hidden.iter().enumerate() {
            let row = &w2[j * o..(j + 1) * o];
            for (acc, w) in out.iter_mut().zip(row) {
                *acc += a * w;
            }
        }
        let cache = ForwardCache { input: features.to_vec(), hidden, fingerprint: self.fingerprint() };
        Ok((out, cache))
    }

    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.forward(features).map(|(out, _)| out)
    }

    /// Scalar reward of a single-output model.
    pub fn score(&self, features: &[f64]) -> Result<f64> {
        if self.output_dim != 1 {
            return Err(Error::ShapeMismatch(
                "scalar score needs a single-output model; combine attributes first".into(),
            ));
        }
        Ok(self.predict(features)?[0])
    }

    /// Gradient of `output . upstream` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.n_params()];
        self.backward_into(cache, upstream, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale * d(output . upstream)/d(params)` into `accum`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        scale: f64,
        accum: &mut [f64],
    ) -> Result<()> {
        if cache.fingerprint != self.fingerprint() || cache.input.len() != self.input_dim {
            return Err(Error::StaleCache);
        }
        if upstream.len() != self.output_dim {
            return Err(Error::LengthMismatch { expected: self.output_dim, actual: upstream.len() });
        }
        if accum.len() != self.n_params() {
            return Err(Error::LengthMismatch { expected: self.n_params(), actual: accum.len() });
        }
        let (h, o) = (self.hidden_dim, self.output_dim);
        let (b1_at, w2_at, b2_at) = self.offsets();
        let w2 = &self.values[w2_at..b2_at];

        let up: Vec<f64> = upstream.iter().map(|u| u * scale).collect();
        for (g, u) in accum[b2_at..].iter_mut().zip(&up) {
            *g += u;
        }
        let mut pre_grad = vec![0.0; h];
        for (j, &a) in cache.hidden.iter().enumerate() {
            let w_row = &w2[j * o..(j + 1) * o];
            let g_row = &mut accum[w2_at + j * o..w2_at + (j + 1) * o];
            let mut dh = 0.0;
            for k in 0..o {
                g_row[k] += a * up[k];
                dh += w_row[k] * up[k];
            }
            pre_grad[j] = dh * (1.0 - a * a);
        }
        for (g, p) in accum[b1_at..w2_at].iter_mut().zip(&pre_grad) {
            *g += p;
        }
        for (i, &x) in cache.input.iter().enumerate() {
            let g_row = &mut accum[i * h..(i + 1) * h];
            for (g, p) in g_row.iter_mut().zip(&pre_grad) {
                *g += x * p;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, seed: u64, step: u64) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
            head_kind: self.head_kind,
            params: self.values.clone(),
            seed,
            step,
        }
    }
}

/// Activations saved by [`RewardModelParams::forward`] for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
    fingerprint: u64,
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub head_kind: HeadKind,
    pub params: Vec<f64>,
    pub seed: u64,
    pub step: u64,
}

impl Checkpoint {
    pub fn to_params(&self) -> Result<RewardModelParams> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::InvalidValue(format!(
                "unsupported checkpoint version {}",
                self.format_version
            )));
        }
        RewardModelParams::from_flat(
            self.input_dim,
            self.hidden_dim,
            self.output_dim,
            self.head_kind,
            self.params.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        ckpt.to_params()?;
        Ok(ckpt)
    }
}

/// Reuses a helpfulness-only regression model as the starting point of a
/// Bradley-Terry model. Parameters are copied unchanged.
pub fn init_bt_from_regression(reg: &RewardModelParams) -> Result<RewardModelParams> {
    if reg.head_kind != HeadKind::Regression {
        return Err(Error::InvalidValue("expected a regression model".into()));
    }
    if reg.output_dim != 1 {
        return Err(Error::InvalidValue(
            "reduce via attribute weights first or train helpfulness-only".into(),
        ));
    }
    let mut bt = reg.clone();
    bt.head_kind = HeadKind::BradleyTerry;
    Ok(bt)
}

/// Weights for collapsing the five attribute predictions into one reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeWeights {
    pub w: [f64; ATTRIBUTE_COUNT],
}

impl AttributeWeights {
    pub fn new(w: [f64; ATTRIBUTE_COUNT]) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite() || x.abs() > 1.0) {
            return Err(Error::InvalidValue(format!("attribute weights {w:?} outside [-1,1]")));
        }
        Ok(Self { w })
    }

    pub fn helpfulness_only() -> Self {
        Self { w: [1.0, 0.0, 0.0, 0.0, 0.0] }
    }
}

pub fn combine_attributes(preds: &[f64], weights: &AttributeWeights) -> Result<f64> {
    if preds.len() != ATTRIBUTE_COUNT {
        return Err(Error::LengthMismatch { expected: ATTRIBUTE_COUNT, actual: preds.len() });
    }
    Ok(preds.iter().zip(&weights.w).map(|(p, w)| p * w).sum())
}

/// Scalar reward of any model: the single output, or a weighted combination
/// of the five attribute outputs (helpfulness only when no weights are given).
pub fn scalar_reward(
    model: &RewardModelParams,
    weights: Option<&AttributeWeights>,
    features: &[f64],
) -> Result<f64> {
    if model.output_dim() == 1 {
        return model.score(features);
    }
    let preds = model.predict(features)?;
    combine_attributes(&preds, weights.unwrap_or(&AttributeWeights::helpfulness_only()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub weights: AttributeWeights,
    pub overall_accuracy: f64,
    pub candidates_evaluated: usize,
}

/// Grid points on `[-1, 1]` spaced by `step`; `2 / step` must be an integer.
pub fn weight_grid(step: f64) -> Result<Vec<f64>> {
    let n = 2.0 / step;
    if step.is_nan() || step <= 0.0 || !n.is_finite() || (n - n.round()).abs() > 1e-9 {
        return Err(Error::Config(format!("grid step {step} must divide 2 evenly")));
    }
    let n = n.round() as i64;
    Ok((0..=n).map(|i| (2 * i - n) as f64 / n as f64).collect())
}

/// Exhaustive search over attribute weights maximizing bench overall accuracy.
///
/// Candidates are enumerated lexicographically with helpfulness as the most
/// significant coordinate; among equal accuracies the first candidate wins.
pub fn grid_search_weights(
    model: &RewardModelParams,
    bench: &[BenchTask],
    step: f64,
) -> Result<GridSearchResult> {
    if bench.is_empty() {
        return Err(Error::EmptyInput("bench set is empty".into()));
    }
    if model.output_dim != ATTRIBUTE_COUNT {
        return Err(Error::ShapeMismatch("grid search needs a five-attribute model".into()));
    }
    benchharness::check_coverage(bench)?;
    let grid = weight_grid(step)?;
    let base = grid.len();
    let total = base.pow(ATTRIBUTE_COUNT as u32);

    let preds: Vec<(Vec<f64>, Vec<f64>)> = bench
        .iter()
        .map(|t| Ok((model.predict(&t.chosen)?, model.predict(&t.rejected)?)))
        .collect::<Result<_>>()?;

    let decode = |mut idx: usize| {
        let mut w = [0.0; ATTRIBUTE_COUNT];
        for slot in w.iter_mut().rev() {
            *slot = grid[idx % base];
            idx /= base;
        }
        AttributeWeights { w }
    };

    let (best_acc, best_idx) = (0..total)
        .into_par_iter()
        .map(|idx| {
            let weights = decode(idx);
            let mut counts = GroupCounts::default();
            for (task, (c, r)) in bench.iter().zip(&preds) {
                let correct = combine_attributes(c, &weights).expect("five predictions")
                    > combine_attributes(r, &weights).expect("five predictions");
                counts.record(task, correct);
            }
            (counts.report_scores().overall, idx)
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );

    Ok(GridSearchResult {
        weights: decode(best_idx),
        overall_accuracy: best_acc,
        candidates_evaluated: total,
    })
}

/// Weight extrapolation: `weak + alpha * (strong - weak)`, with the head kind
/// of `strong`. `alpha = 0` and `alpha = 1` return exact copies of `weak` and
/// `strong`.
pub fn expo(weak: &RewardModelParams, strong: &RewardModelParams, alpha: f64) -> Result<RewardModelParams> {
    if !weak.same_shape(strong) {
        return Err(Error::ShapeMismatch("weak and strong models differ in shape".into()));
    }
    if !alpha.is_finite() {
        return Err(Error::InvalidValue(format!("extrapolation factor {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(weak.clone());
    }
    if alpha == 1.0 {
        return Ok(strong.clone());
    }
    let values = weak.values.iter().zip(&strong.values).map(|(w, s)| w + alpha * (s - w)).collect();
    Ok(RewardModelParams { values, head_kind: strong.head_kind, ..weak.clone() })
}

/// A held-out preference pair used for validation accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValPair {
    pub chosen: Vec<f64>,
    pub rejected: Vec<f64>,
}

/// Fraction of pairs where the chosen response scores strictly higher.
pub fn pairwise_accuracy(model: &RewardModelParams, pairs: &[ValPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("validation set is empty".into()));
    }
    let mut correct = 0usize;
    for p in pairs {
        if model.score(&p.chosen)? > model.score(&p.rejected)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// Two-stage extrapolation-factor grid: a coarse pass, then a fine pass
/// around the coarse optimum reaching up to one coarse step minus one fine
/// step on either side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpoGrid {
    pub coarse_start: f64,
    pub coarse_stop: f64,
    pub coarse_step: f64,
    pub fine_step: f64,
}

impl Default for ExpoGrid {
    fn default() -> Self {
        Self { coarse_start: 1.1, coarse_stop: 2.0, coarse_step: 0.1, fine_step: 0.01 }
    }
}

impl ExpoGrid {
    /// Returns (fine units per 1.0, coarse alphas in fine units, coarse step in fine units).
    fn units(&self) -> Result<(i64, Vec<i64>, i64)> {
        let per_unit = (1.0 / self.fine_step).round();
        let to_units = |x: f64| (x * per_unit).round() as i64;
        let ok = |x: f64| ((x * per_unit) - (x * per_unit).round()).abs() < 1e-6;
        if self.fine_step.is_nan()
            || self.fine_step <= 0.0
            || ((1.0 / self.fine_step) - per_unit).abs() > 1e-6
            || !ok(self.coarse_start)
            || !ok(self.coarse_stop)
            || !ok(self.coarse_step)
            || self.coarse_step < self.fine_step
            || self.coarse_stop < self.coarse_start
        {
            return Err(Error::Config(format!("invalid extrapolation grid {self:?}")));
        }
        let (start, stop, step) =
            (to_units(self.coarse_start), to_units(self.coarse_stop), to_units(self.coarse_step));
        let coarse = (0..).map(|i| start + i * step).take_while(|&u| u <= stop).collect();
        Ok((per_unit as i64, coarse, step))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpoSearchResult {
    pub alpha: f64,
    pub accuracy: f64,
    /// Every `(alpha, accuracy)` evaluated, coarse pass first.
    pub evaluated: Vec<(f64, f64)>,
    pub params: RewardModelParams,
}

fn best_of(scored: &[(i64, f64)]) -> (i64, f64) {
    scored.iter().copied().fold((i64::MAX, f64::NEG_INFINITY), |best, cur| {
        if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) {
            cur
        } else {
            best
        }
    })
}

/// Searches the extrapolation factor with a caller-supplied validation metric
/// (higher is better). Ties go to the smaller factor, and the fine pass only
/// replaces the coarse optimum when strictly better.
pub fn expo_search_with<F>(
    weak: &RewardModelParams,
    strong: &RewardModelParams,
    grid: &ExpoGrid,
    metric: F,
) -> Result<ExpoSearchResult>
where
    F: Fn(&RewardModelParams) -> Result<f64> + Sync,
{
    let (per_unit, coarse, step) = grid.units()?;
    let alpha_of = |u: i64| u as f64 / per_unit as f64;
    let evaluate = |units: &[i64]| -> Result<Vec<(i64, f64)>> {
        units.par_iter().map(|&u| Ok((u, metric(&expo(weak, strong, alpha_of(u))?)?))).collect()
    };

    let coarse_scores = evaluate(&coarse)?;
    let (coarse_best, coarse_acc) = best_of(&coarse_scores);
    let fine: Vec<i64> =
        (coarse_best - (step - 1)..=coarse_best + (step - 1)).filter(|&u| u != coarse_best).collect();
    let fine_scores = evaluate(&fine)?;
    let (fine_best, fine_acc) = best_of(&fine_scores);
    let (best, accuracy) =
        if fine_acc > coarse_acc { (fine_best, fine_acc) } else { (coarse_best, coarse_acc) };

    let evaluated = coarse_scores.iter().chain(&fine_scores).map(|&(u, a)| (alpha_of(u), a)).collect();
    Ok(ExpoSearchResult {
        alpha: alpha_of(best),
        accuracy,
        evaluated,
        params: expo(weak, strong, alpha_of(best))?,
    })
}

/// Extrapolation-factor search scored by validation pairwise accuracy.
pub fn expo_search(
    weak: &RewardModelParams,
    strong: &RewardModelParams,
    valset: &[ValPair],
    grid: &ExpoGrid,
) -> Result<ExpoSearchResult> {
    if valset.is_empty() {
        return Err(Error::EmptyInput("validation set is empty".into()));
    }
    expo_search_with(weak, strong, grid, |p| pairwise_accuracy(p, valset))
}
