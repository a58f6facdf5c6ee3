//! Multi-annotator preference data: ingestion, aggregation, filtering,
//! inter-rater agreement and distribution diagnostics.
//!
//! Raw annotator preferences live on a signed 7-option scale. Negative values
//! prefer response 1, positive values prefer response 2, the absolute value is
//! the strength (1 slightly better, 2 better, 3 much better) and `-100` marks
//! "neither response is valid". There is no neutral option.
//!
//! Aggregation keeps the three most similar valid annotations of a task,
//! rounds their mean to the overall preference, and drops tasks whose selected
//! annotations spread by more than two points or whose overall preference is
//! zero.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker value for "Neither response is valid".
pub const INVALID_PREFERENCE: i32 = -100;

/// Largest allowed spread (max - min) among the selected annotations.
pub const MAX_SPREAD: i32 = 2;

/// Number of most similar annotations kept per task.
pub const SUBSET_SIZE: usize = 3;

/// Categories that raw annotator scores can take.
pub const NONZERO_SCALE: [i32; 6] = [-3, -2, -1, 1, 2, 3];

/// Categories of an aggregated overall preference.
pub const FULL_SCALE: [i32; 7] = [-3, -2, -1, 0, 1, 2, 3];

/// One annotator's preference between two responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct PreferenceScore(i32);

impl PreferenceScore {
    pub fn new(value: i32) -> Result<Self> {
        if value == INVALID_PREFERENCE || NONZERO_SCALE.contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::InvalidValue(format!("preference {value} not in {{-3,-2,-1,1,2,3,-100}}")))
        }
    }

    pub fn value(self) -> i32 {
        self.0
    }

    pub fn is_valid(self) -> bool {
        self.0 != INVALID_PREFERENCE
    }
}

impl TryFrom<i32> for PreferenceScore {
    type Error = Error;

    fn try_from(value: i32) -> Result<Self> {
        Self::new(value)
    }
}

impl From<PreferenceScore> for i32 {
    fn from(score: PreferenceScore) -> i32 {
        score.0
    }
}

impl fmt::Display for PreferenceScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Likert-5 ratings of a single response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AttributeRating {
    pub helpfulness: u8,
    pub correctness: u8,
    pub coherence: u8,
    pub complexity: u8,
    pub verbosity: u8,
}

impl AttributeRating {
    pub const NAMES: [&'static str; 5] =
        ["helpfulness", "correctness", "coherence", "complexity", "verbosity"];

    pub fn as_array(&self) -> [u8; 5] {
        [self.helpfulness, self.correctness, self.coherence, self.complexity, self.verbosity]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::NAMES.iter().zip(self.as_array()) {
            if v > 4 {
                return Err(Error::InvalidValue(format!("{name} rating {v} outside [0,4]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotator_id: String,
    pub preference: PreferenceScore,
    pub ratings_1: AttributeRating,
    pub ratings_2: AttributeRating,
    #[serde(default)]
    pub justification: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// A prompt with two responses and every annotator's judgement of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub prompt: String,
    pub response_1: String,
    pub response_2: String,
    pub split: Split,
    pub annotations: Vec<Annotation>,
}

impl AnnotationTask {
    pub fn validate(&self) -> Result<()> {
        if self.annotations.is_empty() {
            return Err(Error::InvalidValue(format!("task {}: annotations must be non-empty", self.task_id)));
        }
        let mut seen = HashSet::new();
        for a in &self.annotations {
            if !seen.insert(a.annotator_id.as_str()) {
                return Err(Error::InvalidValue(format!(
                    "task {}: duplicate annotator_id {}",
                    self.task_id, a.annotator_id
                )));
            }
            a.ratings_1
                .validate()
                .and_then(|_| a.ratings_2.validate())
                .map_err(|e| Error::InvalidValue(format!("task {}: {e}", self.task_id)))?;
        }
        Ok(())
    }

    /// Scores of annotators who did not mark the pair as invalid, in
    /// annotation order.
    pub fn valid_scores(&self) -> Vec<i32> {
        self.annotations.iter().filter(|a| a.preference.is_valid()).map(|a| a.preference.value()).collect()
    }
}

/// Reads and validates a JSON-Lines corpus of annotation tasks.
pub fn read_tasks(path: &Path) -> Result<Vec<AnnotationTask>> {
    let tasks: Vec<AnnotationTask> = crate::io::read_jsonl_file(path)?;
    for t in &tasks {
        t.validate()?;
    }
    Ok(tasks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Chosen {
    #[serde(rename = "response_1")]
    Response1,
    #[serde(rename = "response_2")]
    Response2,
    #[serde(rename = "none")]
    None,
}

impl Chosen {
    pub fn from_sign(value: i32) -> Self {
        match value.signum() {
            -1 => Chosen::Response1,
            1 => Chosen::Response2,
            _ => Chosen::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Kept,
    DroppedSpread,
    DroppedZero,
    DroppedAllInvalid,
}

impl Status {
    pub const ALL: [Status; 4] =
        [Status::Kept, Status::DroppedSpread, Status::DroppedZero, Status::DroppedAllInvalid];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Kept => "kept",
            Status::DroppedSpread => "dropped_spread",
            Status::DroppedZero => "dropped_zero",
            Status::DroppedAllInvalid => "dropped_all_invalid",
        }
    }
}

/// Per-task outcome of aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedPreference {
    pub task_id: String,
    /// Selected subset, sorted ascending. Empty when every annotation was invalid.
    pub used_annotations: Vec<i32>,
    pub overall: i32,
    /// `|overall|`, present whenever `overall != 0`.
    pub magnitude: Option<u8>,
    pub chosen: Chosen,
    pub status: Status,
}

impl AggregatedPreference {
    pub fn is_kept(&self) -> bool {
        self.status == Status::Kept
    }

    pub fn spread(&self) -> Option<i32> {
        spread(&self.used_annotations)
    }
}

fn spread(values: &[i32]) -> Option<i32> {
    let max = values.iter().max()?;
    let min = values.iter().min()?;
    Some(max - min)
}

/// Returns the size-`k` subset of `scores` with the smallest spread.
///
/// Ties on spread are broken by the subset mean closest to the mean of all
/// scores, then by the lexicographically smallest sorted subset. The result is
/// sorted ascending and does not depend on input order. Inputs of size `<= k`
/// are returned whole.
///
/// Candidates are enumerated as multisets over the distinct values, so the
/// cost depends on the number of distinct scores rather than on `C(n, k)`.
pub fn select_most_similar(scores: &[i32], k: usize) -> Result<Vec<i32>> {
    if scores.is_empty() {
        return Err(Error::NoValidAnnotations);
    }
    if k == 0 {
        return Err(Error::InvalidValue("subset size k must be >= 1".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable();
    if sorted.len() <= k {
        return Ok(sorted);
    }

    let mut distinct: Vec<(i32, usize)> = Vec::new();
    for &v in &sorted {
        match distinct.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => distinct.push((v, 1)),
        }
    }

    let search = SubsetSearch {
        distinct: &distinct,
        k,
        n: sorted.len() as i64,
        total: sorted.iter().map(|&v| v as i64).sum(),
    };
    let mut best: Option<SubsetKey> = None;
    let mut current = Vec::with_capacity(k);
    search.enumerate(0, k, &mut current, &mut best);
    Ok(best.expect("at least one subset exists when n > k").subset)
}

/// Ordering key for candidate subsets; smaller is better.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct SubsetKey {
    spread: i32,
    /// `|sum(subset) * n - sum(all) * k|`, proportional to the distance between
    /// the subset mean and the global mean with a shared denominator.
    mean_distance: i64,
    subset: Vec<i32>,
}

struct SubsetSearch<'a> {
    distinct: &'a [(i32, usize)],
    k: usize,
    n: i64,
    total: i64,
}

impl SubsetSearch<'_> {
    fn enumerate(&self, idx: usize, remaining: usize, current: &mut Vec<i32>, best: &mut Option<SubsetKey>) {
        if remaining == 0 {
            let sum: i64 = current.iter().map(|&v| v as i64).sum();
            let key = SubsetKey {
                spread: current[current.len() - 1] - current[0],
                mean_distance: (sum * self.n - self.total * self.k as i64).abs(),
                subset: current.clone(),
            };
            if best.as_ref().is_none_or(|b| key < *b) {
                *best = Some(key);
            }
            return;
        }
        if idx == self.distinct.len() {
            return;
        }
        let (value, count) = self.distinct[idx];
        for take in (0..=count.min(remaining)).rev() {
            current.extend(std::iter::repeat_n(value, take));
            self.enumerate(idx + 1, remaining - take, current, best);
            current.truncate(current.len() - take);
        }
    }
}

/// Integer mean rounded to nearest, halves away from zero.
pub fn round_mean(values: &[i32]) -> i32 {
    let len = values.len() as i64;
    assert!(len > 0, "round_mean of empty slice");
    let sum: i64 = values.iter().map(|&v| v as i64).sum();
    let q = (2 * sum.abs() + len) / (2 * len);
    (sum.signum() * q) as i32
}

/// Aggregates raw scores (which may include `-100`) for one task.
pub fn aggregate_scores(task_id: &str, raw: &[i32]) -> AggregatedPreference {
    let valid: Vec<i32> = raw.iter().copied().filter(|&v| v != INVALID_PREFERENCE).collect();
    if valid.is_empty() {
        return AggregatedPreference {
            task_id: task_id.to_string(),
            used_annotations: Vec::new(),
            overall: 0,
            magnitude: None,
            chosen: Chosen::None,
            status: Status::DroppedAllInvalid,
        };
    }
    let used = select_most_similar(&valid, SUBSET_SIZE).expect("non-empty input");
    let overall = round_mean(&used);
    let status = if spread(&used).unwrap_or(0) > MAX_SPREAD {
        Status::DroppedSpread
    } else if overall == 0 {
        Status::DroppedZero
    } else {
        Status::Kept
    };
    AggregatedPreference {
        task_id: task_id.to_string(),
        used_annotations: used,
        overall,
        magnitude: (overall != 0).then_some(overall.unsigned_abs() as u8),
        chosen: Chosen::from_sign(overall),
        status,
    }
}

pub fn aggregate_task(task: &AnnotationTask) -> AggregatedPreference {
    let raw: Vec<i32> = task.annotations.iter().map(|a| a.preference.value()).collect();
    aggregate_scores(&task.task_id, &raw)
}

/// Aggregates every task; output order follows input order.
pub fn aggregate_all(tasks: &[AnnotationTask]) -> Vec<AggregatedPreference> {
    tasks.par_iter().map(aggregate_task).collect()
}

/// Count of tasks per aggregation status.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropSummary {
    pub total: usize,
    pub kept: usize,
    pub dropped_spread: usize,
    pub dropped_zero: usize,
    pub dropped_all_invalid: usize,
}

impl DropSummary {
    pub fn from_aggregates(aggs: &[AggregatedPreference]) -> Self {
        let mut s = DropSummary { total: aggs.len(), ..Default::default() };
        for a in aggs {
            match a.status {
                Status::Kept => s.kept += 1,
                Status::DroppedSpread => s.dropped_spread += 1,
                Status::DroppedZero => s.dropped_zero += 1,
                Status::DroppedAllInvalid => s.dropped_all_invalid += 1,
            }
        }
        s
    }
}

/// Quadratic-weighted Cohen's kappa over pooled, symmetrized rating pairs.
///
/// Each `(a, b)` contributes both `(a, b)` and `(b, a)` to the observed joint
/// table, so the statistic does not depend on which rater is listed first.
/// Disagreement weights are `(i - j)^2 / (K - 1)^2` over category indices.
/// When the expected disagreement is zero the value is 1 by convention.
pub fn cohens_kappa_quadratic(pairs: &[(i32, i32)], categories: &[i32]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("kappa needs at least one pair".into()));
    }
    if categories.len() < 2 {
        return Err(Error::InvalidValue("kappa needs at least two categories".into()));
    }
    let k = categories.len();
    let index_of = |v: i32| {
        categories
            .iter()
            .position(|&c| c == v)
            .ok_or_else(|| Error::InvalidValue(format!("value {v} not among kappa categories")))
    };

    let mut observed = vec![0.0f64; k * k];
    for &(a, b) in pairs {
        let (i, j) = (index_of(a)?, index_of(b)?);
        observed[i * k + j] += 1.0;
        observed[j * k + i] += 1.0;
    }
    let total = 2.0 * pairs.len() as f64;
    let marginal: Vec<f64> = (0..k).map(|i| observed[i * k..(i + 1) * k].iter().sum::<f64>()).collect();

    let norm = ((k - 1) * (k - 1)) as f64;
    let mut weighted_observed = 0.0;
    let mut weighted_expected = 0.0;
    for i in 0..k {
        for j in 0..k {
            let d = i as f64 - j as f64;
            let w = d * d / norm;
            weighted_observed += w * observed[i * k + j];
            weighted_expected += w * marginal[i] * marginal[j] / total;
        }
    }
    if weighted_expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - weighted_observed / weighted_expected)
}

/// Agreement at the three pre-processing stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa_raw: f64,
    /// After most-similar subset selection and the spread filter; `None` when
    /// no task survives with two or more annotations.
    pub kappa_after_subset: Option<f64>,
    /// Restricted to kept tasks (zero overall preference excluded).
    pub kappa_after_zero_exclusion: Option<f64>,
    /// Co-annotation pairs at the raw stage.
    pub n_pairs: usize,
}

fn unordered_pairs(values: &[i32]) -> impl Iterator<Item = (i32, i32)> + '_ {
    values.iter().enumerate().flat_map(move |(i, &a)| values[i + 1..].iter().map(move |&b| (a, b)))
}

pub fn agreement_report(tasks: &[AnnotationTask]) -> Result<AgreementReport> {
    let per_task: Vec<[Vec<(i32, i32)>; 3]> = tasks
        .par_iter()
        .map(|task| {
            let valid = task.valid_scores();
            let agg = aggregate_scores(&task.task_id, &valid);
            let raw: Vec<_> = unordered_pairs(&valid).collect();
            let subset = match agg.status {
                Status::Kept | Status::DroppedZero => unordered_pairs(&agg.used_annotations).collect(),
                _ => Vec::new(),
            };
            let kept = if agg.is_kept() { subset.clone() } else { Vec::new() };
            [raw, subset, kept]
        })
        .collect();

    let stage =
        |s: usize| -> Vec<(i32, i32)> { per_task.iter().flat_map(|p| p[s].iter().copied()).collect() };
    let raw = stage(0);
    if raw.is_empty() {
        return Err(Error::NoCoAnnotations);
    }
    let subset = stage(1);
    let kept = stage(2);
    let optional = |pairs: &[(i32, i32)], cats: &[i32]| -> Result<Option<f64>> {
        if pairs.is_empty() {
            Ok(None)
        } else {
            cohens_kappa_quadratic(pairs, cats).map(Some)
        }
    };
    Ok(AgreementReport {
        kappa_raw: cohens_kappa_quadratic(&raw, &NONZERO_SCALE)?,
        kappa_after_subset: optional(&subset, &NONZERO_SCALE)?,
        kappa_after_zero_exclusion: optional(&kept, &FULL_SCALE)?,
        n_pairs: raw.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub preference: i32,
    pub count: usize,
}

/// Distribution of overall preferences and their relation to helpfulness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Tasks with at least one valid annotation (zero-preference tasks included).
    pub n_tasks: usize,
    pub histogram: Vec<HistogramBin>,
    pub mean: f64,
    pub stddev: f64,
    pub frac_prefer_response_1: f64,
    pub frac_prefer_response_2: f64,
    pub frac_no_preference: f64,
    /// `frac_prefer_response_2 - frac_prefer_response_1` over tasks.
    pub position_bias: f64,
    /// Same difference measured over individual valid annotations.
    pub annotation_position_bias: f64,
    /// Pearson correlation between overall preference and the difference in
    /// mean helpfulness (response 2 minus response 1). `None` if either side
    /// has zero variance.
    pub pearson_helpfulness: Option<f64>,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn mean_helpfulness_gap(task: &AnnotationTask) -> f64 {
    let n = task.annotations.len() as f64;
    let (h1, h2) = task.annotations.iter().fold((0.0, 0.0), |(h1, h2), a| {
        (h1 + a.ratings_1.helpfulness as f64, h2 + a.ratings_2.helpfulness as f64)
    });
    (h2 - h1) / n
}

pub fn distribution_diagnostics(tasks: &[AnnotationTask]) -> DiagnosticsReport {
    let aggs = aggregate_all(tasks);
    let mut overall = Vec::new();
    let mut gaps = Vec::new();
    for (task, agg) in tasks.iter().zip(&aggs) {
        if agg.status == Status::DroppedAllInvalid {
            continue;
        }
        overall.push(agg.overall as f64);
        gaps.push(mean_helpfulness_gap(task));
    }

    let histogram = FULL_SCALE
        .iter()
        .map(|&p| HistogramBin { preference: p, count: overall.iter().filter(|&&o| o == p as f64).count() })
        .collect();

    let n = overall.len();
    let frac = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
    let mean = if n == 0 { 0.0 } else { overall.iter().sum::<f64>() / n as f64 };
    let variance =
        if n == 0 { 0.0 } else { overall.iter().map(|o| (o - mean) * (o - mean)).sum::<f64>() / n as f64 };
    let prefer_1 = frac(overall.iter().filter(|&&o| o < 0.0).count());
    let prefer_2 = frac(overall.iter().filter(|&&o| o > 0.0).count());

    let (mut ann_1, mut ann_2) = (0usize, 0usize);
    for a in tasks.iter().flat_map(|t| &t.annotations) {
        match a.preference.value() {
            INVALID_PREFERENCE => {}
            v if v < 0 => ann_1 += 1,
            _ => ann_2 += 1,
        }
    }
    let ann_total = ann_1 + ann_2;
    let annotation_position_bias =
        if ann_total == 0 { 0.0 } else { (ann_2 as f64 - ann_1 as f64) / ann_total as f64 };

    DiagnosticsReport {
        n_tasks: n,
        histogram,
        mean,
        stddev: variance.sqrt(),
        frac_prefer_response_1: prefer_1,
        frac_prefer_response_2: prefer_2,
        frac_no_preference: frac(overall.iter().filter(|&&o| o == 0.0).count()),
        position_bias: prefer_2 - prefer_1,
        annotation_position_bias,
        pearson_helpfulness: pearson(&overall, &gaps),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task_with(scores: &[i32]) -> AnnotationTask {
        AnnotationTask {
            task_id: "t".into(),
            prompt: "p".into(),
            response_1: "a".into(),
            response_2: "b".into(),
            split: Split::Train,
            annotations: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| Annotation {
                    annotator_id: format!("ann{i}"),
                    preference: PreferenceScore::new(s).unwrap(),
                    ratings_1: AttributeRating::default(),
                    ratings_2: AttributeRating::default(),
                    justification: String::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn most_similar_worked_examples() {
        assert_eq!(select_most_similar(&[-3, -1, 2, 3], 3).unwrap(), vec![-1, 2, 3]);
        assert_eq!(select_most_similar(&[2, 2, 2], 3).unwrap(), vec![2, 2, 2]);
        assert_eq!(select_most_similar(&[-2, -1, 1, 3], 3).unwrap(), vec![-2, -1, 1]);
        assert_eq!(select_most_similar(&[3, 1], 3).unwrap(), vec![1, 3]);
    }

    #[test]
    fn most_similar_tie_breaks_on_mean_then_lexicographic() {
        // [1,1,2] and [2,3,3] both spread 1; global mean 2, subset means 4/3 and 8/3.
        // Distances tie, so the lexicographically smaller subset wins.
        assert_eq!(select_most_similar(&[1, 1, 2, 3, 3], 3).unwrap(), vec![1, 1, 2]);
        // Global mean 7/3: [2,3,3] (mean 8/3) is closer than [1,1,2] or [3,3,4].
        assert_eq!(select_most_similar(&[4, 1, 3, 1, 2, 3], 3).unwrap(), vec![2, 3, 3]);
    }

    #[test]
    fn most_similar_rejects_empty() {
        assert!(matches!(select_most_similar(&[], 3), Err(Error::NoValidAnnotations)));
    }

    #[test]
    fn aggregate_worked_examples() {
        let a = aggregate_task(&task_with(&[-3, -1, 2, 3]));
        assert_eq!(a.used_annotations, vec![-1, 2, 3]);
        assert_eq!(a.spread(), Some(4));
        assert_eq!(a.status, Status::DroppedSpread);

        let a = aggregate_task(&task_with(&[-1, -1, 1]));
        assert_eq!(a.overall, 0);
        assert_eq!(a.status, Status::DroppedZero);
        assert_eq!(a.chosen, Chosen::None);

        let a = aggregate_task(&task_with(&[2, 2, 3]));
        assert_eq!(a.overall, 2);
        assert_eq!(a.magnitude, Some(2));
        assert_eq!(a.chosen, Chosen::Response2);
        assert_eq!(a.status, Status::Kept);
    }

    #[test]
    fn aggregate_handles_invalid_and_short_lists() {
        let a = aggregate_task(&task_with(&[-100, -100]));
        assert_eq!(a.status, Status::DroppedAllInvalid);
        assert!(a.used_annotations.is_empty());

        // Two valid annotations with a .5 mean round away from zero.
        let a = aggregate_task(&task_with(&[-100, -1, -2]));
        assert_eq!(a.used_annotations, vec![-2, -1]);
        assert_eq!(a.overall, -2);
        assert_eq!(a.chosen, Chosen::Response1);
        assert_eq!(a.status, Status::Kept);
    }

    #[test]
    fn round_mean_halves_away_from_zero() {
        assert_eq!(round_mean(&[1, 2]), 2);
        assert_eq!(round_mean(&[-1, -2]), -2);
        assert_eq!(round_mean(&[2, 3]), 3);
        assert_eq!(round_mean(&[1, -1, 1]), 0);
        assert_eq!(round_mean(&[1, 1, -1]), 0);
        assert_eq!(round_mean(&[1, 1, 2]), 1);
    }

    #[test]
    fn preference_score_validation() {
        assert!(PreferenceScore::new(0).is_err());
        assert!(PreferenceScore::new(4).is_err());
        assert!(PreferenceScore::new(-100).is_ok());
        let parsed: std::result::Result<PreferenceScore, _> = serde_json::from_str("0");
        assert!(parsed.is_err());
    }

    #[test]
    fn task_validation_catches_duplicates_and_ratings() {
        let mut t = task_with(&[1, 2]);
        t.annotations[1].annotator_id = "ann0".into();
        assert!(t.validate().is_err());

        let mut t = task_with(&[1, 2]);
        t.annotations[0].ratings_2.verbosity = 5;
        assert!(t.validate().is_err());

        let mut t = task_with(&[1]);
        t.annotations.clear();
        assert!(t.validate().is_err());
    }

    #[test]
    fn kappa_perfect_agreement() {
        let k = cohens_kappa_quadratic(&[(1, 1), (2, 2), (3, 3)], &[1, 2, 3]).unwrap();
        assert_eq!(k, 1.0);
        // Single category observed: expected disagreement is zero.
        let k = cohens_kappa_quadratic(&[(2, 2), (2, 2)], &NONZERO_SCALE).unwrap();
        assert_eq!(k, 1.0);
    }

    #[test]
    fn kappa_extreme_disagreement_matches_formula() {
        // Symmetrized table: O[-3,3] = O[3,-3] = 2, total 4, marginals 2 and 2.
        // Observed weighted disagreement: 4 * 1 = 4 (weight (5/5)^2 = 1).
        // Expected: E[-3,3] = E[3,-3] = 1 each with weight 1 => 2. kappa = 1 - 4/2 = -1.
        let k = cohens_kappa_quadratic(&[(-3, 3), (3, -3)], &NONZERO_SCALE).unwrap();
        assert!((k + 1.0).abs() < 1e-15, "{k}");
    }

    #[test]
    fn kappa_errors() {
        assert!(cohens_kappa_quadratic(&[], &[1, 2]).is_err());
        assert!(cohens_kappa_quadratic(&[(1, 1)], &[1]).is_err());
        assert!(cohens_kappa_quadratic(&[(1, 5)], &[1, 2]).is_err());
    }

    #[test]
    fn agreement_counts_only_valid_annotators() {
        let report = agreement_report(&[task_with(&[2, 2, 3, -100])]).unwrap();
        assert_eq!(report.n_pairs, 3);
    }

    #[test]
    fn agreement_requires_co_annotations() {
        let err = agreement_report(&[task_with(&[2]), task_with(&[-100, 1])]).unwrap_err();
        assert!(matches!(err, Error::NoCoAnnotations));
    }

    #[test]
    fn agreement_identical_annotators() {
        let tasks: Vec<_> = [1, -2, 3, -1, 2].iter().map(|&s| task_with(&[s, s])).collect();
        let r = agreement_report(&tasks).unwrap();
        assert_eq!(r.kappa_raw, 1.0);
        assert_eq!(r.kappa_after_subset, Some(1.0));
        assert_eq!(r.kappa_after_zero_exclusion, Some(1.0));
        assert_eq!(r.n_pairs, 5);
    }

    #[test]
    fn diagnostics_all_zero_has_no_bias() {
        let tasks = vec![task_with(&[-1, -1, 1, 1]), task_with(&[1, -1])];
        let d = distribution_diagnostics(&tasks);
        assert_eq!(d.frac_no_preference, 1.0);
        assert_eq!(d.position_bias, 0.0);
        assert_eq!(d.pearson_helpfulness, None);
    }

    #[test]
    fn diagnostics_histogram_and_correlation() {
        let mut tasks = vec![task_with(&[2, 2, 2]), task_with(&[-1, -1]), task_with(&[3, 3])];
        for (t, gap) in tasks.iter_mut().zip([2u8, 0, 3]) {
            for a in &mut t.annotations {
                a.ratings_1.helpfulness = 1;
                a.ratings_2.helpfulness = 1 + gap;
            }
        }
        let d = distribution_diagnostics(&tasks);
        assert_eq!(d.n_tasks, 3);
        let counts: Vec<usize> = d.histogram.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![0, 0, 1, 0, 0, 1, 1]);
        assert!((d.mean - 4.0 / 3.0).abs() < 1e-12);
        assert!((d.position_bias - 1.0 / 3.0).abs() < 1e-12);
        let r = d.pearson_helpfulness.unwrap();
        assert!(r > 0.9 && r <= 1.0);
    }
}
