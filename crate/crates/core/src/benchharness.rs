//! Category-weighted chosen-vs-rejected accuracy, RewardBench style.
//!
//! A task counts as correct only when the chosen response scores strictly
//! higher. Reasoning accuracy averages the math and code accuracies so both
//! contribute equally regardless of how many tasks each has; the overall
//! score is the mean of the four category accuracies.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Chat,
    ChatHard,
    Safety,
    Reasoning,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::Chat, Category::ChatHard, Category::Safety, Category::Reasoning];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Chat => "chat",
            Category::ChatHard => "chat_hard",
            Category::Safety => "safety",
            Category::Reasoning => "reasoning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningKind {
    Math,
    Code,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTask {
    #[serde(default)]
    pub prompt: Vec<f64>,
    pub chosen: Vec<f64>,
    pub rejected: Vec<f64>,
    pub category: Category,
    #[serde(default)]
    pub reasoning_kind: ReasoningKind,
}

impl BenchTask {
    pub fn validate(&self) -> Result<()> {
        let is_reasoning = self.category == Category::Reasoning;
        if is_reasoning != (self.reasoning_kind != ReasoningKind::None) {
            return Err(Error::InvalidValue(format!(
                "reasoning_kind {:?} inconsistent with category {}",
                self.reasoning_kind,
                self.category.as_str()
            )));
        }
        if self.chosen.len() != self.rejected.len() {
            return Err(Error::LengthMismatch { expected: self.chosen.len(), actual: self.rejected.len() });
        }
        Ok(())
    }

    fn group(&self) -> usize {
        match (self.category, self.reasoning_kind) {
            (Category::Chat, _) => 0,
            (Category::ChatHard, _) => 1,
            (Category::Safety, _) => 2,
            (Category::Reasoning, ReasoningKind::Math) => 3,
            (Category::Reasoning, _) => 4,
        }
    }
}

pub fn read_bench(path: &Path) -> Result<Vec<BenchTask>> {
    let tasks: Vec<BenchTask> = io::read_jsonl_file(path)?;
    for t in &tasks {
        t.validate()?;
    }
    Ok(tasks)
}

const GROUP_NAMES: [&str; 5] = ["chat", "chat_hard", "safety", "reasoning:math", "reasoning:code"];

/// Fails unless every category is present and reasoning has both math and code.
pub fn check_coverage(tasks: &[BenchTask]) -> Result<()> {
    let mut seen = [false; 5];
    for t in tasks {
        t.validate()?;
        seen[t.group()] = true;
    }
    let missing: Vec<&str> = GROUP_NAMES.iter().zip(seen).filter(|(_, s)| !s).map(|(n, _)| *n).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingCategories(missing.join(", ")))
    }
}

/// Correct/total counts per scoring group: chat, chat_hard, safety, math, code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupCounts {
    pub correct: [usize; 5],
    pub total: [usize; 5],
}

impl GroupCounts {
    pub fn record(&mut self, task: &BenchTask, correct: bool) {
        let g = task.group();
        self.total[g] += 1;
        self.correct[g] += usize::from(correct);
    }

    fn accuracy(&self, g: usize) -> f64 {
        if self.total[g] == 0 {
            0.0
        } else {
            self.correct[g] as f64 / self.total[g] as f64
        }
    }

    pub fn report_scores(&self) -> CategoryScores {
        let math = self.accuracy(3);
        let code = self.accuracy(4);
        let chat = self.accuracy(0);
        let chat_hard = self.accuracy(1);
        let safety = self.accuracy(2);
        let reasoning = 0.5 * math + 0.5 * code;
        CategoryScores {
            chat,
            chat_hard,
            safety,
            reasoning,
            math,
            code,
            overall: (chat + chat_hard + safety + reasoning) / 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    pub chat: f64,
    pub chat_hard: f64,
    pub safety: f64,
    pub reasoning: f64,
    pub math: f64,
    pub code: f64,
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    #[serde(flatten)]
    pub scores: CategoryScores,
    pub n_tasks: usize,
    pub correct: Vec<bool>,
}

impl BenchReport {
    pub fn overall(&self) -> f64 {
        self.scores.overall
    }
}

/// Scores every task with `scorer` and aggregates per category.
pub fn score_bench<F>(scorer: F, tasks: &[BenchTask]) -> Result<BenchReport>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    check_coverage(tasks)?;
    let correct: Vec<bool> =
        tasks.par_iter().map(|t| Ok(scorer(&t.chosen)? > scorer(&t.rejected)?)).collect::<Result<_>>()?;
    let mut counts = GroupCounts::default();
    for (t, &c) in tasks.iter().zip(&correct) {
        counts.record(t, c);
    }
    Ok(BenchReport { scores: counts.report_scores(), n_tasks: tasks.len(), correct })
}
