//! Free-text preference justifications.
//!
//! A justification is normalized into a *preference statement* (a sentence
//! naming `@Response 1` or `@Response 2` and the word "better") and a
//! *preference elaboration* (everything else). Justifications without a
//! statement are excluded rather than repaired.

use std::collections::{BTreeMap, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prefdata::{AggregatedPreference, AnnotationTask, Chosen};

/// Tokens ending in '.' that never end a sentence.
const ABBREVIATIONS: [&str; 8] = ["e.g.", "i.e.", "etc.", "vs.", "cf.", "mr.", "mrs.", "dr."];

/// Justifications emitted per task when all of them are requested.
pub const MAX_JUSTIFICATIONS_PER_TASK: usize = 3;

static MENTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(@response\s*)([12])\b").expect("valid regex"));
static BETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bbetter\b").expect("valid regex"));

/// Splits text into sentences on newlines and on `.`, `!` or `?` followed by
/// whitespace and an uppercase letter or `@`. Sentences are trimmed and empty
/// ones dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let mut start = 0usize;
        for (pos, &(byte, c)) in chars.iter().enumerate() {
            if !matches!(c, '.' | '!' | '?') {
                continue;
            }
            let end = byte + c.len_utf8();
            let mut next = pos + 1;
            if next >= chars.len() || !chars[next].1.is_whitespace() {
                continue;
            }
            while next < chars.len() && chars[next].1.is_whitespace() {
                next += 1;
            }
            let Some(&(_, following)) = chars.get(next) else {
                continue;
            };
            if !(following.is_uppercase() || following == '@') {
                continue;
            }
            if c == '.' && ends_with_abbreviation(&line[start..end]) {
                continue;
            }
            push_trimmed(&mut out, &line[start..end]);
            start = end;
        }
        push_trimmed(&mut out, &line[start..]);
    }
    out
}

fn ends_with_abbreviation(segment: &str) -> bool {
    let word = segment
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// A located preference statement inside one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct StatementMatch {
    /// Byte offset of the first `@Response` mention.
    start: usize,
    preferred: Chosen,
}

/// Finds the first "better" preceded by a response mention; the preferred
/// response is the mention nearest before it.
fn find_statement(sentence: &str) -> Option<StatementMatch> {
    let mentions: Vec<(usize, Chosen)> = MENTION
        .captures_iter(sentence)
        .map(|c| {
            let side = if &c[2] == "1" { Chosen::Response1 } else { Chosen::Response2 };
            (c.get(0).expect("whole match").start(), side)
        })
        .collect();
    let first = mentions.first()?.0;
    BETTER.find_iter(sentence).find_map(|b| {
        mentions
            .iter()
            .rev()
            .find(|(pos, _)| *pos < b.start())
            .map(|&(_, preferred)| StatementMatch { start: first, preferred })
    })
}

pub fn is_statement(sentence: &str) -> bool {
    find_statement(sentence).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourcePosition {
    First,
    Last,
    Both,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedJustification {
    pub statement: String,
    pub elaboration: String,
    pub source_position: SourcePosition,
    /// Response named by the statement; `Chosen::None` when excluded.
    pub preferred: Chosen,
}

impl ParsedJustification {
    pub fn is_excluded(&self) -> bool {
        self.source_position == SourcePosition::None
    }

    /// Elaboration followed by statement, space separated.
    pub fn full_text(&self) -> String {
        if self.elaboration.is_empty() {
            self.statement.clone()
        } else {
            format!("{} {}", self.elaboration, self.statement)
        }
    }
}

pub fn parse_justification(text: &str) -> ParsedJustification {
    let sentences = split_sentences(text);
    let n = sentences.len();
    let first = sentences.first().and_then(|s| find_statement(s));
    let last = if n > 1 { find_statement(&sentences[n - 1]) } else { None };

    match (first, last) {
        (Some(m), last) => {
            // A duplicate trailing statement is dropped.
            let body_end = if last.is_some() { n - 1 } else { n };
            ParsedJustification {
                statement: sentences[0].clone(),
                elaboration: sentences[1..body_end].join(" "),
                source_position: if last.is_some() { SourcePosition::Both } else { SourcePosition::First },
                preferred: m.preferred,
            }
        }
        (None, Some(m)) => ParsedJustification {
            statement: sentences[n - 1][m.start..].to_string(),
            elaboration: sentences[..n - 1].join(" "),
            source_position: SourcePosition::Last,
            preferred: m.preferred,
        },
        (None, None) => ParsedJustification {
            statement: String::new(),
            elaboration: sentences.join(" "),
            source_position: SourcePosition::None,
            preferred: Chosen::None,
        },
    }
}

/// Attribute keyword lists used for word-level justification analysis.
pub fn default_lexicon() -> BTreeMap<String, Vec<String>> {
    let groups: [(&str, &[&str]); 5] = [
        ("helpfulness", &["help", "helpful", "helpfulness", "instruction", "unhelpful", "useful"]),
        (
            "correctness",
            &[
                "accurate",
                "accurately",
                "complete",
                "correct",
                "factual",
                "informative",
                "error",
                "false",
                "inaccurate",
                "incomplete",
                "incorrect",
                "incorrectly",
                "misses",
                "missing",
                "wrong",
                "completeness",
                "correctness",
                "fact",
                "information",
                "understand",
                "understanding",
            ],
        ),
        (
            "coherence",
            &[
                "clear",
                "clearer",
                "direct",
                "directly",
                "relevant",
                "confusing",
                "irrelevant",
                "redundant",
                "repeats",
                "repetitive",
                "unclear",
                "unnecessary",
                "vague",
                "clarity",
                "coherence",
                "structure",
                "bulleted",
                "format",
                "formatted",
                "list",
                "listed",
                "numbered",
                "outline",
            ],
        ),
        ("complexity", &["basic", "depth", "difficult", "easier", "easy", "simple", "simply"]),
        (
            "verbosity",
            &[
                "brief",
                "concise",
                "short",
                "shorter",
                "succinct",
                "comprehensive",
                "detailed",
                "long",
                "longer",
                "thorough",
                "verbose",
                "detail",
                "details",
                "length",
                "verbosity",
            ],
        ),
    ];
    groups
        .iter()
        .map(|(attr, words)| (attr.to_string(), words.iter().map(|w| w.to_string()).collect()))
        .collect()
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Fraction of justifications mentioning at least one keyword of each attribute.
pub fn keyword_analysis(
    justifications: &[String],
    lexicon: &BTreeMap<String, Vec<String>>,
) -> Result<BTreeMap<String, f64>> {
    if justifications.is_empty() {
        return Err(Error::EmptyInput("keyword analysis needs at least one justification".into()));
    }
    let token_sets: Vec<std::collections::HashSet<String>> =
        justifications.iter().map(|j| tokenize(j).into_iter().collect()).collect();
    let n = justifications.len() as f64;
    Ok(lexicon
        .iter()
        .map(|(attr, words)| {
            let hits = token_sets
                .iter()
                .filter(|tokens| words.iter().any(|w| tokens.contains(&w.to_lowercase())))
                .count();
            (attr.clone(), hits as f64 / n)
        })
        .collect())
}

pub fn render_input(prompt: &str, response_1: &str, response_2: &str) -> String {
    format!(
        "{prompt} @Response 1:\n{response_1}\n@Response 2:\n{response_2}\nBetween @Response 1 and @Response 2, which is better?"
    )
}

/// Swaps every `@Response 1` / `@Response 2` mention, preserving the original
/// spelling of the prefix.
pub fn swap_response_mentions(text: &str) -> String {
    MENTION
        .replace_all(text, |c: &regex::Captures| {
            let digit = if &c[2] == "1" { "2" } else { "1" };
            format!("{}{digit}", &c[1])
        })
        .into_owned()
}

/// One supervised example for a judge-style pairwise model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JustifierExample {
    pub task_id: String,
    pub prompt: String,
    pub response_1: String,
    pub response_2: String,
    pub target: String,
    pub label: Chosen,
    pub flipped: bool,
}

impl JustifierExample {
    /// Response-swapped copy. Applying it twice restores the original.
    pub fn flip(&self) -> Self {
        Self {
            task_id: self.task_id.clone(),
            prompt: self.prompt.clone(),
            response_1: self.response_2.clone(),
            response_2: self.response_1.clone(),
            target: swap_response_mentions(&self.target),
            label: match self.label {
                Chosen::Response1 => Chosen::Response2,
                Chosen::Response2 => Chosen::Response1,
                Chosen::None => Chosen::None,
            },
            flipped: !self.flipped,
        }
    }

    pub fn to_record(&self) -> SftRecord {
        SftRecord {
            input: render_input(&self.prompt, &self.response_1, &self.response_2),
            target: self.target.clone(),
            label: self.label,
            task_id: self.task_id.clone(),
            flipped: self.flipped,
        }
    }
}

/// Serialized SFT record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub input: String,
    pub target: String,
    pub label: Chosen,
    pub task_id: String,
    pub flipped: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JustifierOptions {
    pub flip: bool,
    pub all_justifications: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JustifierStats {
    pub kept_tasks: usize,
    pub tasks_with_records: usize,
    pub justifications_seen: usize,
    pub justifications_excluded: usize,
    pub exclusion_fraction: f64,
    pub records: usize,
}

/// Builds justifier examples from kept tasks.
///
/// A justification is eligible when its annotator's preference has the same
/// sign as the task's overall preference and its parsed statement names the
/// chosen response. The first eligible one is used, or up to
/// [`MAX_JUSTIFICATIONS_PER_TASK`] with `all_justifications`. Exclusion stats
/// cover every justification of kept tasks.
pub fn build_justifier_examples(
    tasks: &[AnnotationTask],
    aggregated: &[AggregatedPreference],
    options: JustifierOptions,
) -> (Vec<JustifierExample>, JustifierStats) {
    let by_id: HashMap<&str, &AggregatedPreference> =
        aggregated.iter().map(|a| (a.task_id.as_str(), a)).collect();
    let limit = if options.all_justifications { MAX_JUSTIFICATIONS_PER_TASK } else { 1 };
    let mut stats = JustifierStats::default();
    let mut examples = Vec::new();

    for task in tasks {
        let Some(agg) = by_id.get(task.task_id.as_str()).filter(|a| a.is_kept()) else {
            continue;
        };
        stats.kept_tasks += 1;
        let mut taken = 0;
        for ann in &task.annotations {
            if !ann.preference.is_valid() {
                continue;
            }
            let parsed = parse_justification(&ann.justification);
            stats.justifications_seen += 1;
            if parsed.is_excluded() {
                stats.justifications_excluded += 1;
                continue;
            }
            let same_direction = ann.preference.value().signum() == agg.overall.signum();
            if taken < limit && same_direction && parsed.preferred == agg.chosen {
                let example = JustifierExample {
                    task_id: task.task_id.clone(),
                    prompt: task.prompt.clone(),
                    response_1: task.response_1.clone(),
                    response_2: task.response_2.clone(),
                    target: parsed.full_text(),
                    label: agg.chosen,
                    flipped: false,
                };
                if options.flip {
                    let flipped = example.flip();
                    examples.push(example);
                    examples.push(flipped);
                } else {
                    examples.push(example);
                }
                taken += 1;
            }
        }
        if taken > 0 {
            stats.tasks_with_records += 1;
        }
    }
    stats.records = examples.len();
    stats.exclusion_fraction = if stats.justifications_seen == 0 {
        0.0
    } else {
        stats.justifications_excluded as f64 / stats.justifications_seen as f64
    };
    (examples, stats)
}

pub fn build_justifier_records(
    tasks: &[AnnotationTask],
    aggregated: &[AggregatedPreference],
    options: JustifierOptions,
) -> (Vec<SftRecord>, JustifierStats) {
    let (examples, stats) = build_justifier_examples(tasks, aggregated, options);
    (examples.iter().map(JustifierExample::to_record).collect(), stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    #[serde(rename = "response_1")]
    Response1,
    #[serde(rename = "response_2")]
    Response2,
    Unparseable,
}

impl From<Chosen> for Verdict {
    fn from(c: Chosen) -> Self {
        match c {
            Chosen::Response1 => Verdict::Response1,
            Chosen::Response2 => Verdict::Response2,
            Chosen::None => Verdict::Unparseable,
        }
    }
}

/// Reads the verdict of generated judge text. The last statement wins.
pub fn extract_preference_label(generated: &str) -> Verdict {
    split_sentences(generated)
        .iter()
        .rev()
        .find_map(|s| find_statement(s))
        .map_or(Verdict::Unparseable, |m| m.preferred.into())
}
