//! Instance selection and process-label extraction from verified expert
//! trajectories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::reward::{exact_match, fuzzy_sim};
use crate::text::{fold_whitespace, normalize_label, split_items};
use crate::trajectory::{extract_final_answer, extract_judgement, parse_trajectory, ParseMode, Trajectory};

/// Default similarity at which two pattern labels are treated as the same.
pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotationError {
    #[error("instance {0}: no expert trajectory")]
    MissingExpert(String),
    #[error("instance {id}: expert trajectory is malformed ({violations} violations)")]
    MalformedTrajectory { id: String, violations: usize },
    #[error("instance {id}: expert answer {expert:?} does not match ground truth {truth:?}")]
    UnverifiedExpert { id: String, expert: Option<String>, truth: String },
    #[error("keyword rule for {0} has no keywords")]
    EmptyKeywords(TaskName),
    #[error("task {name} does not belong to category {category}")]
    CategoryMismatch { name: TaskName, category: TaskCategory },
    #[error("rule file: {0}")]
    RuleFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskCategory {
    Scenario,
    Knowledge,
}

impl fmt::Display for TaskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskCategory::Scenario => "scenario",
            TaskCategory::Knowledge => "knowledge",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskName {
    AnomalyDetection,
    ScenarioAttribution,
    InferentialCalculation,
    #[serde(rename = "CTU")]
    Ctu,
    #[serde(rename = "ECG")]
    Ecg,
    #[serde(rename = "EMG")]
    Emg,
    #[serde(rename = "RCW")]
    Rcw,
    #[serde(rename = "other")]
    Other,
}

impl TaskName {
    /// Category implied by the task, `None` for `other`.
    pub fn category(self) -> Option<TaskCategory> {
        use TaskName::*;
        match self {
            AnomalyDetection | ScenarioAttribution | InferentialCalculation => Some(TaskCategory::Scenario),
            Ctu | Ecg | Emg | Rcw => Some(TaskCategory::Knowledge),
            Other => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        use TaskName::*;
        match self {
            AnomalyDetection => "AnomalyDetection",
            ScenarioAttribution => "ScenarioAttribution",
            InferentialCalculation => "InferentialCalculation",
            Ctu => "CTU",
            Ecg => "ECG",
            Emg => "EMG",
            Rcw => "RCW",
            Other => "other",
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerKind {
    Boolean,
    Choice,
    Numeric,
    #[default]
    Freetext,
}

/// Task identity. Construction checks that the category agrees with the name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTaskKind")]
pub struct TaskKind {
    pub category: TaskCategory,
    pub name: TaskName,
    pub answer_kind: AnswerKind,
}

#[derive(Deserialize)]
struct RawTaskKind {
    category: TaskCategory,
    name: TaskName,
    answer_kind: AnswerKind,
}

impl TryFrom<RawTaskKind> for TaskKind {
    type Error = AnnotationError;
    fn try_from(r: RawTaskKind) -> Result<Self, Self::Error> {
        TaskKind::new(r.category, r.name, r.answer_kind)
    }
}

impl TaskKind {
    pub fn new(category: TaskCategory, name: TaskName, answer_kind: AnswerKind) -> Result<Self, AnnotationError> {
        match name.category() {
            Some(c) if c != category => Err(AnnotationError::CategoryMismatch { name, category }),
            _ => Ok(Self { category, name, answer_kind }),
        }
    }

    /// Task with its implied category. Panics for `TaskName::Other`, whose
    /// category must be given explicitly.
    pub fn of(name: TaskName, answer_kind: AnswerKind) -> Self {
        let category = name.category().expect("task name with an implied category");
        Self { category, name, answer_kind }
    }
}

/// One dataset record. `expert_trajectory` is (de)serialized as raw text and
/// parsed leniently on load; its `well_formed` flag keeps the strict verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub task: TaskKind,
    pub question: String,
    #[serde(default)]
    pub series: Vec<f64>,
    #[serde(
        default,
        serialize_with = "ser_trajectory",
        deserialize_with = "de_trajectory",
        skip_serializing_if = "Option::is_none"
    )]
    pub expert_trajectory: Option<Trajectory>,
    pub ground_truth: String,
}

fn ser_trajectory<S: Serializer>(t: &Option<Trajectory>, s: S) -> Result<S::Ok, S::Error> {
    match t {
        Some(t) => s.serialize_str(&t.raw_text),
        None => s.serialize_none(),
    }
}

fn de_trajectory<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Trajectory>, D::Error> {
    let raw: Option<String> = Option::deserialize(d)?;
    Ok(raw.map(|text| parse_trajectory(&text, ParseMode::Lenient).0))
}

/// Ground-truth bundle for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawLabelSet")]
pub struct LabelSet {
    /// Final ground-truth answer.
    pub final_answer: String,
    /// Target for the step-1 judgement.
    pub intent_label: String,
    /// Normalized key patterns.
    pub pattern_set: BTreeSet<String>,
    /// Target for the step-4 judgement.
    pub align_label: String,
    /// Target for the step-6 judgement.
    pub verify_label: String,
    /// How answers are compared against the labels.
    pub answer_kind: AnswerKind,
}

#[derive(Deserialize)]
struct RawLabelSet {
    final_answer: String,
    #[serde(default)]
    intent_label: String,
    #[serde(default)]
    pattern_set: Vec<String>,
    align_label: Option<String>,
    verify_label: Option<String>,
    #[serde(default)]
    answer_kind: AnswerKind,
}

impl From<RawLabelSet> for LabelSet {
    fn from(r: RawLabelSet) -> Self {
        LabelSet {
            align_label: r.align_label.unwrap_or_else(|| r.final_answer.clone()),
            verify_label: r.verify_label.unwrap_or_else(|| r.final_answer.clone()),
            final_answer: r.final_answer,
            intent_label: r.intent_label,
            pattern_set: normalize_patterns(r.pattern_set.iter().map(String::as_str)),
            answer_kind: r.answer_kind,
        }
    }
}

impl LabelSet {
    /// Labels whose step-4/6 targets default to the final answer.
    pub fn new(
        final_answer: impl Into<String>,
        intent_label: impl Into<String>,
        patterns: impl IntoIterator<Item = impl AsRef<str>>,
        answer_kind: AnswerKind,
    ) -> Self {
        let final_answer = final_answer.into();
        let patterns: Vec<String> = patterns.into_iter().map(|p| p.as_ref().to_string()).collect();
        LabelSet {
            align_label: final_answer.clone(),
            verify_label: final_answer.clone(),
            intent_label: intent_label.into(),
            pattern_set: normalize_patterns(patterns.iter().map(String::as_str)),
            final_answer,
            answer_kind,
        }
    }
}

/// LabelSet JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    #[serde(flatten)]
    pub labels: LabelSet,
}

fn normalize_patterns<'a>(items: impl Iterator<Item = &'a str>) -> BTreeSet<String> {
    items.map(normalize_label).filter(|p| !p.is_empty()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchScope {
    #[default]
    Question,
    QuestionAndAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KeywordRule {
    pub task: TaskName,
    keywords: BTreeSet<String>,
    pub scope: MatchScope,
}

impl KeywordRule {
    pub fn new(
        task: TaskName,
        keywords: impl IntoIterator<Item = impl AsRef<str>>,
        scope: MatchScope,
    ) -> Result<Self, AnnotationError> {
        let keywords: BTreeSet<String> = keywords
            .into_iter()
            .map(|k| fold_whitespace(k.as_ref()))
            .filter(|k| !k.is_empty())
            .collect();
        if keywords.is_empty() {
            return Err(AnnotationError::EmptyKeywords(task));
        }
        Ok(Self { task, keywords, scope })
    }

    pub fn keywords(&self) -> &BTreeSet<String> {
        &self.keywords
    }

    fn matches(&self, inst: &Instance) -> bool {
        let text = match self.scope {
            MatchScope::Question => fold_whitespace(&inst.question),
            MatchScope::QuestionAndAnswer => fold_whitespace(&format!("{} {}", inst.question, inst.ground_truth)),
        };
        self.keywords.iter().any(|k| contains_word(&text, k))
    }
}

/// Anomaly-detection terms used when no rule file is given.
pub fn default_rules() -> Vec<KeywordRule> {
    vec![KeywordRule::new(
        TaskName::AnomalyDetection,
        ["anomalous", "anomalies", "extreme"],
        MatchScope::Question,
    )
    .expect("non-empty keyword list")]
}

#[derive(Deserialize)]
struct RuleFile {
    #[serde(default)]
    rules: BTreeMap<TaskName, RuleEntry>,
}

#[derive(Deserialize)]
struct RuleEntry {
    keywords: Vec<String>,
    #[serde(default)]
    scope: MatchScope,
}

/// Parses a TOML rule file:
///
/// ```toml
/// [rules.AnomalyDetection]
/// keywords = ["anomalous", "anomalies", "extreme"]
/// scope = "question"
/// ```
pub fn parse_rules(toml_text: &str) -> Result<Vec<KeywordRule>, AnnotationError> {
    let file: RuleFile = toml::from_str(toml_text).map_err(|e| AnnotationError::RuleFile(e.to_string()))?;
    file.rules
        .into_iter()
        .map(|(task, entry)| KeywordRule::new(task, entry.keywords, entry.scope))
        .collect()
}

/// Case-folded substring match anchored on word boundaries.
fn contains_word(haystack: &str, needle: &str) -> bool {
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    haystack.match_indices(needle).any(|(i, m)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + m.len()..].chars().next();
        !before.is_some_and(is_word) && !after.is_some_and(is_word)
    })
}

/// Keeps instances whose scoped text contains at least one rule keyword.
/// Instances of tasks without any rule pass through unchanged.
pub fn select_instances(pool: &[Instance], rules: &[KeywordRule]) -> Vec<Instance> {
    pool.iter()
        .filter(|inst| {
            let mut applicable = rules.iter().filter(|r| r.task == inst.task.name).peekable();
            if applicable.peek().is_none() {
                log::debug!("instance {}: no rule for task {}, kept", inst.id, inst.task.name);
                return true;
            }
            applicable.any(|r| r.matches(inst))
        })
        .cloned()
        .collect()
}

/// Derives process labels from a verified expert trajectory.
pub fn extract_label_set(inst: &Instance) -> Result<LabelSet, AnnotationError> {
    let expert = inst
        .expert_trajectory
        .as_ref()
        .ok_or_else(|| AnnotationError::MissingExpert(inst.id.clone()))?;
    if !expert.well_formed {
        let (_, report) = parse_trajectory(&expert.raw_text, ParseMode::Strict);
        return Err(AnnotationError::MalformedTrajectory {
            id: inst.id.clone(),
            violations: report.violations.len(),
        });
    }
    let kind = inst.task.answer_kind;
    let expert_answer = extract_final_answer(expert);
    if !expert_answer.is_some_and(|a| exact_match(a, &inst.ground_truth, kind)) {
        return Err(AnnotationError::UnverifiedExpert {
            id: inst.id.clone(),
            expert: expert_answer.map(str::to_string),
            truth: inst.ground_truth.clone(),
        });
    }
    let intent = extract_judgement(expert, 1).ok().flatten().unwrap_or_default();
    let patterns = extract_judgement(expert, 2)
        .ok()
        .flatten()
        .map(split_items)
        .unwrap_or_default();
    Ok(LabelSet::new(inst.ground_truth.trim(), intent, patterns, kind))
}

/// Normalized union; near-duplicates at or above `threshold` collapse to the
/// shorter string.
pub fn merge_pattern_sets(
    extracted: &BTreeSet<String>,
    external: &BTreeSet<String>,
    threshold: f64,
) -> BTreeSet<String> {
    let mut all: Vec<String> = normalize_patterns(extracted.iter().chain(external).map(String::as_str))
        .into_iter()
        .collect();
    all.sort_by(|a, b| a.chars().count().cmp(&b.chars().count()).then_with(|| a.cmp(b)));
    let mut kept: Vec<String> = Vec::new();
    for p in all {
        if !kept.iter().any(|k| fuzzy_sim::<f64>(k, &p) >= threshold) {
            kept.push(p);
        }
    }
    kept.into_iter().collect()
}
