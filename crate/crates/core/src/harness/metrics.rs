//! Batch scoring and evaluation metrics.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::TrajectoryRecord;
use super::HarnessError;
use crate::annotation::{Instance, LabelRecord};
use crate::numeric::Scalar;
use crate::reward::{total_reward_with_length, RewardBreakdown, RewardConfig};
use crate::trajectory::{parse_trajectory, token_count, ParseMode, Tokenizer};

/// Scored-output JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRollout<T> {
    pub id: String,
    pub rollout_index: usize,
    pub breakdown: RewardBreakdown<T>,
    pub total: T,
}

/// Numbers trajectories within each id in order of appearance.
pub fn rollout_indices(trajectories: &[TrajectoryRecord]) -> Vec<usize> {
    let mut next: HashMap<&str, usize> = HashMap::new();
    trajectories
        .iter()
        .map(|t| {
            let n = next.entry(t.id.as_str()).or_insert(0);
            *n += 1;
            *n - 1
        })
        .collect()
}

/// Scores every trajectory against its instance's labels. Output order
/// follows `trajectories`.
pub fn score_corpus<T: Scalar>(
    instances: &[Instance],
    trajectories: &[TrajectoryRecord],
    labels: &[LabelRecord],
    cfg: &RewardConfig<T>,
) -> Result<Vec<ScoredRollout<T>>, HarnessError> {
    let known: HashMap<&str, &Instance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let label_by_id: HashMap<&str, &LabelRecord> = labels.iter().map(|l| (l.id.as_str(), l)).collect();
    if let Some(t) = trajectories
        .iter()
        .find(|t| !known.contains_key(t.id.as_str()) || !label_by_id.contains_key(t.id.as_str()))
    {
        return Err(HarnessError::IdMismatch(t.id.clone()));
    }
    let tokenizer: Tokenizer = cfg.tokenizer.into();
    let indices = rollout_indices(trajectories);
    Ok(trajectories
        .par_iter()
        .zip(indices.par_iter())
        .map(|(rec, &rollout_index)| {
            let (t, _) = parse_trajectory(&rec.raw_text, ParseMode::Lenient);
            let tokens = rec.token_count.unwrap_or_else(|| token_count(&rec.raw_text, &tokenizer));
            let breakdown = total_reward_with_length(&t, &label_by_id[rec.id.as_str()].labels, cfg, tokens);
            ScoredRollout {
                id: rec.id.clone(),
                rollout_index,
                total: breakdown.total,
                breakdown,
            }
        })
        .collect())
}

/// A rate in `[0, 1]` with its two-decimal percentage rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub percent: String,
    pub count: usize,
    pub total: usize,
}

impl Rate {
    pub fn new(count: usize, total: usize) -> Self {
        let value = count as f64 / total as f64;
        Self {
            value,
            percent: format_percent(value * 100.0),
            count,
            total,
        }
    }
}

pub fn format_percent(p: f64) -> String {
    format!("{p:.2}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAccuracies {
    pub intent: Rate,
    pub pattern: Rate,
    pub align: Rate,
    pub verify: Rate,
}

/// Fraction of rollouts scoring the positive branch of each process reward.
pub fn step_accuracy<T: Scalar>(breakdowns: &[RewardBreakdown<T>]) -> Result<StepAccuracies, HarnessError> {
    if breakdowns.is_empty() {
        return Err(HarnessError::EmptyInput("breakdowns"));
    }
    let n = breakdowns.len();
    let count = |f: &dyn Fn(&RewardBreakdown<T>) -> bool| breakdowns.iter().filter(|b| f(b)).count();
    Ok(StepAccuracies {
        intent: Rate::new(count(&|b| b.r_intent > T::zero()), n),
        pattern: Rate::new(count(&|b| b.match_count >= 1), n),
        align: Rate::new(count(&|b| b.r_align > T::zero()), n),
        verify: Rate::new(count(&|b| b.r_verify > T::zero()), n),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub mean: f64,
    pub count: usize,
    pub total_tokens: usize,
}

/// Mean token count per task. Records carrying `token_count` use it
/// instead of the tokenizer.
pub fn token_report(trajectories: &[TrajectoryRecord], tokenizer: &Tokenizer) -> BTreeMap<String, TokenStats> {
    let mut acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for t in trajectories {
        let tokens = t.token_count.unwrap_or_else(|| token_count(&t.raw_text, tokenizer));
        let e = acc.entry(t.task.clone()).or_default();
        e.0 += tokens;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(task, (total, count))| {
            (
                task,
                TokenStats {
                    mean: total as f64 / count as f64,
                    count,
                    total_tokens: total,
                },
            )
        })
        .collect()
}

/// Signed relative change from `baseline` to `treated`, in percent. A drop
/// from 2192.46 to 632.67 gives -71.14.
pub fn reduction_percent(baseline: f64, treated: f64) -> f64 {
    (treated / baseline - 1.0) * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenReduction {
    pub baseline_mean: f64,
    pub treated_mean: f64,
    pub change: f64,
    pub percent: String,
}

impl TokenReduction {
    pub fn new(baseline_mean: f64, treated_mean: f64) -> Self {
        let change = reduction_percent(baseline_mean, treated_mean);
        Self {
            baseline_mean,
            treated_mean,
            change,
            percent: format!("{}%", format_percent(change)),
        }
    }
}

/// Judge output line: integer scores 1..=5 per named dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRecord {
    pub scores: BTreeMap<String, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overall_comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeStat {
    pub mean: f64,
    pub count: usize,
}

/// Arithmetic mean per dimension over the records that score it.
pub fn aggregate_judge_scores(records: &[JudgeRecord]) -> Result<BTreeMap<String, JudgeStat>, HarnessError> {
    let mut acc: BTreeMap<String, (i64, usize)> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        for (dim, &score) in &r.scores {
            if !(1..=5).contains(&score) {
                return Err(HarnessError::ScoreOutOfRange {
                    record: i,
                    dimension: dim.clone(),
                    score,
                });
            }
            let e = acc.entry(dim.clone()).or_default();
            e.0 += score;
            e.1 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(dim, (sum, count))| {
            (
                dim,
                JudgeStat {
                    mean: sum as f64 / count as f64,
                    count,
                },
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Final-answer accuracy per task name.
    pub accuracy: BTreeMap<String, Rate>,
    pub step_accuracies: StepAccuracies,
    pub avg_tokens: BTreeMap<String, TokenStats>,
    pub rollouts: usize,
    pub instances: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_reduction: Option<TokenReduction>,
}

fn overall_mean(stats: &BTreeMap<String, TokenStats>) -> Option<f64> {
    let (total, count) = stats
        .values()
        .fold((0usize, 0usize), |(t, c), s| (t + s.total_tokens, c + s.count));
    (count > 0).then(|| total as f64 / count as f64)
}

/// Accuracy, step-wise accuracy and token statistics over a scored corpus.
/// `baseline` trajectories, when given, add an overall token-reduction figure.
pub fn build_metrics<T: Scalar>(
    instances: &[Instance],
    trajectories: &[TrajectoryRecord],
    scored: &[ScoredRollout<T>],
    tokenizer: &Tokenizer,
    baseline: Option<&[TrajectoryRecord]>,
) -> Result<MetricsReport, HarnessError> {
    let task_of: HashMap<&str, String> = instances
        .iter()
        .map(|i| (i.id.as_str(), i.task.name.to_string()))
        .collect();
    let mut correct: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for s in scored {
        let task = task_of
            .get(s.id.as_str())
            .ok_or_else(|| HarnessError::IdMismatch(s.id.clone()))?;
        let e = correct.entry(task.clone()).or_default();
        e.0 += usize::from(s.breakdown.r_hard > T::zero());
        e.1 += 1;
    }
    let breakdowns: Vec<RewardBreakdown<T>> = scored.iter().map(|s| s.breakdown).collect();
    let avg_tokens = token_report(trajectories, tokenizer);
    let token_reduction = match baseline {
        Some(b) => {
            let base = overall_mean(&token_report(b, tokenizer));
            base.zip(overall_mean(&avg_tokens)).map(|(b, t)| TokenReduction::new(b, t))
        }
        None => None,
    };
    let distinct: std::collections::BTreeSet<&str> = scored.iter().map(|s| s.id.as_str()).collect();
    Ok(MetricsReport {
        accuracy: correct
            .into_iter()
            .map(|(task, (c, n))| (task, Rate::new(c, n)))
            .collect(),
        step_accuracies: step_accuracy(&breakdowns)?,
        avg_tokens,
        rollouts: scored.len(),
        instances: distinct.len(),
        token_reduction,
    })
}
