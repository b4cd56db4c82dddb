//! Difficulty-aware allocation of instances to warmup, SFT and RL stages.
//!
//! Knowledge-category tasks are hard by taxonomy. Scenario tasks are graded
//! by a warmed-up model: instances it answers correctly go to supervised
//! fine-tuning, the rest to RL.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnswerKind, Instance, TaskCategory};
use crate::reward::exact_match;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("warmup fraction {0} outside (0, 1]")]
    FractionOutOfRange(f64),
    #[error("no evaluation record for instance {0}")]
    MissingRecord(String),
    #[error("more than one evaluation record for instance {0}")]
    DuplicateRecord(String),
    #[error("evaluation record references unknown instance {0}")]
    UnknownRecord(String),
    #[error("strategy {0:?} needs evaluation records for scenario instances")]
    StrategyInputMissing(Strategy),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub instance_id: String,
    pub predicted: String,
    pub correct: bool,
    /// Optional external difficulty score (perplexity, IFD, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl EvaluationRecord {
    /// Record whose correctness is computed by answer comparison.
    pub fn graded(instance_id: impl Into<String>, predicted: impl Into<String>, truth: &str, kind: AnswerKind) -> Self {
        let predicted = predicted.into();
        Self {
            correct: exact_match(&predicted, truth, kind),
            instance_id: instance_id.into(),
            predicted,
            score: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    ModelGuided,
    FullRl,
    FullSft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Warmup,
    SftNormal,
    RlHard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    WarmupSample,
    AccuracyCorrect,
    AccuracyIncorrect,
    KnowledgeTaxonomy,
    StrategyFullRl,
    StrategyFullSft,
}

/// Stage assignment of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// `SftNormal` or `RlHard`; `None` when the instance is only in warmup.
    pub stage: Option<Stage>,
    pub reason: Option<Reason>,
    pub in_warmup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub strategy: Strategy,
    pub warmup: BTreeSet<String>,
    pub sft_normal: BTreeSet<String>,
    pub rl_hard: BTreeSet<String>,
    pub provenance: BTreeMap<String, Provenance>,
}

/// SchedulePlan JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanLine {
    pub id: String,
    pub stage: Stage,
    pub reason: Reason,
}

impl SchedulePlan {
    /// One line per (id, stage); warmup ids that are also scheduled get two.
    pub fn lines(&self) -> Vec<PlanLine> {
        let mut out = Vec::new();
        for (id, p) in &self.provenance {
            if p.in_warmup {
                out.push(PlanLine {
                    id: id.clone(),
                    stage: Stage::Warmup,
                    reason: Reason::WarmupSample,
                });
            }
            if let (Some(stage), Some(reason)) = (p.stage, p.reason) {
                out.push(PlanLine { id: id.clone(), stage, reason });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationStats {
    pub warmup: usize,
    pub sft_normal: usize,
    pub rl_hard: usize,
    /// `|rl_hard| / |sft_normal|`; `None` when nothing goes to SFT.
    pub rl_to_sft_ratio: Option<f64>,
}

/// Splits instance ids by task category, preserving input order.
pub fn classify_by_taxonomy(insts: &[Instance]) -> (Vec<String>, Vec<String>) {
    let mut scenario = Vec::new();
    let mut knowledge = Vec::new();
    for inst in insts {
        match inst.task.category {
            TaskCategory::Scenario => scenario.push(inst.id.clone()),
            TaskCategory::Knowledge => knowledge.push(inst.id.clone()),
        }
    }
    (scenario, knowledge)
}

/// Uniform sample without replacement of `round_half_up(fraction * n)` ids.
pub fn warmup_sample(ids: &[String], fraction: f64, seed: u64) -> Result<BTreeSet<String>, ScheduleError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ScheduleError::FractionOutOfRange(fraction));
    }
    let mut seen = BTreeSet::new();
    let unique: Vec<&String> = ids.iter().filter(|id| seen.insert(id.as_str())).collect();
    let n = unique.len();
    // small slack so products like 0.15 * 10 round up as written
    let k = ((fraction * n as f64) + 0.5 + 1e-9).floor() as usize;
    let k = k.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, n, k).into_iter().map(|i| unique[i].clone()).collect())
}

fn index_records<'a>(
    ids: &[String],
    records: &'a [EvaluationRecord],
) -> Result<HashMap<&'a str, &'a EvaluationRecord>, ScheduleError> {
    let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let mut by_id: HashMap<&str, &EvaluationRecord> = HashMap::new();
    for r in records {
        if !wanted.contains(r.instance_id.as_str()) {
            continue;
        }
        if by_id.insert(r.instance_id.as_str(), r).is_some() {
            return Err(ScheduleError::DuplicateRecord(r.instance_id.clone()));
        }
    }
    if let Some(missing) = ids.iter().find(|id| !by_id.contains_key(id.as_str())) {
        return Err(ScheduleError::MissingRecord(missing.clone()));
    }
    Ok(by_id)
}

/// Correct -> normal, incorrect -> hard. Records for ids outside
/// `scenario_ids` are ignored.
pub fn partition_by_accuracy(
    scenario_ids: &[String],
    records: &[EvaluationRecord],
) -> Result<(Vec<String>, Vec<String>), ScheduleError> {
    let by_id = index_records(scenario_ids, records)?;
    Ok(scenario_ids
        .iter()
        .cloned()
        .partition(|id| by_id[id.as_str()].correct))
}

/// Score-based split for externally computed difficulty: ids scoring at or
/// above `threshold` are hard. Records without a score count as hard.
pub fn partition_by_score(
    ids: &[String],
    records: &[EvaluationRecord],
    threshold: f64,
) -> Result<(Vec<String>, Vec<String>), ScheduleError> {
    let by_id = index_records(ids, records)?;
    Ok(ids
        .iter()
        .cloned()
        .partition(|id| by_id[id.as_str()].score.is_some_and(|s| s < threshold)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarmupConfig {
    pub fraction: f64,
    pub seed: u64,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        Self { fraction: 0.1, seed: 0 }
    }
}

pub fn build_schedule(
    insts: &[Instance],
    records: Option<&[EvaluationRecord]>,
    strategy: Strategy,
    warmup_cfg: &WarmupConfig,
) -> Result<SchedulePlan, ScheduleError> {
    let all_ids: Vec<String> = insts.iter().map(|i| i.id.clone()).collect();
    if let Some(records) = records {
        let known: BTreeSet<&str> = all_ids.iter().map(String::as_str).collect();
        if let Some(r) = records.iter().find(|r| !known.contains(r.instance_id.as_str())) {
            return Err(ScheduleError::UnknownRecord(r.instance_id.clone()));
        }
    }
    let warmup = warmup_sample(&all_ids, warmup_cfg.fraction, warmup_cfg.seed)?;
    let (scenario, knowledge) = classify_by_taxonomy(insts);

    let mut assigned: Vec<(String, Stage, Reason)> = Vec::new();
    match strategy {
        Strategy::ModelGuided => {
            if !scenario.is_empty() {
                let records = records.ok_or(ScheduleError::StrategyInputMissing(strategy))?;
                let (normal, hard) = partition_by_accuracy(&scenario, records)?;
                assigned.extend(normal.into_iter().map(|id| (id, Stage::SftNormal, Reason::AccuracyCorrect)));
                assigned.extend(hard.into_iter().map(|id| (id, Stage::RlHard, Reason::AccuracyIncorrect)));
            }
            assigned.extend(knowledge.into_iter().map(|id| (id, Stage::RlHard, Reason::KnowledgeTaxonomy)));
        }
        Strategy::FullRl => {
            assigned.extend(
                all_ids
                    .iter()
                    .filter(|id| !warmup.contains(*id))
                    .map(|id| (id.clone(), Stage::RlHard, Reason::StrategyFullRl)),
            );
        }
        Strategy::FullSft => {
            assigned.extend(all_ids.iter().map(|id| (id.clone(), Stage::SftNormal, Reason::StrategyFullSft)));
        }
    }

    let mut plan = SchedulePlan {
        strategy,
        warmup: warmup.clone(),
        sft_normal: BTreeSet::new(),
        rl_hard: BTreeSet::new(),
        provenance: BTreeMap::new(),
    };
    for id in &warmup {
        plan.provenance.insert(
            id.clone(),
            Provenance {
                stage: None,
                reason: None,
                in_warmup: true,
            },
        );
    }
    for (id, stage, reason) in assigned {
        match stage {
            Stage::SftNormal => plan.sft_normal.insert(id.clone()),
            Stage::RlHard => plan.rl_hard.insert(id.clone()),
            Stage::Warmup => unreachable!("warmup is recorded separately"),
        };
        let entry = plan.provenance.entry(id).or_insert(Provenance {
            stage: None,
            reason: None,
            in_warmup: false,
        });
        entry.stage = Some(stage);
        entry.reason = Some(reason);
    }
    Ok(plan)
}

pub fn allocation_stats(plan: &SchedulePlan) -> AllocationStats {
    let sft = plan.sft_normal.len();
    let rl = plan.rl_hard.len();
    AllocationStats {
        warmup: plan.warmup.len(),
        sft_normal: sft,
        rl_hard: rl,
        rl_to_sft_ratio: (sft > 0).then(|| rl as f64 / sft as f64),
    }
}
