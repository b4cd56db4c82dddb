//! Structural, hard and process rewards for a single rollout.
//!
//! All components are computed from a parsed [`Trajectory`] and the
//! instance's [`LabelSet`]. The aggregate is a weighted sum; with unit
//! weights it is the plain sum `r_fmt + r_len + r_hard + r_intent +
//! r_pattern + r_align + r_verify`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnswerKind, LabelSet};
use crate::numeric::Scalar;
use crate::text::{levenshtein, normalize_for_similarity, normalize_label, split_items};
use crate::trajectory::{
    extract_final_answer, extract_judgement, token_count, ParseReport, TokenizerKind, Trajectory,
};

/// Absolute tolerance for non-integer numeric answers.
pub const NUMERIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
}

/// Reward values for each branch of each component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct RewardMagnitudes<T> {
    pub fmt_ok: T,
    pub fmt_bad: T,
    pub len_over: T,
    pub len_ok: T,
    pub hard_ok: T,
    pub hard_bad: T,
    pub pattern_two: T,
    pub pattern_one: T,
    pub align_ok: T,
    pub verify_ok: T,
    pub intent_ok: T,
}

impl<T: Scalar> Default for RewardMagnitudes<T> {
    fn default() -> Self {
        Self {
            fmt_ok: T::lit(3.0),
            fmt_bad: T::lit(-2.0),
            len_over: T::lit(-2.0),
            len_ok: T::lit(1.0),
            hard_ok: T::lit(5.0),
            hard_bad: T::lit(-2.0),
            pattern_two: T::lit(2.0),
            pattern_one: T::lit(1.0),
            align_ok: T::lit(2.0),
            verify_ok: T::lit(1.0),
            intent_ok: T::lit(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct RewardWeights<T> {
    pub format: T,
    pub length: T,
    pub hard: T,
    pub process: T,
}

impl<T: Scalar> Default for RewardWeights<T> {
    fn default() -> Self {
        Self {
            format: T::one(),
            length: T::one(),
            hard: T::one(),
            process: T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct RewardConfig<T> {
    /// Similarity threshold for the intent reward.
    pub intent_threshold: T,
    /// Similarity threshold for pattern matches.
    pub pattern_threshold: T,
    /// Minimum desirable length in tokens.
    pub min_length: usize,
    /// Length at which the over-length penalty applies.
    pub length_tolerance: usize,
    pub tokenizer: TokenizerKind,
    pub weights: RewardWeights<T>,
    pub magnitudes: RewardMagnitudes<T>,
}

impl<T: Scalar> Default for RewardConfig<T> {
    fn default() -> Self {
        Self {
            intent_threshold: T::lit(0.8),
            pattern_threshold: T::lit(0.8),
            min_length: 100,
            length_tolerance: 3809,
            tokenizer: TokenizerKind::Whitespace,
            weights: RewardWeights::default(),
            magnitudes: RewardMagnitudes::default(),
        }
    }
}

impl<T: Scalar> RewardConfig<T> {
    pub fn validate(&self) -> Result<(), RewardError> {
        let unit = |name: &str, v: T| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(RewardError::InvalidConfig(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("intent_threshold", self.intent_threshold)?;
        unit("pattern_threshold", self.pattern_threshold)?;
        if self.min_length == 0 || self.min_length >= self.length_tolerance {
            return Err(RewardError::InvalidConfig(format!(
                "need 0 < min_length < length_tolerance, got {} and {}",
                self.min_length, self.length_tolerance
            )));
        }
        let w = &self.weights;
        for (name, v) in [("format", w.format), ("length", w.length), ("hard", w.hard), ("process", w.process)] {
            if !v.is_finite() || v < T::zero() {
                return Err(RewardError::InvalidConfig(format!("weight {name} = {v} must be finite and >= 0")));
            }
        }
        let m = &self.magnitudes;
        let all = [
            m.fmt_ok, m.fmt_bad, m.len_over, m.len_ok, m.hard_ok, m.hard_bad, m.pattern_two, m.pattern_one,
            m.align_ok, m.verify_ok, m.intent_ok,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(RewardError::InvalidConfig("magnitudes must be finite".into()));
        }
        Ok(())
    }
}

/// Per-component rewards for one rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown<T> {
    pub r_fmt: T,
    pub r_len: T,
    pub r_hard: T,
    pub r_intent: T,
    pub r_pattern: T,
    pub r_align: T,
    pub r_verify: T,
    pub r_struct: T,
    pub r_process: T,
    pub total: T,
    /// Number of matched pattern candidates.
    pub match_count: usize,
}

/// `1 - levenshtein / max_len` over normalized strings (case-folded,
/// punctuation removed, whitespace collapsed). Two empty strings are
/// identical.
pub fn fuzzy_sim<T: Scalar>(a: &str, b: &str) -> T {
    let a = normalize_for_similarity(a);
    let b = normalize_for_similarity(b);
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return T::one();
    }
    T::one() - T::from_count(levenshtein(&a, &b)) / T::from_count(longest)
}

fn leading_option_letter(s: &str) -> Option<char> {
    let s = s.trim_start().trim_start_matches(['(', '[']);
    let mut chars = s.chars();
    let first = chars.next()?;
    let boundary = chars.next().is_none_or(|c| !c.is_alphanumeric());
    (first.is_ascii_alphabetic() && boundary).then(|| first.to_ascii_uppercase())
}

fn parse_bool(s: &str) -> Option<bool> {
    match normalize_label(s).as_str() {
        "yes" | "true" => Some(true),
        "no" | "false" => Some(false),
        _ => None,
    }
}

fn numbers_equal(a: &str, b: &str) -> bool {
    let (a, b) = (a.trim(), b.trim());
    if let (Ok(x), Ok(y)) = (a.parse::<i64>(), b.parse::<i64>()) {
        return x == y;
    }
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => (x - y).abs() <= NUMERIC_TOLERANCE,
        _ => false,
    }
}

/// Answer comparison by answer kind.
pub fn exact_match(pred: &str, truth: &str, kind: AnswerKind) -> bool {
    match kind {
        AnswerKind::Choice => match (leading_option_letter(pred), leading_option_letter(truth)) {
            (Some(p), Some(t)) => p == t,
            _ => normalize_label(pred) == normalize_label(truth),
        },
        AnswerKind::Numeric => numbers_equal(pred, truth),
        AnswerKind::Boolean => matches!((parse_bool(pred), parse_bool(truth)), (Some(p), Some(t)) if p == t),
        AnswerKind::Freetext => normalize_label(pred) == normalize_label(truth),
    }
}

pub fn format_reward<T: Scalar>(report: &ParseReport, cfg: &RewardConfig<T>) -> T {
    format_value(report.well_formed, cfg)
}

fn format_value<T: Scalar>(well_formed: bool, cfg: &RewardConfig<T>) -> T {
    if well_formed {
        cfg.magnitudes.fmt_ok
    } else {
        cfg.magnitudes.fmt_bad
    }
}

pub fn length_reward<T: Scalar>(tokens: usize, cfg: &RewardConfig<T>) -> T {
    if tokens >= cfg.length_tolerance {
        cfg.magnitudes.len_over
    } else if tokens >= cfg.min_length {
        cfg.magnitudes.len_ok
    } else {
        T::from_count(tokens) / T::from_count(cfg.length_tolerance)
    }
}

pub fn hard_reward<T: Scalar>(answer: Option<&str>, labels: &LabelSet, cfg: &RewardConfig<T>) -> T {
    match answer {
        Some(a) if exact_match(a, &labels.final_answer, labels.answer_kind) => cfg.magnitudes.hard_ok,
        _ => cfg.magnitudes.hard_bad,
    }
}

pub fn intent_reward<T: Scalar>(j1: Option<&str>, labels: &LabelSet, cfg: &RewardConfig<T>) -> T {
    match j1 {
        Some(j) if fuzzy_sim::<T>(j, &labels.intent_label) >= cfg.intent_threshold => cfg.magnitudes.intent_ok,
        _ => T::zero(),
    }
}

/// Candidate patterns from a step-2 judgement: split, normalized, deduplicated.
pub fn pattern_candidates(j2: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for item in split_items(j2) {
        let n = normalize_label(item);
        if !n.is_empty() && !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

/// Returns the pattern reward and the match count.
pub fn pattern_reward<T: Scalar>(j2: Option<&str>, labels: &LabelSet, cfg: &RewardConfig<T>) -> (T, usize) {
    let Some(j2) = j2 else {
        return (T::zero(), 0);
    };
    let matches = pattern_candidates(j2)
        .iter()
        .filter(|d| {
            labels
                .pattern_set
                .iter()
                .any(|s| fuzzy_sim::<T>(d, s) >= cfg.pattern_threshold)
        })
        .count();
    let r = match matches {
        0 => T::zero(),
        1 => cfg.magnitudes.pattern_one,
        _ => cfg.magnitudes.pattern_two,
    };
    (r, matches)
}

pub fn align_reward<T: Scalar>(j4: Option<&str>, labels: &LabelSet, cfg: &RewardConfig<T>) -> T {
    match j4 {
        Some(j) if exact_match(j, &labels.align_label, labels.answer_kind) => cfg.magnitudes.align_ok,
        _ => T::zero(),
    }
}

pub fn verify_reward<T: Scalar>(j6: Option<&str>, labels: &LabelSet, cfg: &RewardConfig<T>) -> T {
    match j6 {
        Some(j) if exact_match(j, &labels.verify_label, labels.answer_kind) => cfg.magnitudes.verify_ok,
        _ => T::zero(),
    }
}

/// Scores a trajectory, counting its length with the configured tokenizer.
pub fn total_reward<T: Scalar>(t: &Trajectory, labels: &LabelSet, cfg: &RewardConfig<T>) -> RewardBreakdown<T> {
    let tokens = token_count(&t.raw_text, &cfg.tokenizer.into());
    total_reward_with_length(t, labels, cfg, tokens)
}

/// Scores a trajectory whose token length was measured externally.
pub fn total_reward_with_length<T: Scalar>(
    t: &Trajectory,
    labels: &LabelSet,
    cfg: &RewardConfig<T>,
    tokens: usize,
) -> RewardBreakdown<T> {
    let judgement = |k| extract_judgement(t, k).ok().flatten();
    let r_fmt = format_value(t.well_formed, cfg);
    let r_len = length_reward(tokens, cfg);
    let r_hard = hard_reward(extract_final_answer(t), labels, cfg);
    let r_intent = intent_reward(judgement(1), labels, cfg);
    let (r_pattern, match_count) = pattern_reward(judgement(2), labels, cfg);
    let r_align = align_reward(judgement(4), labels, cfg);
    let r_verify = verify_reward(judgement(6), labels, cfg);
    let r_process = r_intent + r_pattern + r_align + r_verify;
    let w = &cfg.weights;
    let total = w.format * r_fmt + w.length * r_len + w.hard * r_hard + w.process * r_process;
    RewardBreakdown {
        r_fmt,
        r_len,
        r_hard,
        r_intent,
        r_pattern,
        r_align,
        r_verify,
        r_struct: r_fmt + r_len,
        r_process,
        total,
        match_count,
    }
}
