//! Fixture generators shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use tsreason_core::annotation::{AnswerKind, LabelSet};

pub const PATTERNS: &[&str] = &[
    "sudden spike",
    "upward trend",
    "downward trend",
    "periodic oscillation",
    "level shift",
    "high variance",
    "flat segment",
];

pub const INTENTS: &[&str] = &[
    "most likely cause of the anomaly",
    "whether the series is anomalous",
    "estimate the weekly total",
    "classify the heart rhythm",
];

const MARKERS_J: &[&str] = &["[Judgement]", "[Judgment]", "[judgement]", "[JUDGMENT]"];
const MARKERS_D: &[&str] = &["[Description]", "[description]"];
const MARKERS_A: &[&str] = &["[Analysis]", "[ANALYSIS]"];
const WORDS: &[&str] = &[
    "the", "series", "rises", "sharply", "after", "noon", "and", "falls", "back", "value", "peak", "window",
];

pub fn words<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn answer_for<R: Rng>(rng: &mut R, kind: AnswerKind) -> String {
    match kind {
        AnswerKind::Choice => ["A", "B", "C", "D"].choose(rng).unwrap().to_string(),
        AnswerKind::Boolean => ["Yes", "No"].choose(rng).unwrap().to_string(),
        AnswerKind::Numeric => rng.gen_range(0..20).to_string(),
        AnswerKind::Freetext => ["normal sinus rhythm", "atrial fibrillation", "tremor"]
            .choose(rng)
            .unwrap()
            .to_string(),
    }
}

pub fn random_kind<R: Rng>(rng: &mut R) -> AnswerKind {
    *[AnswerKind::Choice, AnswerKind::Boolean, AnswerKind::Numeric, AnswerKind::Freetext]
        .choose(rng)
        .unwrap()
}

pub fn random_labels<R: Rng>(rng: &mut R) -> LabelSet {
    let kind = random_kind(rng);
    let k = rng.gen_range(0..=3);
    let patterns: Vec<&str> = PATTERNS.choose_multiple(rng, k).copied().collect();
    LabelSet::new(answer_for(rng, kind), *INTENTS.choose(rng).unwrap(), patterns, kind)
}

/// Canonical-looking well-formed text with varied markers, titles and values.
pub fn well_formed_text<R: Rng>(rng: &mut R, labels: &LabelSet) -> String {
    let pick_answer = |rng: &mut R| {
        if rng.gen_bool(0.6) {
            labels.final_answer.clone()
        } else {
            answer_for(rng, labels.answer_kind)
        }
    };
    let intent = if rng.gen_bool(0.5) {
        labels.intent_label.clone()
    } else {
        INTENTS.choose(rng).unwrap().to_string()
    };
    let k = rng.gen_range(0..=3);
    let patterns: Vec<&str> = PATTERNS.choose_multiple(rng, k).copied().collect();
    let patterns = if patterns.is_empty() {
        "none".to_string()
    } else {
        patterns.join(if rng.gen_bool(0.5) { "; " } else { ", " })
    };
    let prelim = pick_answer(rng);
    let final_j = pick_answer(rng);
    let answer = pick_answer(rng);
    let j = |rng: &mut R| *MARKERS_J.choose(rng).unwrap();
    let d = |rng: &mut R| *MARKERS_D.choose(rng).unwrap();
    let a = |rng: &mut R| *MARKERS_A.choose(rng).unwrap();
    let mut s = String::from(if rng.gen_bool(0.5) { "<THINK>\n" } else { "<think>\n" });
    s += &format!("Step 1. Task intent:\n{} {intent}\n{} {}\n", j(rng), d(rng), words(rng, 1, 6));
    s += &format!("Step 2. Key patterns:\n{} {patterns}\n{} {}\n", j(rng), d(rng), words(rng, 1, 6));
    s += &format!("Step 3. {}\n{} {}\n", words(rng, 1, 3), a(rng), words(rng, 1, 12));
    s += &format!("Step 4. Preliminary:\n{} {prelim}\n{} {}\n", j(rng), d(rng), words(rng, 1, 6));
    s += &format!("Step 5. Reflection:\n{} {}\n", a(rng), words(rng, 1, 12));
    s += &format!("Step 6. Final:\n{} {}\n{} {final_j}\n", d(rng), words(rng, 1, 6), j(rng));
    s += if rng.gen_bool(0.5) { "</THINK>\n<ANSWER>\n" } else { "</think>\n<answer>" };
    s += &answer;
    s += if rng.gen_bool(0.5) { "\n</ANSWER>\n" } else { "</answer>" };
    s
}

const FRAGMENTS: &[&str] = &[
    "<THINK>",
    "</THINK>",
    "<ANSWER>",
    "</ANSWER>",
    "<think x=1>",
    "</answer",
    "<",
    ">",
    "Step 7.",
    "Step 2.",
    "Step 0x.",
    "[Judgement]",
    "[Analysis]",
    "[Description]",
    "\n",
    "\r\n",
    "é",
    "🙂",
    "\u{0}",
    ":",
];

/// Random edits of `text`: char deletions, fragment insertions, range
/// swaps and truncations.
pub fn mutate<R: Rng>(rng: &mut R, text: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for _ in 0..rng.gen_range(1..=6) {
        let len = chars.len();
        match rng.gen_range(0..5) {
            0 if len > 0 => {
                let i = rng.gen_range(0..len);
                let j = rng.gen_range(i..=len.min(i + 20));
                chars.drain(i..j);
            }
            1 => {
                let i = rng.gen_range(0..=len);
                let frag: Vec<char> = FRAGMENTS.choose(rng).unwrap().chars().collect();
                chars.splice(i..i, frag);
            }
            2 if len > 1 => {
                let i = rng.gen_range(0..len);
                let j = rng.gen_range(0..len);
                chars.swap(i, j);
            }
            3 if len > 0 => {
                let i = rng.gen_range(0..len);
                chars.truncate(i);
            }
            _ => {
                let i = rng.gen_range(0..=len);
                chars.insert(i, char::from(rng.gen_range(0x20u8..0x7f)));
            }
        }
    }
    chars.into_iter().collect()
}

/// Mix of well-formed, mutated, partial and free-form texts.
pub fn random_trajectory_text<R: Rng>(rng: &mut R, labels: &LabelSet) -> String {
    let base = well_formed_text(rng, labels);
    match rng.gen_range(0..6) {
        0 | 1 => base,
        2 | 3 => mutate(rng, &base),
        4 => {
            let cut = rng.gen_range(0..=base.chars().count());
            base.chars().take(cut).collect()
        }
        _ => {
            let n = rng.gen_range(0..5000);
            vec!["tok"; n].join(" ")
        }
    }
}
