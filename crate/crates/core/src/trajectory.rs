//! Six-step reasoning trajectory: data model, parser and canonical renderer.
//!
//! A trajectory is a `<THINK>` region holding six numbered steps followed by
//! an `<ANSWER>` region. Inside the think region every step opens with a
//! header line `Step k. <title>:` and carries bracketed field markers:
//!
//! ```text
//! <THINK>
//! Step 1. Analyzing task intent:
//! [Judgement] significant drops
//! [Description] ...
//! Step 2. Selecting task-relevant key patterns:
//! [Judgement] threshold value; sudden drop
//! [Description] ...
//! Step 3. Analyzing time series samples using selected key patterns:
//! [Analysis] ...
//! Step 4. Generating preliminary answers by combining task intent and key patterns:
//! [Judgement] 3
//! [Description] ...
//! Step 5. Enhancing answers through reflection:
//! [Analysis] ...
//! Step 6. Summarizing the thinking process to output the answer:
//! [Description] ...
//! [Judgement] 3
//! </THINK>
//! <ANSWER>
//! 3
//! </ANSWER>
//! ```
//!
//! Tags are matched case-insensitively and may not carry attributes. Both
//! `[Judgement]` and `[Judgment]` are accepted; rendering always writes
//! `[Judgement]`.

use std::ops::Range;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of steps in a well-formed trajectory.
pub const STEP_COUNT: usize = 6;

/// Titles used when rendering a step that has no title of its own.
pub const DEFAULT_STEP_TITLES: [&str; STEP_COUNT] = [
    "Analyzing task intent",
    "Selecting task-relevant key patterns",
    "Analyzing time series samples using selected key patterns",
    "Generating preliminary answers by combining task intent and key patterns",
    "Enhancing answers through reflection",
    "Summarizing the thinking process to output the answer",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrajectoryError {
    #[error("trajectory has no steps and no answer")]
    EmptyTrajectory,
    #[error("step index {0} outside 1..=6")]
    StepOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Extract only from properly delimited regions.
    #[default]
    Strict,
    /// Recover steps and answer from unclosed or missing tags.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Judgement,
    Description,
    Analysis,
}

impl FieldKind {
    fn marker(self) -> &'static str {
        match self {
            FieldKind::Judgement => "[Judgement]",
            FieldKind::Description => "[Description]",
            FieldKind::Analysis => "[Analysis]",
        }
    }
}

/// Fields a step must carry, in canonical rendering order.
pub fn required_fields(index: usize) -> &'static [FieldKind] {
    use FieldKind::*;
    match index {
        1 | 2 | 4 => &[Judgement, Description],
        3 | 5 => &[Analysis],
        6 => &[Description, Judgement],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBlock {
    pub index: usize,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<String>,
}

impl StepBlock {
    pub fn new(index: usize, title: impl Into<String>) -> Self {
        Self {
            index,
            title: title.into(),
            judgement: None,
            description: None,
            analysis: None,
        }
    }

    /// Step with the default title for its index.
    pub fn titled(index: usize) -> Self {
        let title = index
            .checked_sub(1)
            .and_then(|i| DEFAULT_STEP_TITLES.get(i))
            .copied()
            .unwrap_or("");
        Self::new(index, title)
    }

    pub fn with(mut self, kind: FieldKind, value: impl Into<String>) -> Self {
        *self.field_mut(kind) = Some(value.into());
        self
    }

    pub fn field(&self, kind: FieldKind) -> Option<&str> {
        match kind {
            FieldKind::Judgement => self.judgement.as_deref(),
            FieldKind::Description => self.description.as_deref(),
            FieldKind::Analysis => self.analysis.as_deref(),
        }
    }

    fn field_mut(&mut self, kind: FieldKind) -> &mut Option<String> {
        match kind {
            FieldKind::Judgement => &mut self.judgement,
            FieldKind::Description => &mut self.description,
            FieldKind::Analysis => &mut self.analysis,
        }
    }
}

/// A parsed reasoning record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Steps in order of appearance.
    pub steps: Vec<StepBlock>,
    /// Trimmed answer-region content; `None` when the region is missing or blank.
    pub answer: Option<String>,
    pub raw_text: String,
    /// Strict verdict, independent of the mode used to extract fields.
    pub well_formed: bool,
}

impl Trajectory {
    /// Builds a trajectory from parts by rendering and strict-parsing it, so
    /// `raw_text` and `well_formed` are consistent with the structure.
    pub fn assemble(
        steps: Vec<StepBlock>,
        answer: Option<String>,
    ) -> Result<(Trajectory, ParseReport), TrajectoryError> {
        let draft = Trajectory {
            steps,
            answer,
            raw_text: String::new(),
            well_formed: false,
        };
        let text = render_trajectory(&draft)?;
        Ok(parse_trajectory(&text, ParseMode::Strict))
    }

    pub fn step(&self, index: usize) -> Option<&StepBlock> {
        self.steps.iter().find(|s| s.index == index)
    }

    /// Equality on steps and answer, ignoring raw text and verdict.
    pub fn same_structure(&self, other: &Trajectory) -> bool {
        self.steps == other.steps && self.answer == other.answer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    MissingThink,
    MissingAnswer,
    EmptyThink,
    EmptyAnswer,
    UnclosedTag,
    UnmatchedCloseTag,
    NestedTag,
    TagAttributes,
    DuplicateTag,
    AnswerBeforeThink,
    MissingStep,
    DuplicateStep,
    StepOutOfOrder,
    StepIndexOutOfRange,
    MissingField,
    UnexpectedField,
    DuplicateField,
    EmptyField,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParseReport {
    pub well_formed: bool,
    pub violations: Vec<Violation>,
}

impl ParseReport {
    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    fn push(&mut self, code: ViolationCode, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            code,
            location: location.into(),
            message: message.into(),
        });
    }
}

// ---------------------------------------------------------------------------
// Tag scanning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TagKind {
    Think,
    Answer,
}

impl TagKind {
    fn name(self) -> &'static str {
        match self {
            TagKind::Think => "THINK",
            TagKind::Answer => "ANSWER",
        }
    }
}

#[derive(Debug, Clone)]
struct Tag {
    kind: TagKind,
    closing: bool,
    has_attributes: bool,
    span: Range<usize>,
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)<\s*(/)?\s*(think|answer)\b([^<>]*)>").unwrap())
}

fn scan_tags(text: &str) -> Vec<Tag> {
    tag_regex()
        .captures_iter(text)
        .map(|c| {
            let whole = c.get(0).unwrap();
            Tag {
                kind: if c[2].eq_ignore_ascii_case("think") {
                    TagKind::Think
                } else {
                    TagKind::Answer
                },
                closing: c.get(1).is_some(),
                has_attributes: !c[3].trim().is_empty(),
                span: whole.range(),
            }
        })
        .collect()
}

#[derive(Debug, Default)]
struct Regions {
    think: Option<Range<usize>>,
    answer: Option<Range<usize>>,
}

impl Regions {
    fn get(&self, kind: TagKind) -> &Option<Range<usize>> {
        match kind {
            TagKind::Think => &self.think,
            TagKind::Answer => &self.answer,
        }
    }

    fn set(&mut self, kind: TagKind, r: Range<usize>) {
        match kind {
            TagKind::Think => self.think = Some(r),
            TagKind::Answer => self.answer = Some(r),
        }
    }
}

/// Runs the delimiter state machine, returning the properly closed regions.
fn strict_regions(text: &str, tags: &[Tag], report: &mut ParseReport) -> Regions {
    let mut regions = Regions::default();
    let mut opened = [false, false];
    let mut open: Option<(TagKind, usize)> = None;
    let slot = |k: TagKind| match k {
        TagKind::Think => 0,
        TagKind::Answer => 1,
    };

    for tag in tags {
        let at = format!("byte {}", tag.span.start);
        if tag.has_attributes {
            report.push(
                ViolationCode::TagAttributes,
                &at,
                format!("<{}> tag carries attributes", tag.kind.name()),
            );
        }
        match (open, tag.closing) {
            (None, false) => {
                if opened[slot(tag.kind)] {
                    report.push(
                        ViolationCode::DuplicateTag,
                        &at,
                        format!("second <{}> region", tag.kind.name()),
                    );
                }
                opened[slot(tag.kind)] = true;
                open = Some((tag.kind, tag.span.end));
            }
            (Some((cur, _)), false) => {
                report.push(
                    ViolationCode::NestedTag,
                    &at,
                    format!("<{}> opened inside <{}>", tag.kind.name(), cur.name()),
                );
            }
            (Some((cur, start)), true) if cur == tag.kind => {
                if regions.get(cur).is_none() {
                    regions.set(cur, start..tag.span.start);
                }
                open = None;
            }
            (Some((cur, _)), true) => {
                report.push(
                    ViolationCode::UnmatchedCloseTag,
                    &at,
                    format!("</{}> while <{}> is open", tag.kind.name(), cur.name()),
                );
            }
            (None, true) => {
                report.push(
                    ViolationCode::UnmatchedCloseTag,
                    &at,
                    format!("</{}> without opening tag", tag.kind.name()),
                );
            }
        }
    }
    if let Some((cur, start)) = open {
        report.push(
            ViolationCode::UnclosedTag,
            format!("byte {start}"),
            format!("<{}> never closed", cur.name()),
        );
    }

    match &regions.think {
        None if !opened[0] => report.push(ViolationCode::MissingThink, "document", "no <THINK> region"),
        Some(r) if text[r.clone()].trim().is_empty() => {
            report.push(ViolationCode::EmptyThink, "document", "<THINK> region is empty")
        }
        _ => {}
    }
    match &regions.answer {
        None if !opened[1] => report.push(ViolationCode::MissingAnswer, "document", "no <ANSWER> region"),
        Some(r) if text[r.clone()].trim().is_empty() => {
            report.push(ViolationCode::EmptyAnswer, "document", "<ANSWER> region is empty")
        }
        _ => {}
    }
    if let (Some(t), Some(a)) = (&regions.think, &regions.answer) {
        if a.start < t.start {
            report.push(
                ViolationCode::AnswerBeforeThink,
                "document",
                "<ANSWER> region precedes <THINK> region",
            );
        }
    }
    regions
}

/// Best-effort region recovery: an opening tag runs to the next tag of any
/// kind; a lone closing tag runs back to the previous tag.
fn lenient_region(text: &str, tags: &[Tag], kind: TagKind) -> Option<Range<usize>> {
    if let Some(i) = tags.iter().position(|t| t.kind == kind && !t.closing) {
        let start = tags[i].span.end;
        let end = tags.get(i + 1).map_or(text.len(), |t| t.span.start);
        return Some(start..end);
    }
    if let Some(i) = tags.iter().position(|t| t.kind == kind && t.closing) {
        let start = if i == 0 { 0 } else { tags[i - 1].span.end };
        return Some(start..tags[i].span.start);
    }
    None
}

// ---------------------------------------------------------------------------
// Step grammar
// ---------------------------------------------------------------------------

fn header_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*Step\s+(\d+)\.(.*)$").unwrap())
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*\[(judgement|judgment|description|analysis)\](.*)$").unwrap())
}

struct RawStep {
    block: StepBlock,
    line: usize,
    seen: Vec<FieldKind>,
    empty: Vec<FieldKind>,
    duplicate: Vec<FieldKind>,
}

fn parse_title(rest: &str) -> String {
    let t = rest.trim();
    t.strip_suffix(':').unwrap_or(t).trim().to_string()
}

/// Splits a region into step blocks. `first_line` numbers lines for
/// violation locations.
fn parse_steps(region: &str, first_line: usize) -> Vec<RawStep> {
    let mut steps: Vec<RawStep> = Vec::new();
    let mut current: Option<(FieldKind, Vec<&str>)> = None;

    fn flush(steps: &mut [RawStep], current: &mut Option<(FieldKind, Vec<&str>)>) {
        let Some((kind, lines)) = current.take() else {
            return;
        };
        let Some(step) = steps.last_mut() else {
            return;
        };
        let content = lines.join("\n").trim().to_string();
        if step.seen.contains(&kind) {
            step.duplicate.push(kind);
            return;
        }
        step.seen.push(kind);
        if content.is_empty() {
            step.empty.push(kind);
        } else {
            *step.block.field_mut(kind) = Some(content);
        }
    }

    for (offset, line) in region.lines().enumerate() {
        if let Some(c) = header_regex().captures(line) {
            flush(&mut steps, &mut current);
            let index = c[1].parse::<usize>().unwrap_or(usize::MAX);
            steps.push(RawStep {
                block: StepBlock::new(index, parse_title(&c[2])),
                line: first_line + offset,
                seen: Vec::new(),
                empty: Vec::new(),
                duplicate: Vec::new(),
            });
        } else if let Some(c) = marker_regex().captures(line) {
            flush(&mut steps, &mut current);
            if steps.is_empty() {
                continue;
            }
            let kind = match c[1].to_ascii_lowercase().as_str() {
                "judgement" | "judgment" => FieldKind::Judgement,
                "description" => FieldKind::Description,
                _ => FieldKind::Analysis,
            };
            current = Some((kind, vec![c.get(2).unwrap().as_str()]));
        } else if let Some((_, lines)) = current.as_mut() {
            lines.push(line);
        }
    }
    flush(&mut steps, &mut current);
    steps
}

fn check_steps(steps: &[RawStep], report: &mut ParseReport) {
    let mut seen_index = [false; STEP_COUNT + 1];
    let mut last_valid = 0usize;
    for raw in steps {
        let idx = raw.block.index;
        let loc = format!("line {}", raw.line);
        if !(1..=STEP_COUNT).contains(&idx) {
            report.push(
                ViolationCode::StepIndexOutOfRange,
                loc,
                format!("step index {idx} outside 1..=6"),
            );
            continue;
        }
        if seen_index[idx] {
            report.push(ViolationCode::DuplicateStep, loc, format!("step {idx} repeated"));
            continue;
        }
        seen_index[idx] = true;
        if idx < last_valid {
            report.push(
                ViolationCode::StepOutOfOrder,
                &loc,
                format!("step {idx} appears after step {last_valid}"),
            );
        }
        last_valid = last_valid.max(idx);

        let where_ = format!("step {idx}");
        let required = required_fields(idx);
        for kind in &raw.duplicate {
            report.push(
                ViolationCode::DuplicateField,
                &where_,
                format!("{} given more than once", kind.marker()),
            );
        }
        for kind in &raw.empty {
            report.push(ViolationCode::EmptyField, &where_, format!("{} is empty", kind.marker()));
        }
        for kind in required {
            if !raw.seen.contains(kind) {
                report.push(ViolationCode::MissingField, &where_, format!("{} missing", kind.marker()));
            }
        }
        for kind in &raw.seen {
            if !required.contains(kind) {
                report.push(
                    ViolationCode::UnexpectedField,
                    &where_,
                    format!("{} not allowed in step {idx}", kind.marker()),
                );
            }
        }
    }
    for (k, seen) in seen_index.iter().enumerate().skip(1) {
        if !seen {
            report.push(ViolationCode::MissingStep, "think", format!("step {k} missing"));
        }
    }
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte].matches('\n').count() + 1
}

fn non_blank(s: &str) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| t.to_string())
}

/// Parses raw model output. Never fails: malformed input produces a report
/// with `well_formed == false`. The report always carries the strict
/// verdict; `mode` only controls how much structure is recovered.
pub fn parse_trajectory(text: &str, mode: ParseMode) -> (Trajectory, ParseReport) {
    let mut report = ParseReport::default();
    let tags = scan_tags(text);
    let regions = strict_regions(text, &tags, &mut report);

    let strict_steps = regions
        .think
        .as_ref()
        .map(|r| parse_steps(&text[r.clone()], line_of(text, r.start)));
    if let Some(steps) = &strict_steps {
        if !text[regions.think.clone().unwrap()].trim().is_empty() {
            check_steps(steps, &mut report);
        }
    }

    let (steps, answer) = match mode {
        ParseMode::Strict => (
            strict_steps.unwrap_or_default(),
            regions.answer.as_ref().and_then(|r| non_blank(&text[r.clone()])),
        ),
        ParseMode::Lenient => {
            let steps = match (&regions.think, lenient_region(text, &tags, TagKind::Think)) {
                (Some(_), _) => strict_steps.unwrap_or_default(),
                (None, Some(r)) => parse_steps(&text[r.clone()], line_of(text, r.start)),
                (None, None) => {
                    let head = tags.first().map_or(text.len(), |t| t.span.start);
                    let tail = tags.last().map_or(text.len(), |t| t.span.end);
                    let mut steps = parse_steps(&text[..head], 1);
                    steps.extend(parse_steps(&text[tail..], line_of(text, tail)));
                    steps
                }
            };
            let answer = regions
                .answer
                .clone()
                .or_else(|| lenient_region(text, &tags, TagKind::Answer))
                .and_then(|r| non_blank(&text[r]));
            (steps, answer)
        }
    };

    report.well_formed = report.violations.is_empty();
    let trajectory = Trajectory {
        steps: steps.into_iter().map(|s| s.block).collect(),
        answer,
        raw_text: text.to_string(),
        well_formed: report.well_formed,
    };
    (trajectory, report)
}

/// Emits canonical tagged text for steps 1..=6. Steps missing from `t`
/// are rendered with their default title and empty required fields, which
/// a strict re-parse reports as violations.
pub fn render_trajectory(t: &Trajectory) -> Result<String, TrajectoryError> {
    let has_answer = t.answer.as_deref().is_some_and(|a| !a.trim().is_empty());
    if t.steps.is_empty() && !has_answer {
        return Err(TrajectoryError::EmptyTrajectory);
    }
    let mut out = String::from("<THINK>\n");
    for k in 1..=STEP_COUNT {
        let stub;
        let step = match t.step(k) {
            Some(s) => s,
            None => {
                stub = StepBlock::titled(k);
                &stub
            }
        };
        let title = step.title.replace(['\n', '\r'], " ");
        out.push_str(&format!("Step {k}. {title}:\n"));
        let required = required_fields(k);
        let extras = [FieldKind::Judgement, FieldKind::Description, FieldKind::Analysis]
            .into_iter()
            .filter(|f| !required.contains(f) && step.field(*f).is_some());
        for kind in required.iter().copied().chain(extras) {
            let value = step.field(kind).unwrap_or("");
            if value.is_empty() {
                out.push_str(kind.marker());
            } else {
                out.push_str(&format!("{} {}", kind.marker(), value));
            }
            out.push('\n');
        }
    }
    out.push_str("</THINK>\n<ANSWER>\n");
    if let Some(a) = &t.answer {
        out.push_str(a.trim());
        out.push('\n');
    }
    out.push_str("</ANSWER>\n");
    Ok(out)
}

/// Trimmed judgement of step `k`, if present.
pub fn extract_judgement(t: &Trajectory, k: usize) -> Result<Option<&str>, TrajectoryError> {
    if !(1..=STEP_COUNT).contains(&k) {
        return Err(TrajectoryError::StepOutOfRange(k));
    }
    Ok(t
        .step(k)
        .and_then(|s| s.judgement.as_deref())
        .map(str::trim)
        .filter(|s| !s.is_empty()))
}

/// Trimmed answer-region content (`A(y)`).
pub fn extract_final_answer(t: &Trajectory) -> Option<&str> {
    t.answer.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

// ---------------------------------------------------------------------------
// Token counting
// ---------------------------------------------------------------------------

/// Token counter used for the length reward.
#[derive(Clone, Default)]
pub enum Tokenizer {
    /// Maximal runs of non-whitespace.
    #[default]
    Whitespace,
    /// Unicode scalar values.
    Chars,
    Custom(Arc<dyn Fn(&str) -> usize + Send + Sync>),
}

impl std::fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tokenizer::Whitespace => f.write_str("Whitespace"),
            Tokenizer::Chars => f.write_str("Chars"),
            Tokenizer::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Serializable tokenizer selector for configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    #[default]
    Whitespace,
    Chars,
}

impl From<TokenizerKind> for Tokenizer {
    fn from(k: TokenizerKind) -> Self {
        match k {
            TokenizerKind::Whitespace => Tokenizer::Whitespace,
            TokenizerKind::Chars => Tokenizer::Chars,
        }
    }
}

pub fn token_count(text: &str, tokenizer: &Tokenizer) -> usize {
    match tokenizer {
        Tokenizer::Whitespace => text.split_whitespace().count(),
        Tokenizer::Chars => text.chars().count(),
        Tokenizer::Custom(f) => f(text),
    }
}
