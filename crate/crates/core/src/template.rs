//! Fixed rollout template: renders a minimal well-formed trajectory around
//! a sampled answer so every reward component engages.

use crate::annotation::LabelSet;
use crate::trajectory::{render_trajectory, FieldKind, StepBlock, Trajectory};

/// Content injected into the template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateFill {
    pub intent: String,
    pub patterns: Vec<String>,
    /// Step-4 preliminary judgement.
    pub preliminary: String,
    /// Step-6 final judgement.
    pub final_judgement: String,
    /// Content of the answer region.
    pub answer: String,
}

impl TemplateFill {
    /// Template that echoes the labels' intent and patterns and commits to
    /// `answer` in steps 4 and 6 and the answer region.
    pub fn from_labels(labels: &LabelSet, answer: &str) -> Self {
        Self {
            intent: labels.intent_label.clone(),
            patterns: labels.pattern_set.iter().cloned().collect(),
            preliminary: answer.to_string(),
            final_judgement: answer.to_string(),
            answer: answer.to_string(),
        }
    }
}

/// Builds the step blocks for a fill.
pub fn template_steps(fill: &TemplateFill) -> Vec<StepBlock> {
    let patterns = if fill.patterns.is_empty() {
        "overall trend".to_string()
    } else {
        fill.patterns.join("; ")
    };
    vec![
        StepBlock::titled(1)
            .with(FieldKind::Judgement, fill.intent.as_str())
            .with(FieldKind::Description, "The question defines the target of the analysis."),
        StepBlock::titled(2)
            .with(FieldKind::Judgement, patterns)
            .with(FieldKind::Description, "These patterns decide the outcome."),
        StepBlock::titled(3).with(FieldKind::Analysis, "The series is examined segment by segment."),
        StepBlock::titled(4)
            .with(FieldKind::Judgement, fill.preliminary.as_str())
            .with(FieldKind::Description, "Combining the intent with the selected patterns."),
        StepBlock::titled(5).with(FieldKind::Analysis, "The pattern selection and analysis were re-checked."),
        StepBlock::titled(6)
            .with(FieldKind::Description, "All steps agree on the conclusion.")
            .with(FieldKind::Judgement, fill.final_judgement.as_str()),
    ]
}

/// Canonical text for a fill.
pub fn render_template(fill: &TemplateFill) -> String {
    let t = Trajectory {
        steps: template_steps(fill),
        answer: Some(fill.answer.clone()),
        raw_text: String::new(),
        well_formed: false,
    };
    render_trajectory(&t).expect("template always has steps")
}
