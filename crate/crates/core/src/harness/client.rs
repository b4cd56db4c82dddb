//! Model clients. The stub is deterministic per (seed, prompt id); the
//! remote client speaks JSON over a caller-supplied transport.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnswerKind, LabelSet};
use crate::template::{render_template, TemplateFill};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientError {
    #[error("transport failed: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: usize,
    pub num_generations: usize,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.8,
            max_tokens: 4096,
            num_generations: 4,
        }
    }
}

/// Generation request. Labels are only read by the stub.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelSet>,
}

pub trait ModelClient: Sync {
    /// Exactly `params.num_generations` completions for one prompt.
    fn generate(&self, prompt: &Prompt, params: &GenerationParams) -> Result<Vec<String>, ClientError>;
}

/// Probability of each injected defect per completion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DefectRates {
    /// Drops the closing think tag.
    pub malformed_tags: f64,
    /// Replaces the correct answer with a wrong one.
    pub wrong_answer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubClient {
    pub seed: u64,
    pub defects: DefectRates,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// A plausible but incorrect answer of the same kind.
fn wrong_answer(truth: &str, kind: AnswerKind) -> String {
    let t = truth.trim();
    match kind {
        AnswerKind::Choice => {
            let c = t.chars().next().unwrap_or('A').to_ascii_uppercase();
            if c.is_ascii_uppercase() {
                char::from(b'A' + ((c as u8 - b'A' + 1) % 4)).to_string()
            } else {
                "A".into()
            }
        }
        AnswerKind::Numeric => match t.parse::<f64>() {
            Ok(v) => format!("{}", v + 1.0),
            Err(_) => "0".into(),
        },
        AnswerKind::Boolean => {
            if matches!(t.to_lowercase().as_str(), "yes" | "true") {
                "No".into()
            } else {
                "Yes".into()
            }
        }
        AnswerKind::Freetext => format!("not {t}"),
    }
}

impl StubClient {
    pub fn new(seed: u64, defects: DefectRates) -> Self {
        Self { seed, defects }
    }
}

impl ModelClient for StubClient {
    fn generate(&self, prompt: &Prompt, params: &GenerationParams) -> Result<Vec<String>, ClientError> {
        let rates = [self.defects.malformed_tags, self.defects.wrong_answer];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(ClientError::InvalidParams(format!("defect rates {rates:?} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(&prompt.id));
        let labels = prompt
            .labels
            .clone()
            .unwrap_or_else(|| LabelSet::new("unknown", "task intent", Vec::<String>::new(), AnswerKind::Freetext));
        Ok((0..params.num_generations)
            .map(|_| {
                let answer = if rng.gen_bool(self.defects.wrong_answer) {
                    wrong_answer(&labels.final_answer, labels.answer_kind)
                } else {
                    labels.final_answer.clone()
                };
                let text = render_template(&TemplateFill::from_labels(&labels, &answer));
                if rng.gen_bool(self.defects.malformed_tags) {
                    text.replacen("</THINK>", "", 1)
                } else {
                    text
                }
            })
            .collect())
    }
}

/// Request body sent to a remote generation endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub completions: Vec<String>,
}

/// Posts a JSON body and returns the response body.
pub trait Transport: Sync {
    fn post_json(&self, body: &str) -> Result<String, String>;
}

pub struct RemoteClient<Tr> {
    pub transport: Tr,
}

impl<Tr: Transport> ModelClient for RemoteClient<Tr> {
    fn generate(&self, prompt: &Prompt, params: &GenerationParams) -> Result<Vec<String>, ClientError> {
        let req = RemoteRequest {
            prompt: prompt.text.clone(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            n: params.num_generations,
        };
        let body = serde_json::to_string(&req).map_err(|e| ClientError::BadResponse(e.to_string()))?;
        let raw = self.transport.post_json(&body).map_err(ClientError::Transport)?;
        let resp: RemoteResponse = serde_json::from_str(&raw).map_err(|e| ClientError::BadResponse(e.to_string()))?;
        if resp.completions.len() != params.num_generations {
            return Err(ClientError::BadResponse(format!(
                "expected {} completions, got {}",
                params.num_generations,
                resp.completions.len()
            )));
        }
        Ok(resp.completions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3 }
    }
}

/// Outcome for one prompt; a failure never aborts the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRollouts {
    pub id: String,
    pub result: Result<Vec<String>, ClientError>,
}

/// Requests completions for every prompt, retrying transport errors.
pub fn generate_rollouts<C: ModelClient>(
    client: &C,
    prompts: &[Prompt],
    params: &GenerationParams,
    retry: RetryPolicy,
) -> Result<Vec<PromptRollouts>, ClientError> {
    if params.num_generations == 0 {
        return Err(ClientError::InvalidParams("num_generations must be >= 1".into()));
    }
    let attempts = retry.max_attempts.max(1);
    Ok(prompts
        .par_iter()
        .map(|p| {
            let mut result = client.generate(p, params);
            for _ in 1..attempts {
                match result {
                    Err(ClientError::Transport(_)) => result = client.generate(p, params),
                    _ => break,
                }
            }
            PromptRollouts {
                id: p.id.clone(),
                result,
            }
        })
        .collect())
}
