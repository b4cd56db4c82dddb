//! Batch plumbing: dataset and trajectory I/O, corpus scoring, metrics,
//! model clients and run configuration.

pub mod client;
pub mod config;
pub mod io;
pub mod metrics;

use thiserror::Error;

pub use client::{
    generate_rollouts, ClientError, DefectRates, GenerationParams, ModelClient, Prompt, PromptRollouts, RemoteClient,
    RemoteRequest, RemoteResponse, RetryPolicy, StubClient, Transport,
};
pub use config::{AdvantageConfig, Config, SchedulerConfig, StubConfig};
pub use io::{
    load_dataset, load_jsonl, read_dataset, read_jsonl, save_jsonl, write_jsonl, write_report, IoError,
    TrajectoryRecord,
};
pub use metrics::{
    aggregate_judge_scores, build_metrics, format_percent, reduction_percent, rollout_indices, score_corpus,
    step_accuracy, token_report, JudgeRecord, JudgeStat, MetricsReport, Rate, ScoredRollout, StepAccuracies,
    TokenReduction, TokenStats,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("id {0} has no matching instance or label")]
    IdMismatch(String),
    #[error("no {0} to aggregate")]
    EmptyInput(&'static str),
    #[error("record {record}: score {score} for {dimension} outside 1..=5")]
    ScoreOutOfRange { record: usize, dimension: String, score: i64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}
