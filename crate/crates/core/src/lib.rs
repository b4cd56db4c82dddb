//! Toolkit for fine-tuning time-series reasoning models on structured
//! six-step chain-of-thought trajectories.
//!
//! - [`trajectory`]: parse, validate and render trajectories.
//! - [`annotation`]: select instances, extract label sets, merge pattern sets.
//! - [`reward`]: format, length, hard and process rewards.
//! - [`grpo`]: group-relative advantages, clipped objective with KL penalty,
//!   and a toy policy simulator.
//! - [`scheduler`]: warmup sampling and accuracy-guided SFT/RL allocation.
//! - [`harness`]: batch I/O, corpus scoring, metrics and model clients.
//!
//! Numeric code is generic over [`numeric::Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar type.

pub mod annotation;
pub mod grpo;
pub mod harness;
pub mod numeric;
pub mod reward;
pub mod scheduler;
pub mod template;
pub mod text;
pub mod trajectory;

use thiserror::Error;

pub use numeric::Scalar;

pub type RewardConfigF64 = reward::RewardConfig<f64>;
pub type RewardConfigF32 = reward::RewardConfig<f32>;
pub type RewardBreakdownF64 = reward::RewardBreakdown<f64>;
pub type RewardBreakdownF32 = reward::RewardBreakdown<f32>;
pub type AdvantageGroupF64 = grpo::AdvantageGroup<f64>;
pub type AdvantageGroupF32 = grpo::AdvantageGroup<f32>;
pub type ClipParamsF64 = grpo::ClipParams<f64>;
pub type RolloutRecordF64 = grpo::RolloutRecord<f64>;
pub type ToyPolicyF64 = grpo::ToyPolicy<f64>;
pub type ToyPolicyF32 = grpo::ToyPolicy<f32>;
pub type SimulationConfigF64 = grpo::SimulationConfig<f64>;
pub type TrainingHistoryF64 = grpo::TrainingHistory<f64>;
pub type ScoredRolloutF64 = harness::ScoredRollout<f64>;
pub type ConfigF64 = harness::Config<f64>;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Trajectory(#[from] trajectory::TrajectoryError),
    #[error(transparent)]
    Annotation(#[from] annotation::AnnotationError),
    #[error(transparent)]
    Reward(#[from] reward::RewardError),
    #[error(transparent)]
    Grpo(#[from] grpo::GrpoError),
    #[error(transparent)]
    Schedule(#[from] scheduler::ScheduleError),
    #[error(transparent)]
    Io(#[from] harness::IoError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
    #[error(transparent)]
    Client(#[from] harness::ClientError),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Input does not match the expected record or config schema.
    Schema,
    /// Well-formed input that breaks an invariant.
    Invariant,
    /// Environment failures such as unreadable files.
    Other,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(harness::IoError::Io { .. }) => ErrorClass::Other,
            Error::Io(_) => ErrorClass::Schema,
            Error::Harness(harness::HarnessError::Config(_)) => ErrorClass::Schema,
            Error::Reward(_) => ErrorClass::Schema,
            Error::Annotation(annotation::AnnotationError::RuleFile(_)) => ErrorClass::Schema,
            Error::Client(harness::ClientError::Transport(_)) => ErrorClass::Other,
            _ => ErrorClass::Invariant,
        }
    }
}
