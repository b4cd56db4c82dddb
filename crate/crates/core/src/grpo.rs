//! Group-relative policy optimization on a categorical toy policy.
//!
//! The math here mirrors what a GRPO trainer does per prompt: standardize
//! the `G` rollout rewards within their group, form per-token importance
//! ratios against the sampling policy, clip them, and subtract a KL penalty
//! to a frozen reference. The toy policy is a softmax over a finite answer
//! alphabet, which keeps every quantity exact and cheap.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnswerKind, LabelSet};
use crate::numeric::{log_softmax, mean, population_variance, softmax, Scalar};
use crate::reward::{total_reward, RewardConfig};
use crate::template::{render_template, TemplateFill};
use crate::trajectory::{parse_trajectory, ParseMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrpoError {
    #[error("group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("epsilon must be finite and >= 0")]
    InvalidEpsilon,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("zero reward spread with epsilon = 0")]
    DegenerateGroup,
    #[error("reference assigns zero probability to index {0} where the policy does not")]
    SupportMismatch(usize),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty group")]
    EmptyGroup,
    #[error("rollout {0} has no tokens")]
    EmptyRollout(usize),
    #[error("action {action} outside alphabet of size {size}")]
    ActionOutOfRange { action: usize, size: usize },
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
}

/// Standardized rewards of one rollout group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageGroup<T> {
    pub rewards: Vec<T>,
    pub mu: T,
    pub sigma: T,
    pub epsilon: T,
    pub advantages: Vec<T>,
}

/// `A_i = (r_i - mean) / sqrt(pop_var + epsilon)`.
pub fn normalize_advantages<T: Scalar>(rewards: &[T], epsilon: T) -> Result<AdvantageGroup<T>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    if !epsilon.is_finite() || epsilon < T::zero() {
        return Err(GrpoError::InvalidEpsilon);
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(GrpoError::NonFinite("rewards"));
    }
    let mu = mean(rewards).expect("non-empty");
    let sigma = (population_variance(rewards).expect("non-empty") + epsilon).sqrt();
    if sigma == T::zero() {
        return Err(GrpoError::DegenerateGroup);
    }
    Ok(AdvantageGroup {
        rewards: rewards.to_vec(),
        mu,
        sigma,
        epsilon,
        advantages: rewards.iter().map(|&r| (r - mu) / sigma).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct ClipParams<T> {
    /// Clip range: ratios are clamped to `[1 - eps_clip, 1 + eps_clip]`.
    pub eps_clip: T,
    /// KL penalty strength.
    pub beta: T,
}

impl<T: Scalar> Default for ClipParams<T> {
    fn default() -> Self {
        Self {
            eps_clip: T::lit(0.2),
            beta: T::lit(0.01),
        }
    }
}

impl<T: Scalar> ClipParams<T> {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(self.eps_clip > T::zero() && self.eps_clip < T::one()) {
            return Err(GrpoError::ConfigInvalid(format!("eps_clip = {} not in (0, 1)", self.eps_clip)));
        }
        if !self.beta.is_finite() || self.beta < T::zero() {
            return Err(GrpoError::ConfigInvalid(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        Ok(())
    }
}

pub fn importance_ratio<T: Scalar>(logp_new: T, logp_old: T) -> T {
    (logp_new - logp_old).exp()
}

/// `min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)`.
pub fn clipped_term<T: Scalar>(rho: T, advantage: T, eps_clip: T) -> T {
    let clipped = rho.max(T::one() - eps_clip).min(T::one() + eps_clip);
    (rho * advantage).min(clipped * advantage)
}

fn check_distribution<T: Scalar>(p: &[T], name: &str) -> Result<(), GrpoError> {
    if p.iter().any(|&x| !x.is_finite() || x < T::zero()) {
        return Err(GrpoError::InvalidDistribution(format!("{name} has negative or non-finite entries")));
    }
    let total: T = p.iter().copied().sum();
    if (total - T::one()).abs() > T::lit(1e-6) {
        return Err(GrpoError::InvalidDistribution(format!("{name} sums to {total}")));
    }
    Ok(())
}

/// Exact `KL(p || q) = sum p ln(p / q)` over a shared finite alphabet.
pub fn kl_penalty<T: Scalar>(p: &[T], q: &[T]) -> Result<T, GrpoError> {
    if p.len() != q.len() {
        return Err(GrpoError::LengthMismatch(format!("p has {} entries, q has {}", p.len(), q.len())));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let mut kl = T::zero();
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == T::zero() {
            continue;
        }
        if qi == T::zero() {
            return Err(GrpoError::SupportMismatch(i));
        }
        kl = kl + pi * (pi / qi).ln();
    }
    // rounding can leave a tiny negative residue when p and q nearly agree
    Ok(kl.max(T::zero()))
}

/// One sampled rollout with the per-position quantities the objective needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord<T> {
    pub actions: Vec<usize>,
    pub logp_old: Vec<T>,
    pub logp_new: Vec<T>,
    pub logp_ref: Vec<T>,
    /// Exact `KL(pi_theta || pi_ref)` at each position.
    pub kl_to_ref: Vec<T>,
    pub reward: T,
    pub advantage: T,
}

impl<T: Scalar> RolloutRecord<T> {
    /// Record for a sequence drawn from position-independent categorical
    /// policies (`old`, `current`, `reference` are probability vectors).
    pub fn from_categorical(
        actions: Vec<usize>,
        old: &[T],
        current: &[T],
        reference: &[T],
        reward: T,
        advantage: T,
    ) -> Result<Self, GrpoError> {
        let size = current.len();
        if old.len() != size || reference.len() != size {
            return Err(GrpoError::LengthMismatch("policies over different alphabets".into()));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= size) {
            return Err(GrpoError::ActionOutOfRange { action: a, size });
        }
        let kl = kl_penalty(current, reference)?;
        let logp = |dist: &[T]| actions.iter().map(|&a| dist[a].ln()).collect::<Vec<T>>();
        Ok(Self {
            logp_old: logp(old),
            logp_new: logp(current),
            logp_ref: logp(reference),
            kl_to_ref: vec![kl; actions.len()],
            actions,
            reward,
            advantage,
        })
    }

    fn check(&self, i: usize) -> Result<(), GrpoError> {
        let n = self.actions.len();
        if n == 0 {
            return Err(GrpoError::EmptyRollout(i));
        }
        for (name, v) in [
            ("logp_old", &self.logp_old),
            ("logp_new", &self.logp_new),
            ("logp_ref", &self.logp_ref),
            ("kl_to_ref", &self.kl_to_ref),
        ] {
            if v.len() != n {
                return Err(GrpoError::LengthMismatch(format!("rollout {i}: {name} has {} entries, expected {n}", v.len())));
            }
        }
        if !self.reward.is_finite() || !self.advantage.is_finite() {
            return Err(GrpoError::NonFinite("rollout reward/advantage"));
        }
        Ok(())
    }
}

/// `1/G sum_i 1/|y_i| sum_k [clipped(rho_ik, A_i) - beta KL_ik]`.
pub fn grpo_objective<T: Scalar>(group: &[RolloutRecord<T>], params: &ClipParams<T>) -> Result<T, GrpoError> {
    if group.is_empty() {
        return Err(GrpoError::EmptyGroup);
    }
    params.validate()?;
    let mut total = T::zero();
    for (i, r) in group.iter().enumerate() {
        r.check(i)?;
        let per_token: T = r
            .logp_new
            .iter()
            .zip(&r.logp_old)
            .zip(&r.kl_to_ref)
            .map(|((&new, &old), &kl)| {
                clipped_term(importance_ratio(new, old), r.advantage, params.eps_clip) - params.beta * kl
            })
            .sum();
        total = total + per_token / T::from_count(r.actions.len());
    }
    Ok(total / T::from_count(group.len()))
}

/// Softmax policy over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy<T> {
    pub logits: Vec<T>,
    pub temperature: T,
    pub learning_rate: T,
}

impl<T: Scalar> ToyPolicy<T> {
    pub fn new(logits: Vec<T>, temperature: T, learning_rate: T) -> Result<Self, GrpoError> {
        if logits.is_empty() {
            return Err(GrpoError::ConfigInvalid("empty action alphabet".into()));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(GrpoError::NonFinite("logits"));
        }
        if !(temperature.is_finite() && temperature > T::zero()) {
            return Err(GrpoError::ConfigInvalid(format!("temperature = {temperature} must be > 0")));
        }
        if !(learning_rate.is_finite() && learning_rate >= T::zero()) {
            return Err(GrpoError::ConfigInvalid(format!("learning_rate = {learning_rate} must be >= 0")));
        }
        Ok(Self { logits, temperature, learning_rate })
    }

    /// Uniform policy over `n` actions.
    pub fn uniform(n: usize, temperature: T, learning_rate: T) -> Result<Self, GrpoError> {
        Self::new(vec![T::zero(); n], temperature, learning_rate)
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn probabilities(&self) -> Vec<T> {
        softmax(&self.logits, self.temperature)
    }

    pub fn log_probabilities(&self) -> Vec<T> {
        log_softmax(&self.logits, self.temperature)
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> usize {
        let weights: Vec<f64> = self.probabilities().into_iter().map(Scalar::as_f64).collect();
        WeightedIndex::new(&weights)
            .expect("softmax weights are positive and finite")
            .sample(rng)
    }
}

/// Gradient with respect to the logits of
/// `1/G sum_i A_i log pi(y_i) - beta KL(pi || pi_ref)`,
/// where `log pi(y_i)` sums over the rollout's actions. The KL term is
/// dropped when `reference` is `None`.
pub fn surrogate_gradient<T: Scalar>(
    policy: &ToyPolicy<T>,
    reference: Option<&ToyPolicy<T>>,
    group: &[RolloutRecord<T>],
    beta: T,
) -> Result<Vec<T>, GrpoError> {
    if group.is_empty() {
        return Err(GrpoError::EmptyGroup);
    }
    let n = policy.len();
    let probs = policy.probabilities();
    let inv_tau = T::one() / policy.temperature;
    let inv_g = T::one() / T::from_count(group.len());
    let mut grad = vec![T::zero(); n];

    for r in group {
        if let Some(&a) = r.actions.iter().find(|&&a| a >= n) {
            return Err(GrpoError::ActionOutOfRange { action: a, size: n });
        }
        let scale = r.advantage * inv_g * inv_tau;
        let len = T::from_count(r.actions.len());
        for &a in &r.actions {
            grad[a] = grad[a] + scale;
        }
        for (g, &p) in grad.iter_mut().zip(&probs) {
            *g = *g - scale * len * p;
        }
    }

    if let Some(reference) = reference {
        if reference.len() != n {
            return Err(GrpoError::LengthMismatch("reference over a different alphabet".into()));
        }
        if beta > T::zero() {
            let ref_probs = reference.probabilities();
            let kl = kl_penalty(&probs, &ref_probs)?;
            for ((g, &p), &q) in grad.iter_mut().zip(&probs).zip(&ref_probs) {
                *g = *g - beta * inv_tau * p * ((p / q).ln() - kl);
            }
        }
    }
    Ok(grad)
}

/// One ascent step of size `eta` on the surrogate.
pub fn policy_gradient_step<T: Scalar>(
    policy: &ToyPolicy<T>,
    reference: Option<&ToyPolicy<T>>,
    group: &[RolloutRecord<T>],
    params: &ClipParams<T>,
    eta: T,
) -> Result<ToyPolicy<T>, GrpoError> {
    params.validate()?;
    let grad = surrogate_gradient(policy, reference, group, params.beta)?;
    let logits: Vec<T> = policy.logits.iter().zip(&grad).map(|(&z, &g)| z + eta * g).collect();
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(GrpoError::NonFinite("updated logits"));
    }
    Ok(ToyPolicy {
        logits,
        temperature: policy.temperature,
        learning_rate: policy.learning_rate,
    })
}

/// Multiple-choice task with a single correct answer.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticAnswerTask {
    pub answers: Vec<String>,
    pub correct: usize,
    pub labels: LabelSet,
}

impl SyntheticAnswerTask {
    /// Options `A`, `B`, ... with `correct` the index of the right one.
    pub fn choice(options: usize, correct: usize) -> Result<Self, GrpoError> {
        if !(2..=26).contains(&options) || correct >= options {
            return Err(GrpoError::ConfigInvalid(format!(
                "need 2..=26 options and a correct index below that, got {options} and {correct}"
            )));
        }
        let answers: Vec<String> = (0..options).map(|i| char::from(b'A' + i as u8).to_string()).collect();
        let labels = LabelSet::new(
            answers[correct].clone(),
            "most likely cause of the anomaly",
            ["sudden spike", "upward trend"],
            AnswerKind::Choice,
        );
        Ok(Self { answers, correct, labels })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar"))]
pub struct SimulationConfig<T> {
    pub group_size: usize,
    pub temperature: T,
    pub learning_rate: T,
    /// Outer iterations; the reference policy refreshes at the start of each.
    pub iterations: usize,
    /// Policy updates per iteration; the sampling policy refreshes before each.
    pub steps_per_iteration: usize,
    pub advantage_epsilon: T,
    pub seed: u64,
    pub reward: RewardConfig<T>,
    pub clip: ClipParams<T>,
    /// Starting logits; uniform when absent.
    pub initial_logits: Option<Vec<T>>,
}

impl<T: Scalar> Default for SimulationConfig<T> {
    fn default() -> Self {
        Self {
            group_size: 4,
            temperature: T::lit(0.8),
            learning_rate: T::lit(1.0),
            iterations: 200,
            steps_per_iteration: 1,
            advantage_epsilon: T::lit(1e-8),
            seed: 0,
            reward: RewardConfig::default(),
            clip: ClipParams::default(),
            initial_logits: None,
        }
    }
}

impl<T: Scalar> SimulationConfig<T> {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.group_size < 2 {
            return Err(GrpoError::ConfigInvalid(format!("group_size = {} must be >= 2", self.group_size)));
        }
        if self.iterations == 0 || self.steps_per_iteration == 0 {
            return Err(GrpoError::ConfigInvalid("iterations and steps_per_iteration must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= T::zero()) {
            return Err(GrpoError::ConfigInvalid(format!("learning_rate = {} must be >= 0", self.learning_rate)));
        }
        if !(self.temperature.is_finite() && self.temperature > T::zero()) {
            return Err(GrpoError::ConfigInvalid(format!("temperature = {} must be > 0", self.temperature)));
        }
        if !self.advantage_epsilon.is_finite() || self.advantage_epsilon < T::zero() {
            return Err(GrpoError::InvalidEpsilon);
        }
        self.clip.validate()?;
        self.reward
            .validate()
            .map_err(|e| GrpoError::ConfigInvalid(e.to_string()))
    }
}

/// Per-iteration statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats<T> {
    pub iteration: usize,
    /// Mean reward over the rollouts sampled in this iteration.
    pub mean_reward: T,
    /// Probability of the correct answer after the iteration's updates.
    pub p_correct: T,
    /// `KL(pi_theta || pi_ref)` after the iteration's updates.
    pub kl_to_ref: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory<T> {
    pub iterations: Vec<IterationStats<T>>,
    pub final_policy: ToyPolicy<T>,
}

impl<T: Scalar> TrainingHistory<T> {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.iterations {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for row in &self.iterations {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Means of consecutive non-overlapping windows of `window` iterations;
    /// a trailing partial window is dropped.
    pub fn windowed_mean_reward(&self, window: usize) -> Vec<T> {
        self.iterations
            .chunks_exact(window.max(1))
            .map(|c| c.iter().map(|s| s.mean_reward).sum::<T>() / T::from_count(c.len()))
            .collect()
    }
}

/// Rollout -> template -> reward -> group advantage -> policy update, repeated.
pub fn simulate_training<T: Scalar>(
    task: &SyntheticAnswerTask,
    cfg: &SimulationConfig<T>,
) -> Result<TrainingHistory<T>, GrpoError> {
    cfg.validate()?;
    let n = task.answers.len();
    let logits = match &cfg.initial_logits {
        Some(z) if z.len() != n => {
            return Err(GrpoError::LengthMismatch(format!("{} initial logits for {n} answers", z.len())))
        }
        Some(z) => z.clone(),
        None => vec![T::zero(); n],
    };
    let mut policy = ToyPolicy::new(logits, cfg.temperature, cfg.learning_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let score = |answer: usize| -> T {
        let text = render_template(&TemplateFill::from_labels(&task.labels, &task.answers[answer]));
        let (t, _) = parse_trajectory(&text, ParseMode::Lenient);
        total_reward(&t, &task.labels, &cfg.reward).total
    };

    let mut history = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let reference = policy.clone();
        let ref_probs = reference.probabilities();
        let mut sampled_rewards = Vec::with_capacity(cfg.group_size * cfg.steps_per_iteration);
        for _ in 0..cfg.steps_per_iteration {
            let old = policy.clone();
            let old_probs = old.probabilities();
            let actions: Vec<usize> = (0..cfg.group_size).map(|_| old.sample(&mut rng)).collect();
            let rewards: Vec<T> = actions.iter().map(|&a| score(a)).collect();
            let group = normalize_advantages(&rewards, cfg.advantage_epsilon)?;
            let cur_probs = policy.probabilities();
            let records = actions
                .iter()
                .zip(&group.advantages)
                .zip(&rewards)
                .map(|((&a, &adv), &r)| RolloutRecord::from_categorical(vec![a], &old_probs, &cur_probs, &ref_probs, r, adv))
                .collect::<Result<Vec<_>, _>>()?;
            policy = policy_gradient_step(&policy, Some(&reference), &records, &cfg.clip, cfg.learning_rate)?;
            sampled_rewards.extend(rewards);
        }
        let probs = policy.probabilities();
        history.push(IterationStats {
            iteration,
            mean_reward: mean(&sampled_rewards).expect("non-empty"),
            p_correct: probs[task.correct],
            kl_to_ref: kl_penalty(&probs, &ref_probs)?,
        });
    }
    Ok(TrainingHistory {
        iterations: history,
        final_policy: policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantages_examples() {
        let g = normalize_advantages(&[1.0f64, 1.0, 1.0, 1.0], 1e-8).unwrap();
        assert!(g.advantages.iter().all(|a| a.abs() < 1e-3));
        let g = normalize_advantages(&[0.0f64, 2.0], 0.0).unwrap();
        assert_eq!(g.advantages, vec![-1.0, 1.0]);
        // (r - 2.5) / sqrt(1.25)
        let g = normalize_advantages(&[1.0f64, 2.0, 3.0, 4.0], 0.0).unwrap();
        let expected = [-1.341641, -0.447214, 0.447214, 1.341641];
        for (a, e) in g.advantages.iter().zip(expected) {
            assert!((a - e).abs() < 1e-6);
        }
        let g32 = normalize_advantages(&[1.0f32, 2.0, 3.0, 4.0], 0.0).unwrap();
        assert!((g32.advantages[0] + 1.341641).abs() < 1e-5);
    }

    #[test]
    fn advantage_errors() {
        assert_eq!(normalize_advantages(&[1.0f64], 0.0), Err(GrpoError::GroupTooSmall(1)));
        assert_eq!(normalize_advantages(&[2.0f64, 2.0], 0.0), Err(GrpoError::DegenerateGroup));
        assert_eq!(normalize_advantages(&[1.0f64, 2.0], -1.0), Err(GrpoError::InvalidEpsilon));
        assert!(normalize_advantages(&[1.0f64, f64::NAN], 0.0).is_err());
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(importance_ratio(-1.3f64, -1.3), 1.0);
        assert!((importance_ratio(2f64.ln(), 0.0) - 2.0).abs() < 1e-15);
        assert!((importance_ratio(0.0, 2f64.ln()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clipped_term(1.0f64, 2.0, 0.2), 2.0);
        assert_eq!(clipped_term(2.0f64, 1.0, 0.2), 1.2);
        assert_eq!(clipped_term(0.5f64, -1.0, 0.2), -0.8);
    }

    #[test]
    fn kl_examples() {
        let p = [0.2f64, 0.3, 0.5];
        assert_eq!(kl_penalty(&p, &p).unwrap(), 0.0);
        let v = kl_penalty(&[0.5f64, 0.5], &[0.25, 0.75]).unwrap();
        let direct = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((v - direct).abs() < 1e-15);
        assert!((v - 0.143841).abs() < 1e-6);
        assert_eq!(kl_penalty(&[0.5f64, 0.5], &[1.0, 0.0]), Err(GrpoError::SupportMismatch(1)));
        assert_eq!(kl_penalty(&[0.0f64, 1.0], &[1.0, 0.0]), Err(GrpoError::SupportMismatch(1)));
        assert!(kl_penalty(&[1.0f64, 0.0], &[0.5, 0.5]).is_ok());
        assert!(matches!(kl_penalty(&[0.6f64, 0.6], &[0.5, 0.5]), Err(GrpoError::InvalidDistribution(_))));
    }

    fn record(adv: f64, logp_new: f64, logp_old: f64) -> RolloutRecord<f64> {
        RolloutRecord {
            actions: vec![0],
            logp_old: vec![logp_old],
            logp_new: vec![logp_new],
            logp_ref: vec![logp_new],
            kl_to_ref: vec![0.0],
            reward: 0.0,
            advantage: adv,
        }
    }

    #[test]
    fn objective_examples() {
        let no_kl = ClipParams { eps_clip: 0.2, beta: 0.0 };
        let g = [record(-1.0, -0.5, -0.5), record(1.0, -0.5, -0.5)];
        assert_eq!(grpo_objective(&g, &no_kl).unwrap(), 0.0);

        let g = [record(1.0, 2f64.ln() - 1.0, -1.0)];
        assert!((grpo_objective(&g, &no_kl).unwrap() - 1.2).abs() < 1e-12);

        let p = [0.25f64, 0.75];
        let rec = RolloutRecord::from_categorical(vec![1, 0, 1], &p, &p, &p, 1.0, 0.7).unwrap();
        let with_kl = ClipParams { eps_clip: 0.2, beta: 1.0 };
        assert_eq!(grpo_objective(std::slice::from_ref(&rec), &with_kl).unwrap(), grpo_objective(&[rec], &no_kl).unwrap());
    }

    #[test]
    fn objective_averages_per_token_then_per_rollout() {
        let p = [0.5f64, 0.5];
        let q = [0.25f64, 0.75];
        let params = ClipParams { eps_clip: 0.2, beta: 0.5 };
        let a = RolloutRecord::from_categorical(vec![0, 0, 1], &p, &p, &q, 1.0, 2.0).unwrap();
        let b = RolloutRecord::from_categorical(vec![1], &p, &p, &q, 0.0, -1.0).unwrap();
        let kl = kl_penalty(&p, &q).unwrap();
        let expected = ((2.0 - 0.5 * kl) + (-1.0 - 0.5 * kl)) / 2.0;
        assert!((grpo_objective(&[a, b], &params).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn objective_errors() {
        let params = ClipParams::<f64>::default();
        assert_eq!(grpo_objective(&[], &params), Err(GrpoError::EmptyGroup));
        let mut r = record(1.0, 0.0, 0.0);
        r.actions.clear();
        assert_eq!(grpo_objective(&[r], &params), Err(GrpoError::EmptyRollout(0)));
        let mut r = record(1.0, 0.0, 0.0);
        r.kl_to_ref.push(0.0);
        assert!(matches!(grpo_objective(&[r], &params), Err(GrpoError::LengthMismatch(_))));
        let p = [0.5f64, 0.5];
        assert_eq!(
            RolloutRecord::from_categorical(vec![0], &p, &p, &[1.0, 0.0], 0.0, 0.0),
            Err(GrpoError::SupportMismatch(1))
        );
    }

    #[test]
    fn zero_advantage_leaves_logits() {
        let policy = ToyPolicy::new(vec![0.1f64, -0.4, 0.9], 0.8, 0.5).unwrap();
        let p = policy.probabilities();
        let group: Vec<_> = (0..3)
            .map(|a| RolloutRecord::from_categorical(vec![a], &p, &p, &p, 1.0, 0.0).unwrap())
            .collect();
        let next = policy_gradient_step(&policy, None, &group, &ClipParams::default(), 0.5).unwrap();
        assert_eq!(next.logits, policy.logits);
    }

    #[test]
    fn positive_advantage_raises_probability() {
        let policy = ToyPolicy::new(vec![0.3f64, 0.0, -0.2, 0.5], 0.8, 0.5).unwrap();
        let p = policy.probabilities();
        let rec = RolloutRecord::from_categorical(vec![2], &p, &p, &p, 1.0, 1.0).unwrap();
        let next = policy_gradient_step(&policy, Some(&policy), &[rec], &ClipParams::default(), 0.5).unwrap();
        assert!(next.probabilities()[2] > p[2]);
    }

    #[test]
    fn action_out_of_range_rejected() {
        let policy = ToyPolicy::<f64>::uniform(2, 1.0, 0.1).unwrap();
        let mut r = record(1.0, 0.0, 0.0);
        r.actions = vec![5];
        assert_eq!(
            surrogate_gradient(&policy, None, &[r], 0.0),
            Err(GrpoError::ActionOutOfRange { action: 5, size: 2 })
        );
    }

    #[test]
    fn toy_policy_validation() {
        assert!(ToyPolicy::<f64>::new(vec![], 1.0, 0.1).is_err());
        assert!(ToyPolicy::new(vec![0.0f64], 0.0, 0.1).is_err());
        assert!(ToyPolicy::new(vec![f64::INFINITY], 1.0, 0.1).is_err());
        let p = ToyPolicy::new(vec![1.0f64, 2.0, 3.0], 0.8, 0.1).unwrap();
        assert!((p.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simulation_config_errors() {
        let task = SyntheticAnswerTask::choice(4, 1).unwrap();
        let bad = SimulationConfig::<f64> { group_size: 1, ..Default::default() };
        assert!(matches!(simulate_training(&task, &bad), Err(GrpoError::ConfigInvalid(_))));
        let bad = SimulationConfig::<f64> { iterations: 0, ..Default::default() };
        assert!(matches!(simulate_training(&task, &bad), Err(GrpoError::ConfigInvalid(_))));
        let bad = SimulationConfig::<f64> { learning_rate: -0.1, ..Default::default() };
        assert!(matches!(simulate_training(&task, &bad), Err(GrpoError::ConfigInvalid(_))));
        assert!(SyntheticAnswerTask::choice(4, 4).is_err());
    }

    #[test]
    fn zero_learning_rate_is_flat() {
        let task = SyntheticAnswerTask::choice(4, 2).unwrap();
        let cfg = SimulationConfig::<f64> { learning_rate: 0.0, iterations: 30, ..Default::default() };
        let h = simulate_training(&task, &cfg).unwrap();
        assert!(h.iterations.iter().all(|s| s.p_correct == 0.25 && s.kl_to_ref == 0.0));
    }

    #[test]
    fn simulation_is_deterministic_and_learns() {
        let task = SyntheticAnswerTask::choice(4, 0).unwrap();
        let cfg = SimulationConfig::<f64> { seed: 11, ..Default::default() };
        let a = simulate_training(&task, &cfg).unwrap();
        let b = simulate_training(&task, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.iterations.last().unwrap().p_correct > 0.9);
    }

    #[test]
    fn simulation_runs_in_single_precision() {
        let task = SyntheticAnswerTask::choice(4, 3).unwrap();
        let cfg = SimulationConfig::<f32> { seed: 5, iterations: 100, ..Default::default() };
        let h = simulate_training(&task, &cfg).unwrap();
        assert!(h.iterations.last().unwrap().p_correct > 0.5);
    }

    #[test]
    fn history_csv_columns() {
        let task = SyntheticAnswerTask::choice(3, 0).unwrap();
        let cfg = SimulationConfig::<f64> { iterations: 2, ..Default::default() };
        let h = simulate_training(&task, &cfg).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "iteration,mean_reward,p_correct,kl_to_ref");
        assert_eq!(text.lines().count(), 3);
    }
}
