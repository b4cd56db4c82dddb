//! `tsreason`: command-line front end for the trajectory, reward, advantage,
//! scheduling and metrics pipeline.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 schema error in an input
//! or config file, 3 invariant violation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use tsreason_core::annotation::{
    default_rules, extract_label_set, merge_pattern_sets, parse_rules, select_instances, Instance, LabelRecord,
};
use tsreason_core::grpo::{normalize_advantages, simulate_training, SyntheticAnswerTask};
use tsreason_core::harness::{
    aggregate_judge_scores, build_metrics, generate_rollouts, read_dataset, read_jsonl, score_corpus, write_jsonl,
    Config, JudgeRecord, Prompt, ScoredRollout, StubClient, TrajectoryRecord,
};
use tsreason_core::scheduler::{allocation_stats, build_schedule, EvaluationRecord, Strategy, WarmupConfig};
use tsreason_core::trajectory::{parse_trajectory, ParseMode, StepBlock, Violation};
use tsreason_core::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "tsreason", version, about = "Time-series reasoning trajectory toolkit")]
struct Cli {
    /// TOML configuration; defaults apply to anything omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate trajectories and report violations and extracted fields.
    Parse {
        /// Trajectory JSONL, or `-` for stdin.
        input: PathBuf,
        #[arg(long, value_enum, default_value = "strict")]
        mode: Mode,
    },
    /// Select instances by keyword and extract label sets from expert trajectories.
    Label {
        dataset: PathBuf,
        /// Keyword rule file; the built-in anomaly-detection rule when absent.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// JSONL of `{id, patterns}` merged into the extracted pattern sets.
        #[arg(long)]
        patterns: Option<PathBuf>,
    },
    /// Produce stub rollouts for every labelled instance.
    Generate {
        dataset: PathBuf,
        labels: PathBuf,
    },
    /// Score trajectories against label sets.
    Score {
        dataset: PathBuf,
        trajectories: PathBuf,
        labels: PathBuf,
    },
    /// Group-normalized advantages from scored rollouts.
    Advantage {
        /// Scored JSONL, or `-` for stdin.
        scores: PathBuf,
    },
    /// Allocate instances to warmup, SFT and RL stages.
    Schedule {
        dataset: PathBuf,
        /// Evaluation records from the warmed-up model.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long)]
        warmup_fraction: Option<f64>,
        /// Writes allocation statistics as JSON.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Run the toy policy-gradient simulator and emit per-iteration statistics.
    Simulate {
        #[arg(long, default_value_t = 4)]
        answers: usize,
        #[arg(long, default_value_t = 0)]
        correct: usize,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Accuracy, step-wise accuracy and token statistics.
    Metrics {
        dataset: PathBuf,
        trajectories: PathBuf,
        scores: PathBuf,
        /// Baseline trajectories for the token-reduction figure.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Mean judge score per dimension.
    JudgeAgg {
        /// Judge JSONL, or `-` for stdin.
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Strict,
    Lenient,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    ModelGuided,
    FullRl,
    FullSft,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::ModelGuided => Strategy::ModelGuided,
            StrategyArg::FullRl => Strategy::FullRl,
            StrategyArg::FullSft => Strategy::FullSft,
        }
    }
}

/// Lifts library errors into [`Error`] so the exit code can be classified.
trait CoreResult<T> {
    fn core(self) -> Result<T, Error>;
}

impl<T, E: Into<Error>> CoreResult<T> for Result<T, E> {
    fn core(self) -> Result<T, Error> {
        self.map_err(Into::into)
    }
}

#[derive(Serialize)]
struct ParsedLine {
    id: String,
    well_formed: bool,
    violations: Vec<Violation>,
    steps: Vec<StepBlock>,
    answer: Option<String>,
}

#[derive(Deserialize)]
struct ExternalPatterns {
    id: String,
    patterns: Vec<String>,
}

#[derive(Serialize)]
struct AdvantageLine {
    id: String,
    rollout_index: usize,
    reward: f64,
    advantage: f64,
}

fn open_input(path: &Path) -> anyhow::Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(BufReader::new(file)))
}

fn jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let rows = read_jsonl(open_input(path)?)
        .core()
        .with_context(|| path.display().to_string())?;
    Ok(rows)
}

fn dataset(path: &Path) -> anyhow::Result<Vec<Instance>> {
    let rows = read_dataset(open_input(path)?)
        .core()
        .with_context(|| path.display().to_string())?;
    Ok(rows)
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn emit_jsonl<T: Serialize>(items: &[T], out: Option<&Path>) -> anyhow::Result<()> {
    write_jsonl(items, output(out)?)?;
    Ok(())
}

fn load_config(cli: &Cli) -> anyhow::Result<Config<f64>> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path).core()?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.simulation.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Parse { input, mode } => {
            let mode = match mode {
                Mode::Strict => ParseMode::Strict,
                Mode::Lenient => ParseMode::Lenient,
            };
            let lines: Vec<ParsedLine> = jsonl::<TrajectoryRecord>(input)?
                .into_iter()
                .map(|rec| {
                    let (t, report) = parse_trajectory(&rec.raw_text, mode);
                    ParsedLine {
                        id: rec.id,
                        well_formed: report.well_formed,
                        violations: report.violations,
                        steps: t.steps,
                        answer: t.answer,
                    }
                })
                .collect();
            emit_jsonl(&lines, out)
        }
        Command::Label {
            dataset: path,
            rules,
            patterns,
        } => {
            let data = dataset(path)?;
            let rules = match rules {
                Some(p) => parse_rules(&std::fs::read_to_string(p).with_context(|| p.display().to_string())?).core()?,
                None => default_rules(),
            };
            let external: BTreeMap<String, BTreeSet<String>> = match patterns {
                Some(p) => jsonl::<ExternalPatterns>(p)?
                    .into_iter()
                    .map(|e| (e.id, e.patterns.into_iter().collect()))
                    .collect(),
                None => BTreeMap::new(),
            };
            let selected = select_instances(&data, &rules);
            info!("selected {} of {} instances", selected.len(), data.len());
            let mut records = Vec::new();
            for inst in &selected {
                match extract_label_set(inst) {
                    Ok(mut labels) => {
                        if let Some(extra) = external.get(&inst.id) {
                            labels.pattern_set = merge_pattern_sets(&labels.pattern_set, extra, cfg.dedup_threshold);
                        }
                        records.push(LabelRecord {
                            id: inst.id.clone(),
                            labels,
                        });
                    }
                    Err(e) => warn!("skipping: {e}"),
                }
            }
            emit_jsonl(&records, out)
        }
        Command::Generate { dataset: path, labels } => {
            let data = dataset(path)?;
            let labels: BTreeMap<String, LabelRecord> = jsonl::<LabelRecord>(labels)?
                .into_iter()
                .map(|l| (l.id.clone(), l))
                .collect();
            let prompts: Vec<Prompt> = data
                .iter()
                .filter_map(|inst| {
                    labels.get(&inst.id).map(|l| Prompt {
                        id: inst.id.clone(),
                        text: inst.question.clone(),
                        labels: Some(l.labels.clone()),
                    })
                })
                .collect();
            let client = StubClient::new(cfg.seed, cfg.stub.defects);
            let task_of: BTreeMap<&str, String> = data.iter().map(|i| (i.id.as_str(), i.task.name.to_string())).collect();
            let mut rows = Vec::new();
            for r in generate_rollouts(&client, &prompts, &cfg.stub.generation, cfg.stub.retry).core()? {
                match r.result {
                    Ok(texts) => rows.extend(texts.into_iter().map(|raw_text| TrajectoryRecord {
                        task: task_of[r.id.as_str()].clone(),
                        id: r.id.clone(),
                        raw_text,
                        token_count: None,
                    })),
                    Err(e) => warn!("prompt {} failed: {e}", r.id),
                }
            }
            emit_jsonl(&rows, out)
        }
        Command::Score {
            dataset: path,
            trajectories,
            labels,
        } => {
            let data = dataset(path)?;
            let trajectories: Vec<TrajectoryRecord> = jsonl(trajectories)?;
            let labels: Vec<LabelRecord> = jsonl(labels)?;
            let scored = score_corpus(&data, &trajectories, &labels, &cfg.reward).core()?;
            emit_jsonl(&scored, out)
        }
        Command::Advantage { scores } => {
            let scored: Vec<ScoredRollout<f64>> = jsonl(scores)?;
            let mut groups: Vec<(String, Vec<&ScoredRollout<f64>>)> = Vec::new();
            for s in &scored {
                match groups.iter_mut().find(|(id, _)| *id == s.id) {
                    Some((_, g)) => g.push(s),
                    None => groups.push((s.id.clone(), vec![s])),
                }
            }
            let mut lines = Vec::new();
            for (id, group) in groups {
                let rewards: Vec<f64> = group.iter().map(|s| s.total).collect();
                let adv = normalize_advantages(&rewards, cfg.advantage.epsilon)
                    .core()
                    .with_context(|| format!("group {id}"))?;
                lines.extend(group.iter().zip(adv.advantages).map(|(s, advantage)| AdvantageLine {
                    id: s.id.clone(),
                    rollout_index: s.rollout_index,
                    reward: s.total,
                    advantage,
                }));
            }
            emit_jsonl(&lines, out)
        }
        Command::Schedule {
            dataset: path,
            records,
            strategy,
            warmup_fraction,
            stats,
        } => {
            let data = dataset(path)?;
            let records: Option<Vec<EvaluationRecord>> = records.as_deref().map(jsonl).transpose()?;
            let strategy = strategy.map(Strategy::from).unwrap_or(cfg.scheduler.strategy);
            let warmup = WarmupConfig {
                fraction: warmup_fraction.unwrap_or(cfg.scheduler.warmup_fraction),
                seed: cfg.seed,
            };
            let plan = build_schedule(&data, records.as_deref(), strategy, &warmup).core()?;
            let summary = allocation_stats(&plan);
            info!(
                "warmup {} sft {} rl {} ratio {:?}",
                summary.warmup, summary.sft_normal, summary.rl_hard, summary.rl_to_sft_ratio
            );
            if let Some(p) = stats {
                emit_json(&summary, Some(p))?;
            }
            emit_jsonl(&plan.lines(), out)
        }
        Command::Simulate {
            answers,
            correct,
            iterations,
            learning_rate,
            format,
        } => {
            let task = SyntheticAnswerTask::choice(*answers, *correct).core()?;
            let mut sim = cfg.simulation.clone();
            if let Some(n) = iterations {
                sim.iterations = *n;
            }
            if let Some(lr) = learning_rate {
                sim.learning_rate = *lr;
            }
            let history = simulate_training(&task, &sim).core()?;
            let last = history.iterations.last().expect("at least one iteration");
            info!("final P(correct) {:.4} after {} iterations", last.p_correct, history.iterations.len());
            let mut w = output(out)?;
            match format {
                Format::Csv => history.write_csv(&mut w)?,
                Format::Jsonl => history.write_jsonl(&mut w)?,
            }
            w.flush()?;
            Ok(())
        }
        Command::Metrics {
            dataset: path,
            trajectories,
            scores,
            baseline,
        } => {
            let data = dataset(path)?;
            let trajectories: Vec<TrajectoryRecord> = jsonl(trajectories)?;
            let scored: Vec<ScoredRollout<f64>> = jsonl(scores)?;
            let baseline: Option<Vec<TrajectoryRecord>> = baseline.as_deref().map(jsonl).transpose()?;
            let tokenizer = cfg.reward.tokenizer.into();
            let report = build_metrics(&data, &trajectories, &scored, &tokenizer, baseline.as_deref()).core()?;
            emit_json(&report, out)
        }
        Command::JudgeAgg { input } => {
            let records: Vec<JudgeRecord> = jsonl(input)?;
            let means = aggregate_judge_scores(&records).core()?;
            emit_json(&means, out)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e.class() {
                ErrorClass::Schema => 2,
                ErrorClass::Invariant => 3,
                ErrorClass::Other => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
