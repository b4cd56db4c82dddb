use std::collections::BTreeSet;

use proptest::prelude::*;

use tsreason_core::annotation::{AnswerKind, Instance, TaskCategory, TaskKind, TaskName};
use tsreason_core::scheduler::{build_schedule, warmup_sample, EvaluationRecord, Strategy as Plan, WarmupConfig};

const NAMES: [TaskName; 6] = [
    TaskName::AnomalyDetection,
    TaskName::ScenarioAttribution,
    TaskName::InferentialCalculation,
    TaskName::Ctu,
    TaskName::Ecg,
    TaskName::Rcw,
];

fn dataset() -> impl Strategy<Value = (Vec<Instance>, Vec<EvaluationRecord>)> {
    proptest::collection::vec((0usize..NAMES.len(), any::<bool>()), 0..80).prop_map(|rows| {
        let insts: Vec<Instance> = rows
            .iter()
            .enumerate()
            .map(|(i, &(name, _))| Instance {
                id: format!("id{i:03}"),
                task: TaskKind::of(NAMES[name], AnswerKind::Boolean),
                question: "Is it anomalous?".into(),
                series: vec![],
                expert_trajectory: None,
                ground_truth: "Yes".into(),
            })
            .collect();
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, &(_, ok))| EvaluationRecord::graded(format!("id{i:03}"), if ok { "yes" } else { "no" }, "Yes", AnswerKind::Boolean))
            .collect();
        (insts, records)
    })
}

fn strategy() -> impl Strategy<Value = Plan> {
    prop_oneof![Just(Plan::ModelGuided), Just(Plan::FullRl), Just(Plan::FullSft)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn stages_partition_the_dataset(
        (insts, records) in dataset(),
        strategy in strategy(),
        fraction in 0.01f64..=1.0,
        seed in any::<u64>(),
    ) {
        let cfg = WarmupConfig { fraction, seed };
        let plan = build_schedule(&insts, Some(&records), strategy, &cfg).unwrap();
        let all: BTreeSet<String> = insts.iter().map(|i| i.id.clone()).collect();
        prop_assert!(plan.sft_normal.is_disjoint(&plan.rl_hard));
        prop_assert!(plan.warmup.is_subset(&all));
        let expected_warmup = (fraction * all.len() as f64 + 0.5 + 1e-9).floor() as usize;
        prop_assert_eq!(plan.warmup.len(), expected_warmup.min(all.len()));
        let union: BTreeSet<String> = plan.sft_normal.union(&plan.rl_hard).cloned().collect();
        match strategy {
            Plan::FullRl => {
                prop_assert!(plan.sft_normal.is_empty());
                prop_assert_eq!(union, all.difference(&plan.warmup).cloned().collect::<BTreeSet<_>>());
            }
            Plan::FullSft => {
                prop_assert!(plan.rl_hard.is_empty());
                prop_assert_eq!(union, all);
            }
            Plan::ModelGuided => {
                prop_assert_eq!(union, all);
                for (inst, rec) in insts.iter().zip(&records) {
                    let hard = plan.rl_hard.contains(&inst.id);
                    if inst.task.category == TaskCategory::Knowledge {
                        prop_assert!(hard);
                    } else {
                        prop_assert_eq!(hard, !rec.correct);
                    }
                }
            }
        }
        let again = build_schedule(&insts, Some(&records), strategy, &cfg).unwrap();
        prop_assert_eq!(plan, again);
    }

    #[test]
    fn warmup_is_seeded(n in 1usize..200, fraction in 0.01f64..=1.0, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let a = warmup_sample(&ids, fraction, seed).unwrap();
        prop_assert_eq!(&a, &warmup_sample(&ids, fraction, seed).unwrap());
        prop_assert!(a.iter().all(|id| ids.contains(id)));
    }
}
