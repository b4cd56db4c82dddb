use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_tsreason");

fn expert(intent: &str, patterns: &str, answer: &str) -> String {
    format!(
        "<THINK>\nStep 1. Task intent:\n[Judgement] {intent}\n[Description] d\n\
         Step 2. Key patterns:\n[Judgement] {patterns}\n[Description] d\n\
         Step 3. Analysis:\n[Analysis] a\n\
         Step 4. Preliminary:\n[Judgement] {answer}\n[Description] d\n\
         Step 5. Reflection:\n[Analysis] a\n\
         Step 6. Final:\n[Description] d\n[Judgement] {answer}\n</THINK>\n<ANSWER>\n{answer}\n</ANSWER>\n"
    )
}

fn instance(id: &str, name: &str, kind: &str, question: &str, truth: &str) -> String {
    let category = if ["CTU", "ECG", "EMG", "RCW"].contains(&name) { "knowledge" } else { "scenario" };
    serde_json::json!({
        "id": id,
        "task": {"category": category, "name": name, "answer_kind": kind},
        "question": question,
        "series": [0.1, 0.2, 5.0, 0.1],
        "expert_trajectory": expert("identify the cause of the spike", "sudden spike; level shift", truth),
        "ground_truth": truth,
    })
    .to_string()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        let lines = [
            instance("a1", "AnomalyDetection", "boolean", "Is the spike anomalous?", "Yes"),
            instance("a2", "AnomalyDetection", "boolean", "Describe the trend.", "No"),
            instance("s1", "ScenarioAttribution", "choice", "Which event caused it?", "C"),
            instance("c1", "InferentialCalculation", "numeric", "Total units?", "12"),
            instance("k1", "ECG", "freetext", "Which rhythm?", "atrial fibrillation"),
        ];
        ws.write("data.jsonl", &lines.join("\n"));
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, content: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN).current_dir(self.dir.path()).args(args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }
}

fn json_lines(text: &str) -> Vec<serde_json::Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn label_generate_score_advantage_metrics() {
    let ws = Workspace::new();
    ws.ok(&["label", "data.jsonl", "-o", "labels.jsonl"]);
    let labels = json_lines(&ws.read("labels.jsonl"));
    let ids: Vec<&str> = labels.iter().map(|l| l["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["a1", "s1", "c1", "k1"]);
    assert_eq!(labels[0]["intent_label"], "identify the cause of the spike");

    ws.write("run.toml", "[stub.defects]\nwrong_answer = 0.5\n[stub.generation]\nnum_generations = 4\n");
    ws.ok(&["--config", "run.toml", "--seed", "3", "generate", "data.jsonl", "labels.jsonl", "-o", "traj.jsonl"]);
    assert_eq!(json_lines(&ws.read("traj.jsonl")).len(), 16);
    let again = ws.ok(&["--config", "run.toml", "--seed", "3", "generate", "data.jsonl", "labels.jsonl"]);
    assert_eq!(again, ws.read("traj.jsonl"));

    ws.ok(&["score", "data.jsonl", "traj.jsonl", "labels.jsonl", "-o", "scored.jsonl"]);
    let scored = json_lines(&ws.read("scored.jsonl"));
    assert_eq!(scored.len(), 16);
    for s in &scored {
        let total = s["total"].as_f64().unwrap();
        assert!((-6.0..=15.0).contains(&total));
        assert!(s["rollout_index"].as_u64().unwrap() < 4);
    }

    let adv = json_lines(&ws.ok(&["advantage", "scored.jsonl"]));
    assert_eq!(adv.len(), 16);
    for group in adv.chunks(4) {
        let sum: f64 = group.iter().map(|a| a["advantage"].as_f64().unwrap()).sum();
        assert!(sum.abs() < 1e-6);
    }

    let report: serde_json::Value =
        serde_json::from_str(&ws.ok(&["metrics", "data.jsonl", "traj.jsonl", "scored.jsonl", "--baseline", "traj.jsonl"]))
            .unwrap();
    assert_eq!(report["rollouts"], 16);
    assert_eq!(report["token_reduction"]["percent"], "0.00%");
    assert!(report["step_accuracies"]["intent"]["value"].as_f64().unwrap() > 0.9);
}

#[test]
fn parse_reads_stdin() {
    let good = serde_json::json!({"id": "t1", "task": "AnomalyDetection", "raw_text": expert("x", "y", "Yes")});
    let bad = serde_json::json!({"id": "t2", "task": "AnomalyDetection", "raw_text": "<THINK>Step 1. only"});
    let mut child = Command::new(BIN)
        .args(["parse", "-", "--mode", "lenient"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    write!(child.stdin.take().unwrap(), "{good}\n{bad}\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines = json_lines(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(lines[0]["well_formed"], true);
    assert_eq!(lines[0]["answer"], "Yes");
    assert_eq!(lines[1]["well_formed"], false);
    let codes: Vec<&str> = lines[1]["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["code"].as_str().unwrap())
        .collect();
    assert!(codes.contains(&"UNCLOSED_TAG"), "{codes:?}");
}

#[test]
fn schedule_model_guided() {
    let ws = Workspace::new();
    let records = [
        r#"{"instance_id":"a1","predicted":"Yes","correct":true}"#,
        r#"{"instance_id":"a2","predicted":"Yes","correct":false}"#,
        r#"{"instance_id":"s1","predicted":"C","correct":true}"#,
        r#"{"instance_id":"c1","predicted":"11","correct":false}"#,
    ];
    ws.write("eval.jsonl", &records.join("\n"));
    let plan = json_lines(&ws.ok(&["schedule", "data.jsonl", "--records", "eval.jsonl", "--stats", "stats.json"]));
    let stage_of = |id: &str| -> Vec<String> {
        plan.iter()
            .filter(|l| l["id"] == id)
            .map(|l| l["stage"].as_str().unwrap().to_string())
            .collect()
    };
    assert!(stage_of("k1").contains(&"rl_hard".to_string()));
    assert!(stage_of("a1").contains(&"sft_normal".to_string()));
    assert!(stage_of("c1").contains(&"rl_hard".to_string()));
    let stats: serde_json::Value = serde_json::from_str(&ws.read("stats.json")).unwrap();
    assert_eq!(stats["sft_normal"], 2);
    assert_eq!(stats["rl_hard"], 3);
    assert_eq!(stats["warmup"], 1);

    let sft = json_lines(&ws.ok(&["schedule", "data.jsonl", "--strategy", "full-sft"]));
    assert!(sft.iter().all(|l| l["stage"] != "rl_hard"));
}

#[test]
fn simulate_outputs_history() {
    let ws = Workspace::new();
    let csv = ws.ok(&["--seed", "2", "simulate", "--iterations", "50"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,mean_reward,p_correct,kl_to_ref"));
    assert_eq!(lines.count(), 50);
    let jsonl = json_lines(&ws.ok(&["--seed", "2", "simulate", "--iterations", "200", "--format", "jsonl"]));
    assert!(jsonl.last().unwrap()["p_correct"].as_f64().unwrap() > 0.9);
}

#[test]
fn judge_means() {
    let ws = Workspace::new();
    ws.write(
        "judge.jsonl",
        "{\"scores\":{\"task_intent\":5,\"robustness\":3}}\n{\"scores\":{\"task_intent\":4,\"robustness\":4}}\n",
    );
    let means: serde_json::Value = serde_json::from_str(&ws.ok(&["judge-agg", "judge.jsonl"])).unwrap();
    assert_eq!(means["task_intent"]["mean"], 4.5);
    assert_eq!(means["robustness"]["mean"], 3.5);
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["score", "missing.jsonl", "x", "y"])), 1);

    ws.write("bad.jsonl", "{\"id\": \"x\"}\n");
    let out = ws.run(&["label", "bad.jsonl"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    ws.write("bad.toml", "[reward]\nintent_threshold = 3.0\n");
    assert_eq!(code(&ws.run(&["--config", "bad.toml", "judge-agg", "data.jsonl"])), 2);

    ws.write("judge.jsonl", "{\"scores\":{\"task_intent\":9}}\n");
    assert_eq!(code(&ws.run(&["judge-agg", "judge.jsonl"])), 3);

    ws.write("traj.jsonl", "{\"id\":\"nope\",\"task\":\"AD\",\"raw_text\":\"\"}\n");
    ws.write("labels.jsonl", "");
    assert_eq!(code(&ws.run(&["score", "data.jsonl", "traj.jsonl", "labels.jsonl"])), 3);

    ws.write("one.jsonl", "{\"id\":\"a1\",\"rollout_index\":0,\"total\":1.0,\"breakdown\":{\"r_fmt\":3.0,\"r_len\":0.0,\"r_hard\":-2.0,\"r_intent\":0.0,\"r_pattern\":0.0,\"r_align\":0.0,\"r_verify\":0.0,\"r_struct\":3.0,\"r_process\":0.0,\"total\":1.0,\"match_count\":0}}\n");
    assert_eq!(code(&ws.run(&["advantage", "one.jsonl"])), 3);

    assert_eq!(code(&ws.run(&["simulate", "--answers", "1"])), 3);
}
