mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mindstone")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const CONFIG_FLAGS: [&str; 14] = [
    "--config",
    "--n-retriever",
    "--read-fraction",
    "--n-reader",
    "--rm3-enabled",
    "--rm3-alpha",
    "--rm3-terms",
    "--rm3-second-pass-n",
    "--rm3-rescore-retriever",
    "--w-retriever",
    "--w-ranker",
    "--w-reader",
    "--k-spans-per-paragraph",
    "--ranker-para-tokens",
];

#[test]
fn help_exits_zero_everywhere_and_lists_config_flags() {
    assert!(run(&["--help"]).status.success());
    assert!(run(&["--version"]).status.success());
    for sub in
        ["ingest", "index", "convert-squad", "build-dataset", "train-ranker", "answer", "tune-weights", "eval", "bench"]
    {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        let text = String::from_utf8(out.stdout).unwrap();
        if !matches!(sub, "ingest" | "index" | "convert-squad") {
            for flag in CONFIG_FLAGS.iter().chain(&["--reader-total-tokens"]) {
                assert!(text.contains(flag), "{sub} --help lacks {flag}");
            }
        }
    }
}

#[test]
fn usage_and_runtime_errors_have_distinct_codes() {
    let out = run(&["index", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&[]).status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["answer", "--index", p(&tmp.path().join("missing")), "--question", "why?"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn end_to_end_on_f2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let paras = d.join("paragraphs.jsonl");
    ok(&["ingest", "--in", p(&fixture("f2/articles.jsonl")), "--out", p(&paras)]);
    assert_eq!(
        std::fs::read_to_string(&paras).unwrap(),
        std::fs::read_to_string(fixture("f2/paragraphs.jsonl")).unwrap()
    );

    let index = d.join("idx");
    let stdout = ok(&["index", "--in", p(&paras), "--out", p(&index), "--k1", "0.9", "--b", "0.4"]);
    let manifest: Value = serde_json::from_slice(&std::fs::read(index.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["k1"], 0.9);
    assert_eq!(manifest["b"], 0.4);
    assert_eq!(manifest["format_version"], 1);
    assert_eq!(serde_json::from_str::<Value>(&stdout).unwrap(), manifest);

    let train = fixture("f2/questions_train.jsonl");
    let dev = fixture("f2/questions_dev.jsonl");
    let ft = d.join("ft.jsonl");
    ok(&["build-dataset", "--index", p(&index), "--questions", p(&train), "--method", "finetune", "--out", p(&ft)]);
    let m1 = d.join("m1.json");
    ok(&["train-ranker", "--index", p(&index), "--dataset", p(&ft), "--out", p(&m1)]);
    let aug2 = d.join("aug2.jsonl");
    ok(&[
        "build-dataset",
        "--index",
        p(&index),
        "--questions",
        p(&train),
        "--method",
        "aug2",
        "--ranker",
        "builtin",
        "--ranker-model",
        p(&m1),
        "--out",
        p(&aug2),
    ]);
    let rows = std::fs::read_to_string(&aug2).unwrap().lines().count();
    assert!(rows > 0 && rows <= 5 * 865);

    let model = d.join("model.json");
    let summary =
        ok(&["train-ranker", "--index", p(&index), "--dataset", p(&ft), "--dataset", p(&aug2), "--out", p(&model)]);
    let summary: Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["phases"].as_array().unwrap().len(), 2);
    let concat = d.join("concat.json");
    let summary = ok(&[
        "train-ranker",
        "--index",
        p(&index),
        "--dataset",
        p(&ft),
        "--dataset",
        p(&aug2),
        "--concat",
        "--out",
        p(&concat),
    ]);
    let summary: Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["phases"].as_array().unwrap().len(), 1);

    let config = d.join("run.json");
    std::fs::write(&config, r#"{"n_retriever": 20, "fusion": {"w_retriever": 0.1, "w_ranker": 0.3, "w_reader": 0.6}}"#)
        .unwrap();
    let stdout = ok(&[
        "answer",
        "--index",
        p(&index),
        "--question",
        "Who founded Arlenport?",
        "--config",
        p(&config),
        "--ranker-model",
        p(&model),
        "--top",
        "3",
    ]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1);
    let rec: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(rec["qid"], "q0");
    assert!(rec["answers"].as_array().unwrap().len() <= 3);
    assert!(rec["trace"]["retrieved"].as_u64().unwrap() <= 20);
    for key in ["text", "para_id", "start", "end", "s_retriever", "s_ranker", "s_reader", "fused"] {
        assert!(rec["answers"][0].get(key).is_some(), "{key}");
    }

    let answers = d.join("answers.jsonl");
    ok(&["answer", "--index", p(&index), "--batch", p(&dev), "--ranker-model", p(&model), "--out", p(&answers)]);
    assert_eq!(std::fs::read_to_string(&answers).unwrap().lines().count(), 200);

    let tuned = d.join("tuned.json");
    let grid = d.join("grid.csv");
    ok(&[
        "tune-weights",
        "--index",
        p(&index),
        "--questions",
        p(&dev),
        "--ranker-model",
        p(&model),
        "--grid-step",
        "0.25",
        "--out-csv",
        p(&grid),
        "--write-config",
        p(&tuned),
    ]);
    assert_eq!(std::fs::read_to_string(&grid).unwrap().lines().count(), 1 + 15);
    let tuned_cfg: Value = serde_json::from_slice(&std::fs::read(&tuned).unwrap()).unwrap();
    let w = &tuned_cfg["fusion"];
    let sum = w["w_retriever"].as_f64().unwrap() + w["w_ranker"].as_f64().unwrap() + w["w_reader"].as_f64().unwrap();
    assert!((sum - 1.0).abs() < 1e-9);

    let eval = d.join("eval");
    ok(&[
        "eval",
        "--index",
        p(&index),
        "--questions",
        p(&dev),
        "--ranker-model",
        p(&model),
        "--n-grid",
        "1,5,20,100",
        "--out",
        p(&eval),
    ]);
    let csv = std::fs::read_to_string(eval.join("curves.csv")).unwrap();
    let csv_lines: Vec<&str> = csv.lines().collect();
    assert_eq!(csv_lines[0], "N,retriever_recall,ranker_recall,strict_retriever_recall,strict_ranker_recall,topn_em");
    assert_eq!(csv_lines.len(), 5);
    let report: Value = serde_json::from_slice(&std::fs::read(eval.join("report.json")).unwrap()).unwrap();
    let run_manifest: Value = serde_json::from_slice(&std::fs::read(eval.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(report["questions"], 200);
    assert_eq!(run_manifest["config"]["n_retriever"], 100);
    assert!(report["manifest_digest"].is_string());

    let bench = d.join("bench");
    ok(&[
        "--workers",
        "1",
        "bench",
        "--index",
        p(&index),
        "--questions",
        p(&dev),
        "--ranker",
        "oracle",
        "--reader",
        "oracle",
        "--runs",
        "2",
        "--queries-per-run",
        "20",
        "--out",
        p(&bench),
    ]);
    let latency: Value = serde_json::from_slice(&std::fs::read(bench.join("latency.json")).unwrap()).unwrap();
    assert_eq!(latency["per_run_mean_ms"].as_array().unwrap().len(), 2);
    assert_eq!(latency["queries_per_run"], 20);
}

#[test]
fn convert_squad_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let squad = tmp.path().join("dev.json");
    std::fs::write(
        &squad,
        r#"{"data":[{"title":"Oxygen","paragraphs":[{"context":"Oxygen was named by Lavoisier.","qas":[{"id":"x1","question":"Who named oxygen?","answers":[{"answer_start":20,"text":"Lavoisier"}]}]}]}]}"#,
    )
    .unwrap();
    let (articles, questions) = (tmp.path().join("a.jsonl"), tmp.path().join("q.jsonl"));
    ok(&["convert-squad", "--in", p(&squad), "--articles", p(&articles), "--questions", p(&questions)]);
    let q: Value = serde_json::from_str(std::fs::read_to_string(&questions).unwrap().trim()).unwrap();
    assert_eq!(q["gold_paragraph"], "Oxygen was named by Lavoisier.");
    assert_eq!(q["gold_article_id"], "Oxygen");
}
