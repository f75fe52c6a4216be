//! End-to-end tests of the `cascade` binary: flags, file formats, and
//! exit codes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cascade_testkit::{MockBehavior, MockServer};

fn cascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade"))
        .args(args)
        .env_remove("CASCADE_CONFIG")
        .output()
        .expect("run cascade binary")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write_fixture(dir: &Path, name: &str, lines: &[String]) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

fn qe_fixture(dir: &Path) -> PathBuf {
    let lines: Vec<String> = [0.9, 0.2, 0.5, 0.7]
        .iter()
        .enumerate()
        .map(|(i, qe)| {
            format!(
                r#"{{"id":"seg-{i}","lang_pair":"en-de","source":"source {i}","qe_small":{qe},"quality_small":{},"quality_large":{}}}"#,
                0.1 * i as f64,
                0.8 - 0.1 * i as f64,
            )
        })
        .collect();
    write_fixture(dir, "batch.jsonl", &lines)
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn defer_writes_the_expected_decision_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let batch = qe_fixture(dir.path());
    let out = dir.path().join("out");
    let output = cascade(&[
        "defer",
        "--batch",
        batch.to_str().unwrap(),
        "--rule",
        "qe",
        "--eta",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let decision = read_json(&out.join("decision.json"));
    assert_eq!(decision["rule"], "qe");
    assert_eq!(decision["eta_requested"], 0.5);
    assert_eq!(decision["eta_effective"], 0.5);
    assert_eq!(
        decision["deferred_ids"].as_array().unwrap(),
        &vec![serde_json::json!("seg-1"), serde_json::json!("seg-2")]
    );
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "defer");
    assert!(manifest["argv"].as_array().unwrap().len() >= 2);
}

#[test]
fn defer_with_zero_budget_defers_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let batch = qe_fixture(dir.path());
    let out = dir.path().join("out");
    let output = cascade(&[
        "defer",
        "--batch",
        batch.to_str().unwrap(),
        "--rule",
        "qe",
        "--eta",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let decision = read_json(&out.join("decision.json"));
    assert!(decision["deferred_ids"].as_array().unwrap().is_empty());
}

#[test]
fn defer_missing_columns_exits_2_and_names_the_column() {
    let dir = tempfile::tempdir().unwrap();
    let batch = qe_fixture(dir.path());
    let out = dir.path().join("out");
    let output = cascade(&[
        "defer",
        "--batch",
        batch.to_str().unwrap(),
        "--rule",
        "logprobs",
        "--eta",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    let message = stderr(&output);
    assert!(message.contains("logprob_small"), "{message}");
}

#[test]
fn defer_rejects_eta_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let batch = qe_fixture(dir.path());
    let output = cascade(&[
        "defer",
        "--batch",
        batch.to_str().unwrap(),
        "--rule",
        "qe",
        "--eta",
        "1.5",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn lower_better_flag_negates_the_column_before_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let lines = vec![
        r#"{"id":"seg-0","lang_pair":"en-de","source":"a","quality_small":0.0,"quality_large":0.0}"#.to_string(),
        r#"{"id":"seg-1","lang_pair":"en-de","source":"b","quality_small":1.0,"quality_large":0.0}"#.to_string(),
    ];
    let batch = write_fixture(dir.path(), "b.jsonl", &lines);
    let out = dir.path().join("out");
    let output = cascade(&[
        "defer",
        "--batch",
        batch.to_str().unwrap(),
        "--rule",
        "oracle",
        "--eta",
        "0.5",
        "--lower-better",
        "quality_small",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let decision = read_json(&out.join("decision.json"));
    // negated small scores make seg-1 the larger gain (0 - (-1) = 1)
    assert_eq!(decision["deferred_ids"][0], "seg-1");
}

#[test]
fn curve_emits_csv_and_json_with_shared_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let batch = qe_fixture(dir.path());
    let out = dir.path().join("out");
    let output = cascade(&[
        "curve",
        "--batch",
        batch.to_str().unwrap(),
        "--rules",
        "qe,random,oracle",
        "--cost-profile",
        "tower7b-kiwi22",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));

    let csv = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    assert!(csv.starts_with("rule,eta,mean_quality,flops,relative_cost_x\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 11);

    let json = read_json(&out.join("curves.json"));
    let points = json["points"].as_array().unwrap();
    let mean_at = |rule: &str, eta: f64| -> f64 {
        points
            .iter()
            .find(|p| p["rule"] == rule && p["eta"] == eta)
            .unwrap()["mean_quality"]
            .as_f64()
            .unwrap()
    };
    let small_mean = json["small_mean"].as_f64().unwrap();
    let large_mean = json["large_mean"].as_f64().unwrap();
    for rule in ["qe", "random", "oracle"] {
        assert_eq!(mean_at(rule, 0.0), small_mean, "{rule} at 0");
        assert_eq!(mean_at(rule, 1.0), large_mean, "{rule} at 1");
    }
    // oracle dominates qe pointwise
    for eta in (0..=10).map(|i| i as f64 / 10.0) {
        assert!(mean_at("oracle", eta) >= mean_at("qe", eta) - 1e-12, "eta {eta}");
    }
}

#[test]
fn curve_with_two_point_grid() {
    let dir = tempfile::tempdir().unwrap();
    let batch = qe_fixture(dir.path());
    let out = dir.path().join("out");
    let output = cascade(&[
        "curve",
        "--batch",
        batch.to_str().unwrap(),
        "--rules",
        "qe",
        "--grid",
        "0,1",
        "--cost-profile",
        "tower7b-kiwi22",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let csv = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2);
}

#[test]
fn parity_prints_reference_numbers() {
    let output = cascade(&["parity", "--cost-profile", "tower7b-kiwi22"]);
    assert!(output.status.success(), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("eta* = 0.8929"), "{text}");
    assert!(text.contains("reranking parity K = 9"), "{text}");

    let output = cascade(&["parity", "--cost-profile", "tower7b-kiwixxl"]);
    let text = stdout(&output);
    assert!(text.contains("eta* = 0.7500"), "{text}");
    assert!(text.contains("reranking parity K = 4"), "{text}");
}

#[test]
fn parity_warns_on_degenerate_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(
        &config,
        "[cost_profiles.degenerate]\nn_small = 6e10\nn_large = 7e10\nn_qe = 2e10\nd_small = 1.0\nd_large = 1.0\n",
    )
    .unwrap();
    let output = cascade(&[
        "parity",
        "--config",
        config.to_str().unwrap(),
        "--cost-profile",
        "degenerate",
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("warning"), "{text}");
    assert!(text.contains("cannot beat"), "{text}");
}

#[test]
fn unknown_cost_profile_exits_2() {
    let output = cascade(&["parity", "--cost-profile", "nope"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("unknown cost profile"));
}

#[test]
fn wtl_matches_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    // diffs [0.2, -0.05, 0.0, 0.3]
    let lines: Vec<String> = [(0.2, 0.0), (-0.05, 0.0), (0.0, 0.0), (0.3, 0.0)]
        .iter()
        .enumerate()
        .map(|(i, (a, b))| {
            format!(
                r#"{{"id":"seg-{i}","lang_pair":"en-de","source":"s{i}","quality_small":{a},"quality_large":{b}}}"#
            )
        })
        .collect();
    let batch = write_fixture(dir.path(), "wtl.jsonl", &lines);
    let out = dir.path().join("out");
    let output = cascade(&[
        "wtl",
        "--batch",
        batch.to_str().unwrap(),
        "--a",
        "quality_small",
        "--b",
        "quality_large",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let wtl = read_json(&out.join("wtl.json"));
    assert_eq!(wtl["wins"], 0.5);
    assert_eq!(wtl["ties"], 0.5);
    assert_eq!(wtl["losses"], 0.0);
    assert_eq!(wtl["threshold"], 0.122);
}

#[test]
fn permtest_reproduces_the_hand_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let lines: Vec<String> = [(4.0, 1.0), (5.0, 2.0), (6.0, 3.0)]
        .iter()
        .enumerate()
        .map(|(i, (a, b))| {
            format!(
                r#"{{"id":"seg-{i}","lang_pair":"en-de","source":"s{i}","quality_small":{a},"quality_large":{b}}}"#
            )
        })
        .collect();
    let batch = write_fixture(dir.path(), "pt.jsonl", &lines);
    let out = dir.path().join("out");
    let output = cascade(&[
        "permtest",
        "--batch",
        batch.to_str().unwrap(),
        "--a",
        "quality_small",
        "--b",
        "quality_large",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let result = read_json(&out.join("permtest.json"));
    assert_eq!(result["p_value"], 0.25);
    assert_eq!(result["mode"]["kind"], "exact");
    assert_eq!(result["significant"], false);
}

#[test]
fn permtest_identical_columns_give_p_one() {
    let dir = tempfile::tempdir().unwrap();
    let lines: Vec<String> = (0..5)
        .map(|i| {
            format!(
                r#"{{"id":"seg-{i}","lang_pair":"en-de","source":"s{i}","quality_small":{v},"quality_large":{v}}}"#,
                v = 0.3 * i as f64
            )
        })
        .collect();
    let batch = write_fixture(dir.path(), "same.jsonl", &lines);
    let out = dir.path().join("out");
    let output = cascade(&[
        "permtest",
        "--batch",
        batch.to_str().unwrap(),
        "--a",
        "quality_small",
        "--b",
        "quality_large",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));
    let result = read_json(&out.join("permtest.json"));
    assert_eq!(result["p_value"], 1.0);
}

#[test]
fn permtest_with_fixed_seed_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let lines: Vec<String> = (0..40)
        .map(|i| {
            format!(
                r#"{{"id":"seg-{i}","lang_pair":"en-de","source":"s{i}","quality_small":{a},"quality_large":{b}}}"#,
                a = (i as f64 * 0.37).sin(),
                b = (i as f64 * 0.53).cos(),
            )
        })
        .collect();
    let batch = write_fixture(dir.path(), "mc.jsonl", &lines);
    let run = |out: &Path| {
        let output = cascade(&[
            "permtest",
            "--batch",
            batch.to_str().unwrap(),
            "--a",
            "quality_small",
            "--b",
            "quality_large",
            "--iterations",
            "5000",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success(), "{}", stderr(&output));
        std::fs::read(out.join("permtest.json")).unwrap()
    };
    let first = run(&dir.path().join("out1"));
    let second = run(&dir.path().join("out2"));
    assert_eq!(first, second);
}

fn live_config(dir: &Path, server_url: &str) -> PathBuf {
    let cache_dir = dir.join("cache");
    let config = format!(
        r#"
[live]
lang_pair = "en-de"
batch_name = "live"
cache_dir = "{cache}"
cost_profile = "tower7b-kiwi22"

[endpoints.small]
base_url = "{url}"
model_name = "small-model"

[endpoints.qe]
base_url = "{url}"
model_name = "qe-model"

[endpoints.large]
base_url = "{url}"
model_name = "large-model"
"#,
        cache = cache_dir.display(),
        url = server_url,
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}

fn score_table() -> HashMap<String, f64> {
    let mut table = HashMap::new();
    for (i, score) in [0.9, 0.2, 0.5, 0.7].into_iter().enumerate() {
        table.insert(format!("live source {i}"), score);
    }
    table
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn run_live_defers_lowest_scores_and_replays_from_cache() {
    let server = MockServer::spawn(MockBehavior::default().with_score_table(score_table())).await;
    let dir = tempfile::tempdir().unwrap();
    let config = live_config(dir.path(), &server.url());
    let sources: Vec<String> = (0..4).map(|i| format!("live source {i}")).collect();
    let sources_path = write_fixture(dir.path(), "sources.txt", &sources);

    let run = |out: PathBuf| {
        let config = config.clone();
        let sources_path = sources_path.clone();
        tokio::task::spawn_blocking(move || {
            cascade(&[
                "run-live",
                "--config",
                config.to_str().unwrap(),
                "--sources",
                sources_path.to_str().unwrap(),
                "--eta",
                "0.5",
                "--out",
                out.to_str().unwrap(),
            ])
        })
    };

    let out1 = dir.path().join("run1");
    let output = run(out1.clone()).await.unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let decision = read_json(&out1.join("decision.json"));
    assert_eq!(
        decision["deferred_ids"].as_array().unwrap(),
        &vec![serde_json::json!("seg-1"), serde_json::json!("seg-2")]
    );
    let requests_after_first = server.state.total_requests();
    assert!(requests_after_first > 0);

    let out2 = dir.path().join("run2");
    let output = run(out2.clone()).await.unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    assert_eq!(server.state.total_requests(), requests_after_first, "warm cache must not hit the network");
    let batch1 = std::fs::read(out1.join("batch.jsonl")).unwrap();
    let batch2 = std::fs::read(out2.join("batch.jsonl")).unwrap();
    assert_eq!(batch1, batch2);
    let failures = read_json(&out2.join("failures.json"));
    assert!(failures.as_array().unwrap().is_empty());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn run_live_exits_3_when_items_fail() {
    let mut behavior = MockBehavior::default().with_score_table(score_table());
    behavior.fail_always.insert("live source 0".to_string());
    let server = MockServer::spawn(behavior).await;
    let dir = tempfile::tempdir().unwrap();
    let config = live_config(dir.path(), &server.url());
    let sources: Vec<String> = (0..4).map(|i| format!("live source {i}")).collect();
    let sources_path = write_fixture(dir.path(), "sources.txt", &sources);
    let out = dir.path().join("out");

    let output = tokio::task::spawn_blocking({
        let config = config.clone();
        let out = out.clone();
        move || {
            cascade(&[
                "run-live",
                "--config",
                config.to_str().unwrap(),
                "--sources",
                sources_path.to_str().unwrap(),
                "--eta",
                "0.5",
                "--out",
                out.to_str().unwrap(),
            ])
        }
    })
    .await
    .unwrap();
    assert_eq!(output.status.code(), Some(3), "{}", stderr(&output));
    // outputs are still written for the surviving items
    let failures = read_json(&out.join("failures.json"));
    assert_eq!(failures.as_array().unwrap().len(), 1);
    let decision = read_json(&out.join("decision.json"));
    assert_eq!(decision["deferred_ids"].as_array().unwrap().len(), 2);
}
