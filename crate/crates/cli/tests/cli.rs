use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use grabnel_core::attack::{run_attack, AttackConfig, Attacker};
use grabnel_core::graph::Graph;
use grabnel_core::harness::{save_result, CampaignSummary, PatternReport};
use grabnel_core::victim::scripted::FnOracle;
use grabnel_core::victim::QuerySession;
use serde_json::Value;

fn grabnel() -> Command {
    Command::new(env!("CARGO_BIN_EXE_grabnel"))
}

fn run(args: &[&str]) -> Output {
    grabnel().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small ER dataset and a briefly trained victim.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    weights: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("er.json");
    let weights = root.join("w.json");
    ok(&["gen-data", "--out", p(&data), "--size", "120", "--seed", "3", "--test-fraction", "0.25"]);
    ok(&[
        "train-victim",
        "--data",
        p(&data),
        "--out",
        p(&weights),
        "--epochs",
        "3",
        "--encoding",
        "degree",
        "--seed",
        "1",
    ]);
    Fixture { _dir: dir, root, data, weights }
}

fn summary(text: &str) -> CampaignSummary {
    serde_json::from_str(text).unwrap()
}

const ATTACK: [&str; 6] = ["--limit", "3", "--query-budget", "15", "--workers", "2"];

#[test]
fn train_report_has_accuracies() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w2.json");
    let report: Value =
        serde_json::from_str(&ok(&["train-victim", "--data", p(&f.data), "--out", p(&w), "--epochs", "2"])).unwrap();
    assert_eq!(report["epochs"], 2);
    for key in ["train_accuracy", "validation_accuracy", "test_accuracy"] {
        let a = report[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&a), "{key} = {a}");
    }
    assert!(w.is_file());
}

#[test]
fn attack_writes_traces_curve_and_summary() {
    let f = fixture();
    let out = f.root.join("run");
    let mut args = vec!["attack", "--data", p(&f.data), "--weights", p(&f.weights), "--out", p(&out)];
    args.extend(ATTACK);
    let s = summary(&ok(&args));
    assert!(s.eligible <= 3);
    assert_eq!(s.attacker, Attacker::Grabnel);
    let on_disk: CampaignSummary =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk, s);
    let csv = std::fs::read_to_string(out.join("asr.csv")).unwrap();
    assert!(csv.starts_with("normalised_queries,asr\n"));
    let traces = std::fs::read_dir(out.join("traces")).unwrap().count();
    assert_eq!(traces, s.graphs.iter().filter(|g| g.error.is_none()).count());
}

#[test]
fn external_victims_match_the_in_process_one() {
    let f = fixture();
    let base = |out: &Path| {
        let mut v: Vec<String> =
            ["attack", "--data", p(&f.data), "--out", p(out), "--attacker", "random", "--seed", "9"]
                .map(String::from)
                .to_vec();
        v.extend(ATTACK.map(String::from));
        v
    };
    let local = {
        let mut a = base(&f.root.join("local"));
        a.extend(["--weights".into(), p(&f.weights).into()]);
        summary(&ok(&a.iter().map(String::as_str).collect::<Vec<_>>()))
    };

    let stdio = {
        let mut a = base(&f.root.join("stdio"));
        a.extend(["--victim-cmd".into(), env!("CARGO_BIN_EXE_grabnel").into()]);
        for arg in ["serve-victim", "--weights", p(&f.weights)] {
            a.extend(["--victim-arg".into(), arg.into()]);
        }
        summary(&ok(&a.iter().map(String::as_str).collect::<Vec<_>>()))
    };
    assert_eq!(stdio, local);

    let mut server = grabnel()
        .args(["serve-victim", "--weights", p(&f.weights), "--tcp", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let tcp = {
        let mut a = base(&f.root.join("tcp"));
        a.extend(["--victim-tcp".into(), addr]);
        summary(&ok(&a.iter().map(String::as_str).collect::<Vec<_>>()))
    };
    server.kill().unwrap();
    server.wait().unwrap();
    assert_eq!(tcp, local);
}

#[test]
fn serve_victim_answers_each_line() {
    let f = fixture();
    let mut child = grabnel()
        .args(["serve-victim", "--weights", p(&f.weights)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let mut stdin = child.stdin.take().unwrap();
        writeln!(
            stdin,
            r#"{{"id": 4, "graph": {{"num_nodes": 3, "edges": [[0, 1], [1, 2]], "node_labels": [0, 0, 0]}}}}"#
        )
        .unwrap();
        writeln!(stdin, "not json").unwrap();
        writeln!(stdin, r#"{{"id": 5, "graph": {{"num_nodes": 2, "edges": [[0, 7]]}}}}"#).unwrap();
    }
    let out = child.wait_with_output().unwrap();
    let replies: Vec<Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(replies.len(), 3);
    assert_eq!(replies[0]["id"], 4);
    let total: f64 = replies[0]["scores"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(replies[1]["id"], -1);
    assert!(replies[1]["error"].is_string());
    assert_eq!(replies[2]["id"], 5);
    assert!(replies[2]["error"].is_string());
}

#[test]
fn config_file_values_yield_to_flags() {
    let f = fixture();
    let config = f.root.join("attack.json");
    std::fs::write(
        &config,
        format!(
            r#"{{"data": {:?}, "weights": {:?}, "attacker": "sequential-random", "seed": 4, "query-budget": 40,
                "limit": 3, "constraint": "2hop"}}"#,
            p(&f.data),
            p(&f.weights)
        ),
    )
    .unwrap();
    let from_file =
        summary(&ok(&["attack", "--config", p(&config), "--query-budget", "15", "--out", p(&f.root.join("a"))]));
    let from_flags = summary(&ok(&[
        "attack",
        "--data",
        p(&f.data),
        "--weights",
        p(&f.weights),
        "--attacker",
        "sequential-random",
        "--seed",
        "4",
        "--query-budget",
        "15",
        "--limit",
        "3",
        "--constraint",
        "2hop",
        "--out",
        p(&f.root.join("b")),
    ]));
    assert_eq!(from_file, from_flags);
    assert_eq!(from_file.attacker, Attacker::SequentialRandom);
    assert!(from_file.graphs.iter().all(|g| g.queries <= 15));
}

#[test]
fn stats_reports_patterns_and_exports_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    std::fs::create_dir_all(&traces).unwrap();
    let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
    let cfg = AttackConfig { edit_budget: Some(1), query_budget: Some(60), seed: 2, ..Default::default() };
    let mut session =
        QuerySession::new(FnOracle::new(|h: &Graph| if h.has_edge(2, 3) { vec![0.9, 0.1] } else { vec![0.1, 0.9] }));
    let result = run_attack(Attacker::Random, &mut session, &g, 0, &cfg).unwrap();
    assert!(result.success);
    save_result(&traces.join("graph_00000.json"), &result).unwrap();

    let export = dir.path().join("export");
    let report_path = dir.path().join("report.json");
    let report: PatternReport =
        serde_json::from_str(&ok(&["stats", p(dir.path()), "--out", p(&report_path), "--export", p(&export)])).unwrap();
    assert_eq!(report.successes, 1);
    assert_eq!(report.deleted_edges, 1);
    assert_eq!(report.endpoint_degrees.values().sum::<usize>(), 2);
    let saved: PatternReport = serde_json::from_str(&std::fs::read_to_string(report_path).unwrap()).unwrap();
    assert_eq!(saved, report);
    let edits: Value =
        serde_json::from_str(&std::fs::read_to_string(export.join("success_00000.edits.json")).unwrap()).unwrap();
    assert_eq!(edits["deleted"], serde_json::json!([[2, 3]]));
    assert!(export.join("success_00000.graph.json").is_file());
}

#[test]
fn usage_errors_exit_nonzero() {
    let f = fixture();
    let out = run(&["attack", "--data", p(&f.data), "--out", p(&f.root.join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--weights"));

    let out = run(&["attack", "--constraint", "three-hop"]);
    assert!(!out.status.success());

    let empty = tempfile::tempdir().unwrap();
    let out = run(&["stats", p(empty.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no successful attacks"));
}
