use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use liftsense::SensingOperator;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liftsense"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "schemas", name]
        .iter()
        .collect();
    let text = std::fs::read_to_string(&path).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_valid(v: &jsonschema::Validator, doc: &Value) {
    let errors: Vec<String> = v.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema errors: {errors:?}\n{doc}");
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn bad_flags_exit_with_2() {
    let cases: &[&[&str]] = &[
        &["table1", "--bogus"],
        &["table1", "--n", "three"],
        &["table1", "--eps", "1.5"],
        &["table1", "--n", "1"],
        &["table1", "--l", "2", "--lmax", "3"],
        &["table1", "--tol-grad", "-1"],
        &["table2", "--trials", "0"],
        &["trajectories", "--n", "3,4"],
        &["bounds", "--format", "csv"],
        &["bounds", "--operator-file", "/nonexistent/op.json"],
        &["bounds", "--eps", "0.3", "--operator-file", "op.json"],
        &["table1", "--n", "7", "--l", "10"],
        &[],
    ];
    for args in cases {
        assert_eq!(run(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn table1_csv_for_n3() {
    let (header, rows) = csv_rows(&stdout(&["table1", "--n", "3", "--lmax", "4"]));
    assert_eq!(
        header,
        [
            "n",
            "l",
            "grad_norm_z",
            "grad_norm_xhat",
            "min_eig_z",
            "min_eig_xhat"
        ]
    );
    assert_eq!(rows.len(), 4);
    let col = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r[0], "3");
        assert_eq!(r[1], (k + 1).to_string());
        assert!(col(r, 2) < 1e-10 && col(r, 3) < 1e-10);
        assert!((col(r, 4) - 4.0).abs() < 1e-8);
    }
    let xhat: Vec<f64> = rows.iter().map(|r| col(r, 5)).collect();
    assert!(
        xhat[..3].iter().all(|&e| e > 0.0) && xhat[3] < 0.0,
        "{xhat:?}"
    );
}

#[test]
fn isometric_benchmark_has_none_rows() {
    let (_, rows) = csv_rows(&stdout(&[
        "table1", "--n", "3", "--eps", "1.0", "--lmax", "2",
    ]));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r[3], "NONE");
        assert_eq!(r[5], "NONE");
    }
    let json: Value = serde_json::from_str(&stdout(&[
        "table1", "--n", "3", "--eps", "1.0", "--l", "1", "--format", "json",
    ]))
    .unwrap();
    assert_valid(&schema("table1.schema.json"), &json);
    assert!(json[0]["min_eig_xhat"].is_null());
}

#[test]
fn table1_json_matches_schema_for_several_sizes() {
    let json: Value = serde_json::from_str(&stdout(&[
        "table1", "--n", "3,4", "--lmax", "2", "--format", "json",
    ]))
    .unwrap();
    assert_valid(&schema("table1.schema.json"), &json);
    assert_eq!(json.as_array().unwrap().len(), 4);
}

#[test]
fn table2_single_trial_and_determinism() {
    let args = [
        "table2", "--n", "3,4", "--l", "2", "--trials", "1", "--seed", "5",
    ];
    let text = stdout(&args);
    assert_eq!(text, stdout(&args));
    let (header, rows) = csv_rows(&text);
    assert_eq!(header, ["n", "l", "trials", "successes", "rate"]);
    let orders: Vec<(&str, &str)> = rows
        .iter()
        .map(|r| (r[0].as_str(), r[1].as_str()))
        .collect();
    assert_eq!(orders, [("3", "1"), ("3", "2"), ("4", "1"), ("4", "2")]);
    for r in &rows {
        assert!(r[4] == "0" || r[4] == "1", "{r:?}");
    }

    let json: Value = serde_json::from_str(&stdout(&[
        "table2", "--n", "3", "--trials", "2", "--format", "json",
    ]))
    .unwrap();
    assert_valid(&schema("table2.schema.json"), &json);
}

#[test]
fn trajectories_header_and_steps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.jsonl");
    let out_s = out.to_str().unwrap();
    stdout(&[
        "trajectories",
        "--n",
        "3",
        "--l",
        "3",
        "--trials",
        "3",
        "--record-every",
        "500",
        "--out",
        out_s,
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let v = schema("trajectories.schema.json");
    for line in &lines {
        assert_valid(&v, line);
    }
    let header = &lines[0];
    let landmarks = header["landmarks"].as_array().unwrap();
    assert_eq!(landmarks.len(), 4);
    assert_eq!(landmarks[0]["point"], serde_json::json!([1.0, 0.0, 1.0]));

    let steps = &lines[1..];
    assert!(steps.iter().all(|s| s.get("landmarks").is_none()));
    for trial in 0..3 {
        let iters: Vec<u64> = steps
            .iter()
            .filter(|s| s["trial"] == trial)
            .map(|s| s["iter"].as_u64().unwrap())
            .collect();
        assert_eq!(iters[0], 1);
        assert!(iters.windows(2).all(|w| w[0] < w[1]));
        // every 500th step plus the last one
        assert!(iters[..iters.len() - 1].iter().all(|i| (i - 1) % 500 == 0));
    }
}

#[test]
fn unlifted_trajectory_points_are_raw_iterates() {
    let text = stdout(&[
        "trajectories",
        "--l",
        "1",
        "--trials",
        "2",
        "--record-every",
        "0",
    ]);
    let lines: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // record_every 0 keeps the terminal step only
    assert_eq!(lines.len(), 1 + 2);
    for s in &lines[1..] {
        assert_eq!(s["residual"].as_f64(), Some(0.0));
    }
}

#[test]
fn bounds_report_matches_schema() {
    let json: Value =
        serde_json::from_str(&stdout(&["bounds", "--n", "3", "--lmax", "5"])).unwrap();
    assert_valid(&schema("bounds.schema.json"), &json);
    let spurious = json["spurious"].as_array().unwrap();
    assert!(!spurious.is_empty());
    for s in spurious {
        assert!(s["beta"].as_f64().unwrap() > 0.0);
        assert!(s.get("min_odd_l").is_some());
        assert!(s["distance_condition_holds"].is_boolean());
        assert_eq!(s["violates_local_region"], true);
        assert_eq!(s["lemma"]["all_hold"], true);
        let orders: Vec<u64> = s["escape_curvature"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["l"].as_u64().unwrap())
            .collect();
        assert_eq!(orders, [3, 5]);
    }
}

fn write_operator(dir: &Path, n: usize, eps: f64) -> PathBuf {
    let op = liftsense::Problem::benchmark(n, eps).unwrap().op().clone();
    let path = dir.join("op.json");
    op.write_json(&path).unwrap();
    path
}

#[test]
fn operator_file_reproduces_the_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_operator(dir.path(), 3, 0.3);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_valid(
        &schema("operator.schema.json"),
        &serde_json::from_str(&text).unwrap(),
    );
    assert!(SensingOperator::from_json(&text).is_ok());

    let from_file = stdout(&["table1", "--operator-file", path.to_str().unwrap()]);
    assert_eq!(from_file, stdout(&["table1", "--n", "3", "--eps", "0.3"]));
    let mismatch = run(&[
        "table1",
        "--n",
        "4",
        "--operator-file",
        path.to_str().unwrap(),
    ]);
    assert_eq!(mismatch.status.code(), Some(2));
}

#[test]
fn malformed_operator_file_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"n": 2, "m": 1, "matrices": [[[1, 2], [3, 4]]], "labels": []}"#,
    )
    .unwrap();
    assert_eq!(
        run(&["bounds", "--operator-file", path.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(
        &path,
        r#"{"n": 2, "m": 1, "matrices": [[[1, 0], [0, 1]]], "extra": 1}"#,
    )
    .unwrap();
    assert_eq!(
        run(&["bounds", "--operator-file", path.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}
