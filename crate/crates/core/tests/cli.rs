use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn provabs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_provabs")).args(args).output().unwrap()
}

fn with_fixtures<'a>(cmd: &'a str, example: &'a str, extra: &[&'a str]) -> Vec<String> {
    let mut v = vec![
        cmd.to_string(),
        "--db".into(),
        fixture("db.json").display().to_string(),
        "--tree".into(),
        fixture("tree.json").display().to_string(),
        "--example".into(),
        fixture(example).display().to_string(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(args: &[String]) -> (i32, String, String) {
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = provabs(&args);
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|e| panic!("{e}: {s}"))
}

#[test]
fn optimize_the_running_example() {
    let (code, out, _) = run(&with_fixtures("optimize", "ex_real.json", &["--threshold", "2"]));
    assert_eq!(code, 0);
    let r = json(&out);
    assert_eq!(r["status"], "ok");
    assert!((r["loi"].as_f64().unwrap() - 15f64.ln()).abs() < 1e-9);
    assert_eq!(r["privacy"], 2);
    assert_eq!(r["cim"].as_array().unwrap().len(), 2);
}

#[test]
fn text_output() {
    let (code, out, _) = run(&with_fixtures("optimize", "ex_real.json", &["--threshold", "2", "--format", "text"]));
    assert_eq!(code, 0);
    assert!(out.contains("2.708"), "{out}");
}

#[test]
fn rejected_example_exits_with_one() {
    let (code, out, _) = run(&with_fixtures("privacy", "ex_abs3.json", &["--threshold", "2"]));
    assert_eq!(code, 1);
    assert_eq!(json(&out)["status"], "below-threshold");
}

#[test]
fn unreachable_threshold_exits_with_one() {
    let (code, out, _) = run(&with_fixtures("optimize", "ex_real.json", &["--threshold", "50"]));
    assert_eq!(code, 1);
    assert_eq!(json(&out)["status"], "no-solution");
}

#[test]
fn bad_usage_exits_with_two() {
    assert_eq!(provabs(&["optimize", "--bogus"]).status.code(), Some(2));
    assert_eq!(provabs(&["frobnicate"]).status.code(), Some(2));
    let (code, _, err) = run(&with_fixtures("optimize", "missing.json", &["--threshold", "2"]));
    assert_eq!(code, 2);
    assert!(err.contains("missing.json"), "{err}");
}

#[test]
fn malformed_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree.json");
    std::fs::write(
        &tree,
        r#"{"label":"*","children":[{"label":"h1","children":[{"label":"p1"}]},{"label":"h1"}]}"#,
    )
    .unwrap();
    let mut args = with_fixtures("optimize", "ex_real.json", &["--threshold", "2"]);
    args[4] = tree.display().to_string();
    let (code, _, err) = run(&args);
    assert_eq!(code, 2);
    assert!(!err.is_empty());

    let example = dir.path().join("ex.json");
    let text = std::fs::read_to_string(fixture("ex_real.json")).unwrap().replacen("\"h1\"", "\"x9\"", 1);
    std::fs::write(&example, text).unwrap();
    let mut args = with_fixtures("optimize", "ex_real.json", &["--threshold", "2"]);
    args[6] = example.display().to_string();
    let (code, _, err) = run(&args);
    assert_eq!(code, 2);
    assert!(err.contains("x9"), "{err}");
}

#[test]
fn small_caps_exit_with_three() {
    let (code, out, _) = run(&with_fixtures("optimize", "ex_real.json", &["--threshold", "2", "--max-abstractions", "3"]));
    assert_eq!(code, 3);
    assert_eq!(json(&out)["status"], "incomplete");
}

#[test]
fn dual_loi_concretize_consistent_and_oracle() {
    let (code, out, _) = run(&with_fixtures("dual", "ex_real.json", &["--loi-max", "2.8"]));
    assert_eq!(code, 0);
    let r = json(&out);
    assert!(r["privacy"].as_u64().unwrap() >= 2);
    assert!(r["loi"].as_f64().unwrap() <= 2.8);

    let (code, out, _) = run(&with_fixtures("loi", "ex_abs1.json", &[]));
    assert_eq!(code, 0);
    assert!((json(&out)["loi"].as_f64().unwrap() - 15f64.ln()).abs() < 1e-9);

    let dist = format!("file:{}", fixture("abs3_distribution.json").display());
    let (code, out, _) = run(&with_fixtures("loi", "ex_abs3.json", &["--distribution", &dist]));
    assert_eq!(code, 0);
    assert!((json(&out)["loi"].as_f64().unwrap() - 1.27985).abs() < 1e-3);

    let (code, out, _) = run(&with_fixtures("concretize", "ex_abs3.json", &[]));
    assert_eq!(code, 0);
    let r = json(&out);
    assert_eq!(r["count"], 4);
    let connected: Vec<bool> = r["concretizations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["connected"].as_bool().unwrap())
        .collect();
    assert_eq!(connected, [false, true, true, false]);

    let (code, out, _) = run(&with_fixtures("consistent", "ex_real.json", &[]));
    assert_eq!(code, 0);
    let r = json(&out);
    assert_eq!(r["rowsConnected"], true);
    assert!(!r["queries"].as_array().unwrap().is_empty());

    let (code, out, _) = run(&with_fixtures("oracle", "ex_real.json", &["--threshold", "2"]));
    assert_eq!(code, 0);
    let r = json(&out);
    assert_eq!(r["privacy"], 2);
    assert!((r["loi"].as_f64().unwrap() - 15f64.ln()).abs() < 1e-9);
}

fn small_spec(dir: &Path) -> PathBuf {
    let spec = dir.join("spec.json");
    std::fs::write(
        &spec,
        r#"{"relationCount":2,"tuplesPerRelation":6,"domainSize":3,"treeLeafCount":8,"treeHeight":2,"exampleRows":2}"#,
    )
    .unwrap();
    spec
}

#[test]
fn generate_then_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let out_dir = dir.path().join("w");
    let (code, _, err) = run(&[
        "generate".into(),
        "--spec".into(),
        spec.display().to_string(),
        "--seed".into(),
        "3".into(),
        "--out".into(),
        out_dir.display().to_string(),
    ]);
    assert_eq!(code, 0, "{err}");
    for f in ["db.json", "tree.json", "example.json", "query.dl", "spec.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let p = |f: &str| out_dir.join(f).display().to_string();
    let (code, out, err) = run(&[
        "optimize".into(),
        "--db".into(),
        p("db.json"),
        "--tree".into(),
        p("tree.json"),
        "--example".into(),
        p("example.json"),
        "--threshold".into(),
        "1".into(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(json(&out)["status"], "ok");
}

#[test]
fn bench_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path()).display().to_string();
    let args: Vec<String> = ["bench", "--spec", &spec, "--instances", "2", "--threshold", "1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (code, a, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    let (_, b, _) = run(&args);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 1 + 2 * 6);
    assert!(a.starts_with("instance,variant,loi,privacy"));
}
