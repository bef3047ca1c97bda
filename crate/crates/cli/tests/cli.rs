//! End-to-end tests that drive the built binary the way a shell user would.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ptlsi"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Deterministic pseudo-random stream so fixtures are stable across runs.
struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        // Numerical Recipes LCG constants; top bits only.
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    }
}

/// Write a CSV task file with columns x0,x1,x2,y and a planted linear signal.
fn write_task_csv(path: &Path, rows: usize, seed: u64) {
    let mut g = Lcg(seed);
    let mut text = String::from("x0,x1,x2,y\n");
    for _ in 0..rows {
        let x0 = g.next_f64() * 2.0;
        let x1 = g.next_f64() * 2.0;
        let x2 = g.next_f64() * 2.0;
        let y = 1.2 * x0 - 0.9 * x2 + 0.3 * g.next_f64();
        text.push_str(&format!("{x0},{x1},{x2},{y}\n"));
    }
    fs::write(path, text).unwrap();
}

/// Single-file layout: a task-label column distinguishes target and sources.
fn write_labeled_csv(path: &Path) {
    let mut g = Lcg(99);
    let mut text = String::from("task,x0,x1,x2,y\n");
    for (label, rows) in [("t", 8), ("a", 9), ("b", 9)] {
        for _ in 0..rows {
            let x0 = g.next_f64() * 2.0;
            let x1 = g.next_f64() * 2.0;
            let x2 = g.next_f64() * 2.0;
            let y = 1.1 * x0 - 0.8 * x2 + 0.3 * g.next_f64();
            text.push_str(&format!("{label},{x0},{x1},{x2},{y}\n"));
        }
    }
    fs::write(path, text).unwrap();
}

fn files_layout(dir: &Path) -> (PathBuf, String) {
    let target = dir.join("target.csv");
    let s1 = dir.join("s1.csv");
    let s2 = dir.join("s2.csv");
    write_task_csv(&target, 14, 11);
    write_task_csv(&s1, 16, 22);
    write_task_csv(&s2, 16, 33);
    let sources = format!("{},{}", s1.display(), s2.display());
    (target, sources)
}

#[test]
fn help_lists_every_subcommand() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    for sub in ["infer", "fpr", "tpr", "noise", "bench", "ingest-check"] {
        assert!(text.contains(sub), "help is missing `{sub}`:\n{text}");
    }
}

#[test]
fn fpr_reruns_byte_identical_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "fpr".to_string(),
            "--p".into(),
            "12".into(),
            "--n-t".into(),
            "10".into(),
            "--n-s".into(),
            "12".into(),
            "--trials".into(),
            "3".into(),
            "--seed".into(),
            "3".into(),
            "--method".into(),
            "selective,naive".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(bin().args(args(&a)).output().unwrap().status.success());
    assert!(bin().args(args(&b)).output().unwrap().status.success());
    let bytes_a = fs::read(&a).unwrap();
    assert_eq!(bytes_a, fs::read(&b).unwrap(), "same seed must reproduce bytes");
    assert!(!bytes_a.is_empty());
    let manifest = dir.path().join("a.manifest.json");
    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(doc["command"], "fpr");
    assert!(doc["config"][0]["master_seed"].is_number(), "manifest must pin the seed");
    assert!(doc["version"].is_string());
}

#[test]
fn invalid_alpha_names_the_field_and_exits_one() {
    let out = run(&["fpr", "--trials", "2", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("alpha"), "stderr should name alpha: {err}");
}

#[test]
fn unknown_pipeline_exits_one() {
    let out = run(&["fpr", "--trials", "2", "--pipeline", "nonsense"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("pipeline"));
}

#[test]
fn ingest_check_reports_declared_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("all.csv");
    write_labeled_csv(&data);
    let out = run(&[
        "ingest-check",
        "--data",
        data.to_str().unwrap(),
        "--domain-column",
        "task",
        "--target-value",
        "t",
        "--sigma2",
        "1.0",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(doc["shapes"]["p"], 3);
    assert_eq!(doc["shapes"]["n_t"], 8);
    assert_eq!(doc["shapes"]["k"], 2);
    assert_eq!(doc["report"]["feature_names"][0], "x0");
}

#[test]
fn infer_on_files_layout_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (target, sources) = files_layout(dir.path());
    let args = |out: &Path| {
        vec![
            "infer".to_string(),
            "--data".into(),
            target.display().to_string(),
            "--sources".into(),
            sources.clone(),
            "--sigma2".into(),
            "1.0".into(),
            "--compute-oc".into(),
            "--datasplit-seed".into(),
            "5".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let a = dir.path().join("r1.json");
    let b = dir.path().join("r2.json");
    let first = bin().args(args(&a)).output().unwrap();
    assert!(first.status.success(), "stderr: {}", stderr_of(&first));
    assert!(bin().args(args(&b)).output().unwrap().status.success());
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert!(doc["result"]["features"].is_array());
    assert_eq!(doc["alpha"], 0.05);
    assert!(doc["ingest"]["sigma2_estimated"] == false);
}

#[test]
fn plot_emission_is_deterministic_with_exact_header() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("plot.csv");
    let args: Vec<String> = vec![
        "fpr".into(),
        "--p".into(),
        "12".into(),
        "--n-t".into(),
        "10".into(),
        "--n-s".into(),
        "12".into(),
        "--trials".into(),
        "3".into(),
        "--seed".into(),
        "3".into(),
        "--out".into(),
        dir.path().join("rates.csv").display().to_string(),
        "--plot".into(),
        plot.display().to_string(),
    ];
    assert!(bin().args(&args).output().unwrap().status.success());
    let first = fs::read(&plot).unwrap();
    let svg = plot.with_extension("svg");
    let first_svg = fs::read(&svg).unwrap();
    assert!(String::from_utf8_lossy(&first).starts_with("x,series,value,ci_lo,ci_hi\n"));
    assert!(String::from_utf8_lossy(&first_svg).contains("<svg"));
    assert!(bin().args(&args).output().unwrap().status.success());
    assert_eq!(first, fs::read(&plot).unwrap(), "plot CSV must be byte-stable");
    assert_eq!(first_svg, fs::read(&svg).unwrap(), "plot SVG must be byte-stable");
}

#[test]
fn starved_solver_reports_numeric_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let (target, sources) = files_layout(dir.path());
    let out = run(&[
        "infer",
        "--data",
        target.to_str().unwrap(),
        "--sources",
        &sources,
        "--sigma2",
        "1.0",
        "--solver-max-sweeps",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(!stderr_of(&out).is_empty());
}

#[test]
fn missing_domain_declaration_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("all.csv");
    write_labeled_csv(&data);
    let out = run(&["ingest-check", "--data", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
