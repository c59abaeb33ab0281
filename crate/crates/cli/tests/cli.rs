use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn leakyreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leakyreg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = leakyreg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn design(dir: &TempDir, name: &str, flags: &[&str]) -> (PathBuf, Value) {
    let path = dir.path().join(name);
    let mut args = vec!["design"];
    args.extend_from_slice(flags);
    args.extend_from_slice(&["--out", path_str(&path)]);
    ok(&args);
    let doc = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    (path, doc)
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn event_clusters(text: &str, gap: u64) -> Vec<Vec<u64>> {
    let mut clusters: Vec<Vec<u64>> = Vec::new();
    for row in csv_rows(text) {
        if row[2].is_empty() {
            continue;
        }
        let n: u64 = row[0].parse().unwrap();
        match clusters.last_mut() {
            Some(c) if n - c.last().unwrap() <= gap => c.push(n),
            _ => clusters.push(vec![n]),
        }
    }
    clusters
}

fn simulate(dir: &TempDir, scenario: &str, seed: &str) -> PathBuf {
    let csv = dir.path().join(format!("{scenario}-{seed}.csv"));
    ok(&[
        "simulate",
        "--scenario",
        scenario,
        "--seed",
        seed,
        "--out",
        path_str(&csv),
    ]);
    csv
}

/// Writes the measurement column of a simulated scenario as a one-column CSV.
fn measurements(scenario_csv: &Path) -> PathBuf {
    let text = std::fs::read_to_string(scenario_csv).unwrap();
    let mut body = String::from("x\n");
    for row in csv_rows(&text) {
        body.push_str(row.last().unwrap());
        body.push('\n');
    }
    let path = scenario_csv.with_extension("x.csv");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn design_resolves_optimal_delay() {
    let dir = TempDir::new().unwrap();
    let (_, doc) = design(
        &dir,
        "a.json",
        &["--kx", "2", "--kappa", "0", "--p", "0.80"],
    );
    assert_eq!(doc["delay"], "auto");
    assert!((doc["q"].as_f64().unwrap() - 8.50).abs() < 0.01);
    assert!((doc["vrf"]["data"][0].as_f64().unwrap() - 0.056).abs() < 0.001);
    assert!((doc["f_c"].as_f64().unwrap() - 0.042).abs() < 0.001);

    let (_, doc) = design(
        &dir,
        "b.json",
        &["--kx", "2", "--kappa", "3", "--p", "0.85"],
    );
    assert!((doc["q"].as_f64().unwrap() - 30.77).abs() < 0.01);
    assert!((doc["vrf"]["data"][0].as_f64().unwrap() - 0.022).abs() < 0.001);
    assert!((doc["f_c"].as_f64().unwrap() - 0.019).abs() < 0.001);
}

#[test]
fn fixed_delay_is_kept() {
    let dir = TempDir::new().unwrap();
    let (_, doc) = design(
        &dir,
        "a.json",
        &["--kx", "2", "--kappa", "3", "--p", "0.8", "--q", "8.5"],
    );
    assert_eq!(doc["q"].as_f64().unwrap(), 8.5);
    assert!((doc["f_c"].as_f64().unwrap() - 0.0352).abs() < 0.001);
    assert!(doc["candidates"].as_array().unwrap().is_empty());
}

#[test]
fn invalid_parameters_exit_with_rejection() {
    let out = leakyreg(&["design", "--kx", "2", "--kappa", "0", "--p", "1.0"]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert_eq!(msg.lines().count(), 1);
    assert!(msg.contains("p = 1"));

    let out = leakyreg(&[
        "design", "--kx", "2", "--kt", "3", "--kappa", "0", "--p", "0.8",
    ]);
    assert_eq!(out.status.code(), Some(3));

    let out = leakyreg(&["design", "--kx", "two", "--kappa", "0", "--p", "0.8"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_reports_bandwidth_and_grid() {
    let dir = TempDir::new().unwrap();
    let (path, _) = design(&dir, "b.json", &["--kx", "2", "--kappa", "3", "--p", "0.8"]);
    let csv = dir.path().join("resp.csv");
    let summary = dir.path().join("summary.json");
    ok(&[
        "analyze",
        "--design",
        path_str(&path),
        "--grid-size",
        "101",
        "--out",
        path_str(&csv),
        "--summary",
        path_str(&summary),
    ]);
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert!((s["q"].as_f64().unwrap() - 22.41).abs() < 0.01);
    assert!((s["f_c"].as_f64().unwrap() - 0.0256).abs() < 0.001);
    assert!((s["group_delay_dc"].as_f64().unwrap() - s["q"].as_f64().unwrap()).abs() < 1e-3);
    assert_eq!(s["vrf_diagonal"].as_array().unwrap().len(), 2);

    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "f,re_h0,im_h0,re_h1,im_h1,distortion"
    );
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 101);
    let first: Vec<f64> = rows[0].iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], 0.0);
    assert!((first[1] - 1.0).abs() < 1e-12 && first[2].abs() < 1e-12);
    assert!(first[5] < 1e-24);

    let out = leakyreg(&["analyze", "--design", path_str(&path), "--grid-size", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_holds_a_constant_from_the_first_row() {
    let dir = TempDir::new().unwrap();
    let (path, _) = design(&dir, "d.json", &["--kx", "3", "--kappa", "2", "--p", "0.8"]);
    let input = dir.path().join("in.csv");
    std::fs::write(&input, "value\n".to_string() + &"7.25\n".repeat(50)).unwrap();
    let text = ok(&[
        "run",
        "--design",
        path_str(&path),
        "--input",
        path_str(&input),
    ]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,x0,x1,x2,sigma_eps2,var_x0,var_x1,var_x2");
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 50);
    for (n, row) in rows.iter().enumerate() {
        assert_eq!(row[0], n.to_string());
        let x0: f64 = row[1].parse().unwrap();
        assert!((x0 - 7.25).abs() < 1e-12);
        // 17 significant digits per number.
        assert!(row[1].contains('e') && row[1].split('e').next().unwrap().len() == 18);
    }
}

#[test]
fn run_on_empty_input_writes_only_the_header() {
    let dir = TempDir::new().unwrap();
    let (path, _) = design(&dir, "d.json", &["--kx", "2", "--kappa", "0", "--p", "0.8"]);
    let input = dir.path().join("empty.csv");
    std::fs::write(&input, "").unwrap();
    let text = ok(&[
        "run",
        "--design",
        path_str(&path),
        "--input",
        path_str(&input),
    ]);
    assert_eq!(text, "n,x0,x1,sigma_eps2,var_x0,var_x1\n");
}

#[test]
fn run_rejects_non_numeric_rows_with_line_number() {
    let dir = TempDir::new().unwrap();
    let (path, _) = design(&dir, "d.json", &["--kx", "2", "--kappa", "0", "--p", "0.8"]);
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "x\n1.0\n2.0\noops\n").unwrap();
    let out = leakyreg(&[
        "run",
        "--design",
        path_str(&path),
        "--input",
        path_str(&input),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn run_tracks_constant_acceleration() {
    let dir = TempDir::new().unwrap();
    let (path, _) = design(
        &dir,
        "track.json",
        &["--kx", "3", "--kappa", "2", "--p", "0.9", "--ts", "0.01"],
    );
    let input = measurements(&simulate(&dir, "target-constant-accel", "11"));
    let text = ok(&[
        "run",
        "--design",
        path_str(&path),
        "--input",
        path_str(&input),
    ]);
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 200);
    let (mut inside, mut total) = (0, 0);
    for row in rows.iter().filter(|r| r[0].parse::<usize>().unwrap() > 100) {
        let accel: f64 = row[3].parse().unwrap();
        let var: f64 = row[7].parse().unwrap();
        total += 1;
        if (accel + 20.0).abs() <= 3.0 * var.sqrt() {
            inside += 1;
        }
    }
    assert!(inside as f64 >= 0.95 * total as f64, "{inside}/{total}");
}

#[test]
fn peak_detection_finds_the_target() {
    let dir = TempDir::new().unwrap();
    let (path, doc) = design(
        &dir,
        "peak.json",
        &["--kx", "3", "--kappa", "2", "--p", "0.8"],
    );
    let q = doc["q"].as_f64().unwrap();
    let input = measurements(&simulate(&dir, "peak", "5"));
    let text = ok(&[
        "detect",
        "--kind",
        "peak",
        "--design",
        path_str(&path),
        "--threshold",
        "10",
        "--input",
        path_str(&input),
    ]);
    assert_eq!(csv_rows(&text).len(), 400);
    let clusters = event_clusters(&text, 5);
    assert_eq!(clusters.len(), 1, "{clusters:?}");
    for &n in &clusters[0] {
        let centre = n as f64 - q;
        assert!((280.0..=320.0).contains(&centre), "event at {n}, q = {q}");
    }
}

#[test]
fn change_detection_marks_both_edges() {
    let dir = TempDir::new().unwrap();
    let (a, _) = design(
        &dir,
        "a.json",
        &["--kx", "2", "--kappa", "0", "--p", "0.8", "--q", "8.5"],
    );
    let (b, _) = design(
        &dir,
        "b.json",
        &["--kx", "2", "--kappa", "3", "--p", "0.8", "--q", "8.5"],
    );
    let input = measurements(&simulate(&dir, "change", "2"));
    let text = ok(&[
        "detect",
        "--kind",
        "change",
        "--design",
        path_str(&a),
        "--design-b",
        path_str(&b),
        "--threshold",
        "3",
        "--input",
        path_str(&input),
    ]);
    let clusters = event_clusters(&text, 5);
    assert!(clusters.len() >= 2, "{clusters:?}");

    let out = leakyreg(&[
        "detect",
        "--kind",
        "change",
        "--design",
        path_str(&a),
        "--threshold",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mismatched_change_pair_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (a, _) = design(
        &dir,
        "a.json",
        &["--kx", "2", "--kappa", "0", "--p", "0.8", "--q", "8.5"],
    );
    let (b, _) = design(&dir, "b.json", &["--kx", "2", "--kappa", "3", "--p", "0.8"]);
    let out = leakyreg(&[
        "detect",
        "--kind",
        "change",
        "--design",
        path_str(&a),
        "--design-b",
        path_str(&b),
        "--threshold",
        "3",
        "--input",
        "/dev/null",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn infinite_threshold_produces_no_events() {
    let dir = TempDir::new().unwrap();
    let (path, _) = design(&dir, "e.json", &["--kx", "3", "--kappa", "2", "--p", "0.8"]);
    let input = measurements(&simulate(&dir, "edge", "9"));
    for kind in ["edge", "peak"] {
        let text = ok(&[
            "detect",
            "--kind",
            kind,
            "--design",
            path_str(&path),
            "--threshold",
            "inf",
            "--input",
            path_str(&input),
        ]);
        assert_eq!(csv_rows(&text).len(), 400);
        assert!(event_clusters(&text, 0).is_empty());
    }
}

#[test]
fn edge_detector_needs_two_derivatives() {
    let dir = TempDir::new().unwrap();
    let (path, _) = design(
        &dir,
        "s.json",
        &["--kx", "2", "--kt", "1", "--kappa", "0", "--p", "0.8"],
    );
    let out = leakyreg(&[
        "detect",
        "--kind",
        "edge",
        "--design",
        path_str(&path),
        "--threshold",
        "3",
        "--input",
        "/dev/null",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let track = std::fs::read_to_string(simulate(&dir, "target-constant-accel", "4")).unwrap();
    assert_eq!(csv_rows(&track).len(), 200);
    assert_eq!(
        track.lines().next().unwrap(),
        "n,position,velocity,acceleration,measurement"
    );
    assert_eq!(
        csv_rows(&ok(&["simulate", "--scenario", "peak"])).len(),
        400
    );
    for scenario in ["target-random-accel", "edge", "peak", "change"] {
        let a = ok(&["simulate", "--scenario", scenario, "--seed", "17"]);
        let b = ok(&["simulate", "--scenario", scenario, "--seed", "17"]);
        let c = ok(&["simulate", "--scenario", scenario, "--seed", "18"]);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
    let out = leakyreg(&["simulate", "--scenario", "lunar"]);
    assert_eq!(out.status.code(), Some(2));
}
