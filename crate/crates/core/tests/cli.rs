use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mec")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn weights(csv_text: &str) -> Vec<f64> {
    csv_text
        .lines()
        .skip(1)
        .take_while(|l| !l.starts_with("lambda="))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn write_toy(dir: &Path) -> (String, String) {
    fs::write(dir.join("design.csv"), "one,z\n1,1\n1,2\n").unwrap();
    fs::write(dir.join("totals.csv"), "one,z\n4,7\n").unwrap();
    (path(dir, "design.csv"), path(dir, "totals.csv"))
}

#[test]
fn calibrates_toy_problem_in_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let (design, totals) = write_toy(dir.path());
    let text = stdout(&mec(&[
        "calibrate", "--design", &design, "--totals", &totals, "--population-size", "4",
    ]));
    let w = weights(&text);
    assert_eq!(w.len(), 2);
    assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 3.0).abs() < 1e-12, "{w:?}");
    assert!(text.contains("iterations=1 "), "{text}");
    assert!(text.contains("converged=true"));
}

#[test]
fn calibrated_baseline_needs_at_most_one_step() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("design.csv"), "one,z\n1,1\n1,2\n1,4\n").unwrap();
    // Zᵀd with d = 9 / 3 = 3
    fs::write(dir.path().join("totals.csv"), "9\n21\n").unwrap();
    for gen in ["quadratic", "kullback_leibler", "hellinger"] {
        let text = stdout(&mec(&[
            "calibrate",
            "--design",
            &path(dir.path(), "design.csv"),
            "--totals",
            &path(dir.path(), "totals.csv"),
            "--population-size",
            "9",
            "--generator",
            gen,
        ]));
        let iters: usize = text
            .split("iterations=")
            .nth(1)
            .and_then(|s| s.split_whitespace().next())
            .unwrap()
            .parse()
            .unwrap();
        assert!(iters <= 1, "{gen}: {text}");
        for w in weights(&text) {
            assert!((w - 3.0).abs() < 1e-10);
        }
    }
}

#[test]
fn kl_weights_are_positive_and_written_with_trace_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let mut design = String::from("one,z\n");
    for j in 0..40 {
        design.push_str(&format!("1,{}\n", (j as f64 * 0.37).sin() * 3.0));
    }
    fs::write(dir.path().join("design.csv"), design).unwrap();
    fs::write(dir.path().join("totals.csv"), "200,60\n").unwrap();
    let out = path(dir.path(), "w.csv");
    let trace = path(dir.path(), "trace.csv");
    let text = stdout(&mec(&[
        "calibrate",
        "--design",
        &path(dir.path(), "design.csv"),
        "--totals",
        &path(dir.path(), "totals.csv"),
        "--population-size",
        "200",
        "--generator",
        "kl",
        "--trace",
        &trace,
        "--out",
        &out,
    ]));
    assert!(text.starts_with("lambda="));
    let w = weights(&fs::read_to_string(&out).unwrap());
    assert_eq!(w.len(), 40);
    assert!(w.iter().all(|&v| v > 0.0));
    assert!((w.iter().sum::<f64>() - 200.0).abs() < 1e-8);
    assert!(fs::read_to_string(&trace).unwrap().starts_with("iteration,"));

    let echo = path(dir.path(), "w.config.json");
    let again = path(dir.path(), "w2.csv");
    stdout(&mec(&["calibrate", "--config", &echo, "--out", &again]));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn infeasible_calibration_fails() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("design.csv"), "z\n1\n2\n").unwrap();
    fs::write(dir.path().join("totals.csv"), "-5\n").unwrap();
    let out = mec(&[
        "calibrate",
        "--design",
        &path(dir.path(), "design.csv"),
        "--totals",
        &path(dir.path(), "totals.csv"),
        "--population-size",
        "4",
        "--generator",
        "el",
    ]);
    assert!(!out.status.success());
}

#[test]
fn empty_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.json"), r#"{"N": 100, "f_grid": [], "d": 3, "sigma_y": 1, "R": 2, "seed": 1}"#)
        .unwrap();
    let out = mec(&["simulate", "--config", &path(dir.path(), "sim.json"), "--out", &path(dir.path(), "s.csv")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("f_grid"));
    assert!(!dir.path().join("s.csv").exists());
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("sim.json"),
        r#"{"N": 100, "f_grid": [0.3], "d": 3, "sigma_y": 1, "R": 2, "seed": 1, "extra": 0}"#,
    )
    .unwrap();
    let out = mec(&["simulate", "--config", &path(dir.path(), "sim.json"), "--out", &path(dir.path(), "s.csv")]);
    assert!(!out.status.success());
}

#[test]
fn simulate_writes_summary_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("sim.json"),
        r#"{"N": 200, "f_grid": [0.2, 0.01], "d": 4, "sigma_y": 1, "R": 3, "seed": 9, "learners": [{"kind": "knn"}]}"#,
    )
    .unwrap();
    let out = path(dir.path(), "s.csv");
    let text = stdout(&mec(&["simulate", "--config", &path(dir.path(), "sim.json"), "--out", &out]));
    assert!(text.contains("skipped f = 0.01"), "{text}");
    let csv_text = fs::read_to_string(&out).unwrap();
    let mut lines = csv_text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,learner,generator,f,coverage,width_ratio,mean_width,mean_bias,failures,replications"
    );
    // classical, oracle, ppi, cfppi, mec for the one feasible cell
    assert_eq!(lines.count(), 5);
    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.config.json")).unwrap()).unwrap();
    assert_eq!(echo["R"], 3);
    assert_eq!(echo["K"], 5);
}

fn write_labeled_pair(dir: &Path) -> (String, String) {
    let mut lab = String::from("x1,x2,y\n");
    for j in 0..40 {
        let (a, b) = ((j as f64 * 0.7).sin(), (j as f64 * 1.3).cos());
        lab.push_str(&format!("{a},{b},{}\n", 1.0 + 2.0 * a - b + 0.1 * (j as f64 * 2.9).sin()));
    }
    let mut unl = String::from("x1,x2\n");
    for i in 0..160 {
        unl.push_str(&format!("{},{}\n", (i as f64 * 0.41).sin(), (i as f64 * 0.77).cos()));
    }
    fs::write(dir.join("lab.csv"), lab).unwrap();
    fs::write(dir.join("unl.csv"), unl).unwrap();
    (path(dir, "lab.csv"), path(dir, "unl.csv"))
}

fn report_field(csv_text: &str, method: &str, column: &str) -> f64 {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let c = header.iter().position(|h| *h == column).unwrap();
    let row = lines.find(|l| l.starts_with(&format!("{method},"))).unwrap();
    row.split(',').nth(c).unwrap().parse().unwrap()
}

#[test]
fn estimate_classical_matches_sample_mean() {
    let dir = tempfile::tempdir().unwrap();
    let (lab, unl) = write_labeled_pair(dir.path());
    let text = stdout(&mec(&["estimate", "--labeled", &lab, "--unlabeled", &unl, "--method", "classical"]));
    let ys: Vec<f64> = fs::read_to_string(&lab)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((report_field(&text, "classical", "theta_hat") - mean).abs() < 1e-9);
    assert!((report_field(&text, "classical", "se") - (var / n).sqrt()).abs() < 1e-9);
}

#[test]
fn estimate_mec_equals_greg_for_quadratic() {
    let dir = tempfile::tempdir().unwrap();
    let (lab, unl) = write_labeled_pair(dir.path());
    let out = path(dir.path(), "r.csv");
    let json = path(dir.path(), "r.json");
    let preds = path(dir.path(), "p.csv");
    stdout(&mec(&[
        "estimate", "--labeled", &lab, "--unlabeled", &unl, "--method", "mec,greg,cfppi", "--learner", "knn:5",
        "--out", &out, "--json", &json, "--predictions-out", &preds,
    ]));
    let text = fs::read_to_string(&out).unwrap();
    let (a, b) = (report_field(&text, "mec", "theta_hat"), report_field(&text, "greg", "theta_hat"));
    assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
    let reports: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 3);
    assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 1 + 200);

    // the saved predictions feed back in as an external learner
    let ext = format!("external:{preds}");
    let again = stdout(&mec(&[
        "estimate", "--labeled", &lab, "--unlabeled", &unl, "--method", "mec", "--learner", &ext,
    ]));
    assert_eq!(report_field(&again, "mec", "theta_hat"), a);
}

#[test]
fn estimate_rejects_oracle_and_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (lab, unl) = write_labeled_pair(dir.path());
    assert!(!mec(&["estimate", "--labeled", &lab, "--unlabeled", &unl, "--method", "oracle"]).status.success());
    assert!(!mec(&["estimate", "--labeled", &lab, "--unlabeled", "missing.csv"]).status.success());
    assert!(!mec(&["estimate", "--labeled", &lab, "--unlabeled", &unl, "--generator", "nope"]).status.success());
}

#[test]
fn help_and_version_exit_cleanly() {
    assert!(stdout(&mec(&["--help"])).contains("simulate"));
    assert!(stdout(&mec(&["calibrate", "--help"])).contains("--population-size"));
    assert!(stdout(&mec(&["--version"])).starts_with("mec "));
}
