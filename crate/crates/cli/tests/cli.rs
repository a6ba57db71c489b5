use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hawkes_islands::{simulate, GroundTruth, SimConfig, StepFunction};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hawkes-islands"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("one error line");
    serde_json::from_str(line).expect("stderr is JSON")
}

fn simulate_file(dir: &Path, name: &str, args: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut full = vec!["simulate", "--out", path.to_str().unwrap()];
    full.extend_from_slice(args);
    let out = run(&full);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--truth", "f1", "--scale", "0.5", "--nu", "0.001", "--T", "100000", "--seed", "3",
    ];
    let a = std::fs::read(simulate_file(dir.path(), "a.txt", &args)).unwrap();
    let b = std::fs::read(simulate_file(dir.path(), "b.txt", &args)).unwrap();
    assert_eq!(a, b);
    let mut other = args.to_vec();
    other.extend(["--stream", "1"]);
    let c = std::fs::read(simulate_file(dir.path(), "c.txt", &other)).unwrap();
    assert_ne!(a, c);
    let text = String::from_utf8(a).unwrap();
    assert!(
        text.starts_with("# window: -1000 100000"),
        "{}",
        &text[..40]
    );
}

#[test]
fn gram_fit_and_rescore_agree() {
    let dir = tempfile::tempdir().unwrap();
    let ev = simulate_file(
        dir.path(),
        "ev.txt",
        &[
            "--nu", "0.002", "--scale", "0.5", "--T", "100000", "--seed", "1",
        ],
    );
    let ev = ev.to_str().unwrap();
    let gram = ok_json(&["gram", "--events", ev, "--gamma-size", "5"]);
    assert_eq!(gram["b"].as_array().unwrap().len(), 6);
    assert_eq!(gram["x"].as_array().unwrap().len(), 6);
    let csv = run(&[
        "gram",
        "--events",
        ev,
        "--gamma-size",
        "5",
        "--format",
        "csv",
    ]);
    assert!(String::from_utf8_lossy(&csv.stdout).starts_with("row,b,x0,x1"));

    let est_path = dir.path().join("est.json");
    let est = ok_json(&[
        "fit",
        "--events",
        ev,
        "--gamma-size",
        "5",
        "--intervals",
        "200:400,600:800",
    ]);
    assert_eq!(est["dimension"], 3);
    assert_eq!(est["model"].as_array().unwrap().len(), 2);
    std::fs::write(&est_path, serde_json::to_string(&est).unwrap()).unwrap();
    let again = ok_json(&[
        "fit",
        "--events",
        ev,
        "--estimator",
        est_path.to_str().unwrap(),
    ]);
    let (a, b) = (
        est["contrast"].as_f64().unwrap(),
        again["contrast"].as_f64().unwrap(),
    );
    assert!((a - b).abs() <= 1e-10 * a.abs(), "{a} vs {b}");
}

#[test]
fn select_recovers_the_plateau_and_writes_the_curve() {
    let dir = tempfile::tempdir().unwrap();
    let ev = simulate_file(
        dir.path(),
        "ev.txt",
        &[
            "--nu", "0.001", "--scale", "0.5", "--T", "500000", "--seed", "8",
        ],
    );
    let ev = ev.to_str().unwrap();
    let curve = dir.path().join("curve.csv");
    let est = ok_json(&[
        "select",
        "--events",
        ev,
        "--method",
        "1",
        "--curve-out",
        curve.to_str().unwrap(),
    ]);
    assert_eq!(est["dimension"], 6);
    assert_eq!(est["method"], 1);
    let csv = std::fs::read_to_string(&curve).unwrap();
    assert!(csv.starts_with("dimension,contrast,penalty,penalized\n"));
    assert_eq!(csv.lines().count(), 17);

    let report = ok_json(&["select", "--events", ev, "--method", "4", "--report"]);
    assert_eq!(report["penalty_kind"], "angle");
    assert_eq!(report["strategy"], "islands");
    let custom = ok_json(&[
        "select",
        "--events",
        ev,
        "--strategy",
        "islands",
        "--gamma-size",
        "10",
        "--penalty",
        "theoretical",
        "--kappa",
        "1",
        "--Q",
        "2",
    ]);
    assert!(custom["penalty_constant"].as_f64().unwrap() > 0.0);
    let holdout = ok_json(&["holdout", "--events", ev, "--method", "6"]);
    assert!(holdout["nu"].as_f64().unwrap() > 0.0);
}

#[test]
fn validate_reports_moment_below_its_bound() {
    let v = ok_json(&[
        "validate", "--nu", "0.001", "--scale", "0.5", "--reps", "20", "--T", "50000",
    ]);
    let r = &v["report"];
    assert!(r["second_moment"].as_f64().unwrap() <= r["upper_bound"].as_f64().unwrap());
    assert!((r["l2"].as_f64().unwrap() - 0.00025).abs() < 1e-15);
    assert_eq!(v["monte_carlo"]["replicates"], 20);
}

#[test]
fn bench_writes_three_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("s.toml");
    std::fs::write(
        &scn,
        "name = \"tiny\"\ntruth = \"f1\"\nnu = 0.002\nhorizon = 100000\nreplicates = 2\nmethods = [1, 4, 8]\n\
         [grid]\nscale = [0.5, 1.0]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let res = run(&[
        "bench",
        "--scenario",
        scn.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("risk_report.json")).unwrap())
            .unwrap();
    assert_eq!(report.as_array().unwrap().len(), 2);
    let curves = std::fs::read_to_string(out.join("contrast_curves.csv")).unwrap();
    assert!(curves.starts_with("scenario,method,replicate,dimension,contrast,penalty,penalized\n"));
    let hist = std::fs::read_to_string(out.join("dimension_histogram.csv")).unwrap();
    assert!(hist.starts_with("scenario,method,dimension,count\n"));
    let total: usize = hist
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 2 * 3 * 2);
}

#[test]
fn shipped_scenarios_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let grid = hawkes_islands::bench::load_scenarios(root.join("f1_grid.toml")).unwrap();
    assert_eq!(grid.len(), 40);
    for name in ["f1_grid.toml", "f2.toml", "custom.toml"] {
        for s in hawkes_islands::bench::load_scenarios(root.join(name)).unwrap() {
            s.validate().unwrap();
        }
    }
}

#[test]
fn errors_use_exit_codes_and_json() {
    let out = run(&["simulate", "--nu", "0.001"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1.0\n2.0\nnot-a-number\n").unwrap();
    let out = run(&["gram", "--events", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "parse");
    assert!(err["message"].as_str().unwrap().contains('3'));

    let out = run(&[
        "gram",
        "--events",
        dir.path().join("missing.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["select", "--events", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn degenerate_fit_still_writes_its_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("few.txt");
    std::fs::write(&ev, "# window: 0 5000\n4500\n").unwrap();
    let out = run(&["fit", "--events", ev.to_str().unwrap(), "--gamma-size", "4"]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let est: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(est["dimension"], 5);
    assert_eq!(stderr_json(&out)["error"], "numeric");
}

#[test]
fn long_support_workflow_smoke_test() {
    // genome-scale shape: A = 10⁴, T = 10⁶, |Γ| = 15
    let h = StepFunction::from_pieces(10_000.0, &[(2_000.0, 4_000.0, 1e-4)]).unwrap();
    let truth = GroundTruth::new(3.6e-4, h).unwrap();
    let events = simulate(&truth, &SimConfig::new(1e6, 10_000.0, 42)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("genes.txt");
    events.save(&path).unwrap();
    let p = path.to_str().unwrap();
    for method in ["4", "5"] {
        let est = ok_json(&[
            "select",
            "--events",
            p,
            "--A",
            "10000",
            "--gamma-size",
            "15",
            "--method",
            method,
        ]);
        let d = est["dimension"].as_u64().unwrap();
        assert!((1..=16).contains(&d));
        assert!(est["nu"].as_f64().unwrap() > 0.0);
        for piece in est["h"].as_array().unwrap() {
            assert!(piece["right"].as_f64().unwrap() <= 10_000.0);
        }
    }
    let ho = ok_json(&[
        "holdout",
        "--events",
        p,
        "--A",
        "10000",
        "--gamma-size",
        "15",
    ]);
    assert!(ho["dimension"].as_u64().unwrap() >= 1);
}
