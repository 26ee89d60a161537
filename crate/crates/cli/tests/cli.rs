use std::path::Path;
use std::process::{Command, Output};

use flockring::io::read_metrics;
use serde_json::Value;

fn flockring(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flockring"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn simulate(config: &str, dir: &Path) -> Output {
    flockring(&[
        "simulate",
        "--config",
        config,
        "--out",
        dir.to_str().unwrap(),
    ])
}

fn base_with(dir: &Path, edits: &[(&str, &str)]) -> String {
    let mut text = flockring::config::bundled_source("optimize_base")
        .unwrap()
        .to_string();
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    let path = dir.join("edited.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn fig7_run_records_five_faults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate("fig7_faults", tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let events: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("events.json")).unwrap())
            .unwrap();
    let faults = events
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["kind"] == "fault")
        .count();
    assert_eq!(faults, 5);
    let metrics = read_metrics(&tmp.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.last().unwrap().n_alive, 3);

    let m = manifest(tmp.path());
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 7);
    for f in [
        "trajectory.csv",
        "metrics.csv",
        "violations.json",
        "events.json",
    ] {
        assert!(
            m["artifacts"].as_array().unwrap().iter().any(|a| a == f),
            "{f}"
        );
        assert!(tmp.path().join(f).exists());
    }
}

#[test]
fn repeated_runs_match_apart_from_timing() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = flockring(&[
            "simulate",
            "--config",
            "fig8_obstacles_moving",
            "--seed",
            "4",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for f in [
        "trajectory.csv",
        "metrics.csv",
        "events.json",
        "violations.json",
    ] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let strip = |mut v: Value| {
        let o = v.as_object_mut().unwrap();
        for k in ["wall_seconds", "created_unix", "output_dir"] {
            assert!(o.remove(k).is_some(), "{k}");
        }
        v
    };
    let (ma, mb) = (strip(manifest(a.path())), strip(manifest(b.path())));
    assert_eq!(ma, mb);
    assert_eq!(ma["seed"], 4);
}

#[test]
fn missing_config_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate("no/such/scenario.toml", tmp.path());
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("no/such/scenario.toml"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn bad_field_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = base_with(tmp.path(), &[("dt = 0.1", "dt = -0.5")]);
    let out = simulate(&cfg, &tmp.path().join("run"));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("dt"), "{}", stderr(&out));

    let cfg = base_with(tmp.path(), &[("[gains]", "[gainz]")]);
    assert_eq!(code(&simulate(&cfg, &tmp.path().join("run"))), 2);
}

#[test]
fn divergence_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = base_with(
        tmp.path(),
        &[
            ("substeps = 10", "substeps = 1"),
            ("c2_gamma = 11.2", "c2_gamma = 1000.0"),
        ],
    );
    let out = simulate(&cfg, &tmp.path().join("run"));
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged"));
}

#[test]
fn plan_reports_geometry() {
    let out = flockring(&[
        "plan",
        "--counts",
        "3,11,18,26",
        "--d-l1",
        "5",
        "--d-eps",
        "1.5",
        "--kappa",
        "1.07",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    let radii: Vec<f64> = text
        .lines()
        .find(|l| l.starts_with("radii"))
        .unwrap()
        .split_whitespace()
        .skip(1)
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!(radii.len(), 4);
    assert!((radii[0] - 5.0).abs() < 1e-4);
    assert!(radii.windows(2).all(|w| w[1] > w[0]));
    assert!(text.contains("valid"));
}

#[test]
fn plan_rejects_bad_layouts() {
    let two = flockring(&["plan", "--counts", "2,11,18", "--d-l1", "5"]);
    assert_eq!(code(&two), 4);
    assert!(stdout(&two).contains("violated"));

    let tight = flockring(&[
        "plan",
        "--counts",
        "3,11,18,26",
        "--d-l1",
        "5",
        "--d-eps",
        "0",
        "--kappa",
        "1.07",
    ]);
    assert_eq!(code(&tight), 4);

    assert_eq!(code(&flockring(&["plan", "--counts", "3,x"])), 2);
}

#[test]
fn plan_reads_bundled_layout() {
    let out = flockring(&["plan", "--config", "fig11_triangle"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("[3, 11, 18, 26]"));
    assert_eq!(code(&flockring(&["plan", "--config", "fig7_faults"])), 2);
}

#[test]
fn optimize_writes_loadable_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("opt");
    let out = Command::new(env!("CARGO_BIN_EXE_flockring"))
        .args([
            "optimize",
            "--algorithm",
            "gwo",
            "--scenario",
            "4",
            "--seed",
            "2",
        ])
        .args(["--population", "4", "--iterations", "2", "--agents", "5"])
        .args(["--out", dir.to_str().unwrap()])
        .env("FLOCKRING_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in [
        "report.csv",
        "history.csv",
        "best_params.toml",
        "manifest.json",
    ] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let history = std::fs::read_to_string(dir.join("history.csv")).unwrap();
    assert!(history.lines().count() >= 3);

    let run = simulate(
        dir.join("best_params.toml").to_str().unwrap(),
        &tmp.path().join("run"),
    );
    assert_eq!(code(&run), 0, "{}", stderr(&run));
}

#[test]
fn optimize_rejects_unknown_choices() {
    assert_eq!(
        code(&flockring(&[
            "optimize",
            "--algorithm",
            "annealing",
            "--scenario",
            "1"
        ])),
        2
    );
    assert_eq!(
        code(&flockring(&[
            "optimize",
            "--algorithm",
            "ga",
            "--scenario",
            "0"
        ])),
        2
    );
    assert_eq!(
        code(&flockring(&[
            "optimize",
            "--algorithm",
            "ga",
            "--scenario",
            "5"
        ])),
        2
    );
    assert_eq!(
        code(&flockring(&[
            "optimize",
            "--algorithm",
            "pso",
            "--scenario",
            "1",
            "--config",
            "fig11_hexagon"
        ])),
        2
    );
}

#[test]
fn bad_thread_count_is_an_input_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_flockring"))
        .args(["plan", "--counts", "3,9"])
        .env("FLOCKRING_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("FLOCKRING_THREADS"));
}

#[test]
fn export_series_line_up_with_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    assert_eq!(code(&simulate("fig7_faults", &run)), 0);
    let plots = tmp.path().join("plots");
    let out = flockring(&[
        "export-plots",
        "--run",
        run.to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let metrics = read_metrics(&run.join("metrics.csv")).unwrap();
    let alive_rows: usize = metrics.iter().map(|m| m.n_alive).sum();
    let rows = |f: &str| -> Vec<Vec<String>> {
        std::fs::read_to_string(plots.join(f))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect()
    };
    assert_eq!(rows("leader_distance.csv").len(), alive_rows);

    let adjacent = rows("adjacent_distance.csv");
    let min_series = adjacent
        .iter()
        .map(|r| r[2].parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    let min_metrics = metrics
        .iter()
        .map(|m| m.min_pair)
        .fold(f64::INFINITY, f64::min);
    assert!(
        (min_series - min_metrics).abs() <= 1e-6 * min_metrics,
        "{min_series} vs {min_metrics}"
    );

    let paths = rows("paths.csv");
    let agents = 8;
    assert_eq!(paths.len(), (agents + 1) * metrics.len());
    let mut ids: Vec<&str> = paths.iter().map(|r| r[0].as_str()).collect();
    ids.dedup();
    assert_eq!(ids.len(), agents + 1);
    assert_eq!(ids.last(), Some(&"leader"));
}

#[test]
fn export_needs_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert_eq!(code(&flockring(&["export-plots", "--run", dir])), 2);

    let header = "t,n_alive,d,d_l,active_circles,min_pair,min_clearance,leader_distances,adjacent_distances\n";
    std::fs::write(tmp.path().join("metrics.csv"), header).unwrap();
    let out = flockring(&["export-plots", "--run", dir]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("metrics.csv"), "{}", stderr(&out));
}
