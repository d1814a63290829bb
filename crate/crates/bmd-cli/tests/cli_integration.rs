use std::path::PathBuf;
use std::process::{Command, Output};

use bmd::chain::{self, ChainParams, StateDistribution};
use bmd::infer;
use bmd::predict::{self, PredictionQuery};
use bmd::sim::NegJumpRecord;

fn bmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).skip(1).collect()
}

fn temp_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("bmd-cli-{}-{name}", std::process::id()))
}

#[test]
fn help_exits_zero() {
    let out = bmd(&["--help"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("simulate"));
    assert!(text.contains("predict"));
}

#[test]
fn configuration_mistakes_exit_one() {
    let out = bmd(&["transition", "--x", "0", "--t", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--lambda"));

    let out = bmd(&["transition", "--lambda", "-1", "--mu", "1", "--x", "0", "--t", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("lambda"));

    let out = bmd(&["equilibrium", "--theta", "1", "--mu", "1", "--tol", "1e-3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--tol"));
}

#[test]
fn numerical_guard_trips_exit_two() {
    let query = temp_path("underflow.json");
    std::fs::write(
        &query,
        r#"{
            "lambda": 1.0,
            "mu": 1.0,
            "tau": {"kind": "delta", "x": 0},
            "record": {"times": [1e-9], "magnitudes": [400]},
            "xi": 1
        }"#,
    )
    .unwrap();
    let out = bmd(&["predict", "--query", query.to_str().unwrap()]);
    std::fs::remove_file(&query).ok();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("underflow"));
}

#[test]
fn identical_invocations_reproduce_byte_identical_output() {
    let args = [
        "simulate",
        "--theta",
        "1",
        "--mu",
        "1",
        "--horizon",
        "5",
        "--seed",
        "7",
        "--no-timestamp",
    ];
    let first = bmd(&args);
    let second = bmd(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    assert!(stdout(&first).contains("# seed: 7"));
}

#[test]
fn transition_rows_match_the_library() {
    let p = ChainParams::from_theta(1.5, 0.8).unwrap();
    let out = bmd(&[
        "transition",
        "--theta",
        "1.5",
        "--mu",
        "0.8",
        "--x",
        "2",
        "--t",
        "0.7",
        "--max-y",
        "12",
        "--no-timestamp",
    ]);
    assert!(out.status.success());
    let (row, _) = chain::transition_row(&p, 2, 0.7, Some(12)).unwrap();
    let printed: Vec<f64> = data_rows(&stdout(&out))
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(printed.len(), row.len());
    for (a, b) in printed.iter().zip(&row) {
        assert_eq!(a, b);
    }
}

#[test]
fn estimate_agrees_with_the_library_end_to_end() {
    let sample = infer::sample_magnitudes(4.0, 10_000, 0xACC8, 0).unwrap();
    let input = temp_path("magnitudes.txt");
    let mut text = String::from("# synthetic magnitudes\n");
    for &d in sample.values() {
        text += &format!("{d}\n");
    }
    std::fs::write(&input, text).unwrap();
    let out = bmd(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--format",
        "json",
        "--no-timestamp",
    ]);
    std::fs::remove_file(&input).ok();
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let expected = infer::estimate_theta(&sample).unwrap();
    let theta_hat = value["report"]["theta_hat"].as_f64().unwrap();
    assert!((theta_hat - expected.theta_hat).abs() <= 1e-12);
    assert_eq!(value["report"]["n"].as_u64().unwrap(), 10_000);
    assert_eq!(value["meta"]["seed"].as_u64().unwrap(), 0);
}

#[test]
fn linkfun_sweep_is_well_formed() {
    let out = bmd(&[
        "linkfun",
        "--theta-min",
        "0",
        "--theta-max",
        "2",
        "--step",
        "0.25",
        "--no-timestamp",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 9);
    let mut prev = 0.0f64;
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 4);
        let l: f64 = cells[1].parse().unwrap();
        if i == 0 {
            assert_eq!(l, 1.0);
        } else {
            assert!(l > prev);
        }
        prev = l;
    }
}

#[test]
fn linkfun_asymptotic_mode_pairs_both_routes() {
    let out = bmd(&[
        "linkfun",
        "--theta-min",
        "5",
        "--theta-max",
        "25",
        "--step",
        "5",
        "--asymptotic",
        "--order",
        "4",
        "--no-timestamp",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("theta,L_series,L_asymptotic"));
    for row in data_rows(&text) {
        let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), 3);
        let rel = (cells[1] - cells[2]).abs() / cells[1];
        assert!(rel < 0.01, "routes disagree at theta={}: {rel}", cells[0]);
    }
}

#[test]
fn bounds_reports_always_dominate_the_exact_distance() {
    for tau in ["delta:3", "equilibrium", "geometric:0.5:12"] {
        let out = bmd(&[
            "bounds",
            "--theta",
            "2",
            "--mu",
            "0.5",
            "--times",
            "0.1,1,4",
            "--tau",
            tau,
            "--moments",
            "3",
            "--no-timestamp",
        ]);
        assert!(out.status.success(), "bounds failed for tau={tau}");
        let text = stdout(&out);
        let rows = data_rows(&text);
        assert_eq!(rows.len(), 15);
        for row in rows {
            let cells: Vec<&str> = row.split(',').collect();
            let exact: f64 = cells[5].parse().unwrap();
            let bound: f64 = cells[6].parse().unwrap();
            assert!(exact <= bound + 1e-10, "violated: {row}");
        }
    }
}

#[test]
fn record_export_column_count_follows_hide_states() {
    let base = [
        "simulate", "--theta", "2", "--mu", "1", "--horizon", "10", "--seed", "11", "--records",
        "--no-timestamp",
    ];
    let out = bmd(&base);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("time,magnitude,post_state"));
    let rows = data_rows(&text);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.split(',').count() == 3));

    let mut hidden = base.to_vec();
    hidden.push("--hide-states");
    let out = bmd(&hidden);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("time,magnitude\n"));
    let hidden_rows = data_rows(&text);
    assert_eq!(hidden_rows.len(), rows.len());
    assert!(hidden_rows.iter().all(|r| r.split(',').count() == 2));
}

#[test]
fn replicate_output_is_independent_of_thread_count() {
    let run = |threads: &str| {
        let out = bmd(&[
            "replicate",
            "--theta",
            "1",
            "--mu",
            "1",
            "--paths",
            "8",
            "--horizon",
            "15",
            "--seed",
            "21",
            "--threads",
            threads,
            "--no-timestamp",
        ]);
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("1"), run("2"));
}

#[test]
fn predict_matches_the_library_answer() {
    let query = temp_path("query.json");
    std::fs::write(
        &query,
        r#"{
            "lambda": 1.0,
            "mu": 1.0,
            "tau": {"kind": "delta", "x": 0},
            "record": {"times": [1.0], "magnitudes": [1]},
            "xi": 2
        }"#,
    )
    .unwrap();
    let out = bmd(&[
        "predict",
        "--query",
        query.to_str().unwrap(),
        "--format",
        "json",
        "--no-timestamp",
    ]);
    std::fs::remove_file(&query).ok();
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();

    let q = PredictionQuery {
        params: ChainParams::new(1.0, 1.0).unwrap(),
        initial: StateDistribution::delta(0),
        record: NegJumpRecord::from_observations(vec![1.0], vec![1]).unwrap(),
        xi: 2,
    };
    let tail = predict::tail_unseen(&q).unwrap();
    let expected = predict::expected_unseen(&q).unwrap();
    let got_tail = value["tail_probability"].as_f64().unwrap();
    let got_exp = value["expected_unseen"].as_f64().unwrap();
    assert!((got_tail - tail.value).abs() <= 1e-12);
    assert!((got_exp - expected.value).abs() <= 1e-12);
    assert!((got_tail - 0.051208474274855039).abs() < 1e-12);
}
