//! End-to-end tests of the `setgp` binary: output schemas, byte-identical
//! reruns, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use setgp::sets::{GroundSet, Point, PointSet};
use setgp::testbed::{generate_dataset, save_csv, SetObjective};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_setgp"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("setgp_cli_tests")
        .join(format!("{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_mean_csv(dir: &Path, n: usize, p: usize, seed: u64) -> PathBuf {
    let data = generate_dataset(&SetObjective::Mean, n, p, seed).unwrap();
    let path = dir.join("data.csv");
    save_csv(&data, &path).unwrap();
    path
}

/// Every nonempty subset of a 3-site ground set: any four of these are
/// linearly dependent in membership space, so double-sum fits are
/// singular at every range.
fn write_dependent_csv(dir: &Path) -> PathBuf {
    let ground = GroundSet::new(vec![
        Point::new(vec![0.15, 0.25]).unwrap(),
        Point::new(vec![0.85, 0.35]).unwrap(),
        Point::new(vec![0.45, 0.85]).unwrap(),
    ])
    .unwrap();
    let subsets: [&[usize]; 7] = [
        &[0],
        &[1],
        &[2],
        &[0, 1],
        &[0, 2],
        &[1, 2],
        &[0, 1, 2],
    ];
    let records: Vec<(PointSet, f64)> = subsets
        .iter()
        .enumerate()
        .map(|(i, idx)| (ground.subset(idx).unwrap(), (i as f64 * 0.83).sin()))
        .collect();
    let data = setgp::gp::SetDataset::new(records).unwrap();
    let path = dir.join("dependent.csv");
    save_csv(&data, &path).unwrap();
    path
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {path:?}: {e}"))
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().skip(1).filter(|l| !l.is_empty()).collect()
}

#[test]
fn validate_writes_schema_and_is_reproducible() {
    let dir = tmp_dir("validate");
    let csv = write_mean_csv(&dir, 60, 4, 3);
    let out1 = dir.join("run1");
    let out2 = dir.join("run2");
    let args = |out: &Path| {
        vec![
            "validate".to_string(),
            format!("--csv={}", csv.display()),
            "--kernel=ds,de".to_string(),
            "--ratio=0.5".to_string(),
            "--reps=2".to_string(),
            "--seed=7".to_string(),
            format!("--out={}", out.display()),
        ]
    };
    run_ok(&args(&out1).iter().map(String::as_str).collect::<Vec<_>>());
    run_ok(&args(&out2).iter().map(String::as_str).collect::<Vec<_>>());

    let q2 = read(&out1.join("q2.csv"));
    assert!(q2.starts_with("problem,kernel,ratio,replication,q2,error\n"));
    let rows = data_rows(&q2);
    assert_eq!(rows.len(), 4, "2 kernels x 1 ratio x 2 reps");
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 6);
        let q: f64 = fields[4].parse().unwrap();
        assert!(q <= 1.0 + 1e-12);
        assert!(q > 0.5, "toy mean dataset should predict well, got {q}");
        assert!(fields[5].is_empty(), "unexpected error code {row}");
    }

    let summary = read(&out1.join("q2_summary.csv"));
    assert!(summary.starts_with("problem,kernel,ratio,mean_q2,n_ok,n_failed\n"));
    assert_eq!(data_rows(&summary).len(), 2);

    // Wide table layout: one row per kernel, one mean-Q2 column per ratio.
    let table = read(&out1.join("q2_table.csv"));
    assert!(table.starts_with("problem,kernel,q2_ratio_0.5\n"));
    assert_eq!(data_rows(&table).len(), 2);

    // Byte-identical CSVs across reruns with identical flags and seeds,
    // and independent of the worker-pool size.
    assert_eq!(q2, read(&out2.join("q2.csv")));
    assert_eq!(summary, read(&out2.join("q2_summary.csv")));
    let out3 = dir.join("run3");
    let mut one_thread: Vec<String> = args(&out3);
    one_thread.push("--threads=1".to_string());
    run_ok(&one_thread.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(q2, read(&out3.join("q2.csv")));

    // The manifest parses and names its outputs.
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&out1.join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "validate");
    assert_eq!(manifest["seed"], 7);
    assert!(manifest["outputs"].as_array().unwrap().len() >= 2);
    assert!(manifest["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn diag_writes_residual_files_with_consistent_standardization() {
    let dir = tmp_dir("diag");
    let csv = write_mean_csv(&dir, 4, 3, 11);
    let out = dir.join("out");
    run_ok(&[
        "diag",
        &format!("--csv={}", csv.display()),
        "--kernel=de",
        "--ratio=0.8",
        "--seed=2",
        &format!("--out={}", out.display()),
    ]);

    let loo = read(&out.join("residuals_loo.csv"));
    assert!(loo.starts_with("set_id,observed,predicted,sd,standardized\n"));
    assert_eq!(data_rows(&loo).len(), 3, "train side has 3 records");

    let test = read(&out.join("residuals_test.csv"));
    assert_eq!(data_rows(&test).len(), 1, "test side has 1 record");

    for row in data_rows(&loo).iter().chain(data_rows(&test).iter()) {
        let f: Vec<f64> = row
            .split(',')
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect();
        let (observed, predicted, sd, standardized) = (f[0], f[1], f[2], f[3]);
        if sd > 0.0 && standardized.is_finite() {
            let expect = (observed - predicted) / sd;
            assert!(
                (standardized - expect).abs() <= 1e-12 * (1.0 + expect.abs()),
                "standardized {standardized} vs (obs-pred)/sd {expect}"
            );
        }
    }
}

#[test]
fn bo_writes_campaign_outputs_and_is_reproducible() {
    let dir = tmp_dir("bo");
    let csv = write_mean_csv(&dir, 12, 3, 21);
    let out1 = dir.join("run1");
    let out2 = dir.join("run2");
    let args = |out: &Path| {
        vec![
            "bo".to_string(),
            format!("--csv={}", csv.display()),
            "--kernel=de".to_string(),
            "--trials=2".to_string(),
            "--init=2".to_string(),
            "--budget=3".to_string(),
            "--seed=5".to_string(),
            format!("--out={}", out.display()),
        ]
    };
    run_ok(&args(&out1).iter().map(String::as_str).collect::<Vec<_>>());
    run_ok(&args(&out2).iter().map(String::as_str).collect::<Vec<_>>());

    let trials = read(&out1.join("trials.csv"));
    assert!(trials.starts_with("method,trial,iteration,chosen,f,best_so_far,error\n"));
    // 2 methods (ei-de, random) x 2 trials x 3 iterations, no aborts.
    assert_eq!(data_rows(&trials).len(), 12);

    let summary = read(&out1.join("summary.csv"));
    assert!(summary.starts_with("method,iteration,median,p95\n"));
    assert_eq!(data_rows(&summary).len(), 2 * 4, "budget+1 rows per method");

    let hits = read(&out1.join("hits.csv"));
    assert!(hits.starts_with("method,hits,trials,aborted\n"));
    assert_eq!(data_rows(&hits).len(), 2);

    // Monotone best-so-far per (method, trial).
    let mut last: std::collections::HashMap<(String, String), f64> = Default::default();
    for row in data_rows(&trials) {
        let fields: Vec<&str> = row.split(',').collect();
        let key = (fields[0].to_string(), fields[1].to_string());
        let best: f64 = fields[5].parse().unwrap();
        if let Some(prev) = last.get(&key) {
            assert!(best <= *prev);
        }
        last.insert(key, best);
    }

    for name in ["trials.csv", "summary.csv", "hits.csv"] {
        assert_eq!(read(&out1.join(name)), read(&out2.join(name)), "{name} differs");
    }
}

#[test]
fn bo_budget_zero_reports_initial_design_statistics() {
    let dir = tmp_dir("bo_zero");
    let csv = write_mean_csv(&dir, 10, 3, 31);
    let out = dir.join("out");
    run_ok(&[
        "bo",
        &format!("--csv={}", csv.display()),
        "--kernel=de",
        "--trials=3",
        "--init=4",
        "--budget=0",
        "--seed=9",
        &format!("--out={}", out.display()),
    ]);
    let trials = read(&out.join("trials.csv"));
    assert_eq!(data_rows(&trials).len(), 0, "no iterations with budget 0");
    let summary = read(&out.join("summary.csv"));
    assert_eq!(data_rows(&summary).len(), 2, "one iteration-0 row per method");
    for row in data_rows(&summary) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[1], "0");
    }
}

#[test]
fn jitter_sweep_emits_one_block_per_level() {
    let dir = tmp_dir("sweep");
    let csv = write_dependent_csv(&dir);
    let out1 = dir.join("run1");
    let out2 = dir.join("run2");
    let args = |out: &Path| {
        vec![
            "jitter-sweep".to_string(),
            format!("--csv={}", csv.display()),
            "--ratio=0.7".to_string(),
            "--reps=1".to_string(),
            "--seed=13".to_string(),
            format!("--out={}", out.display()),
        ]
    };
    run_ok(&args(&out1).iter().map(String::as_str).collect::<Vec<_>>());
    run_ok(&args(&out2).iter().map(String::as_str).collect::<Vec<_>>());

    let sweep = read(&out1.join("sweep_summary.csv"));
    assert!(sweep.starts_with("a,ratio,mean_q2,n_ok,hits,trials,aborted\n"));
    assert_eq!(data_rows(&sweep).len(), 7);
    for a in 1..=7 {
        let block = out1.join(format!("a{a}"));
        assert!(block.join("q2.csv").exists());
        assert!(block.join("q2_summary.csv").exists());
        assert!(!block.join("summary.csv").exists(), "no bo block when trials=0");
    }
    assert_eq!(sweep, read(&out2.join("sweep_summary.csv")));
}

#[test]
fn jitter_sweep_matches_plain_ds_when_unneeded() {
    // On a well-conditioned dataset the jitter bound never fires, so every
    // sweep level reproduces the plain double-sum results. Seeds for the
    // sweep and for validate derive identically from (seed, ratio, rep).
    let dir = tmp_dir("sweep_plain");
    let csv = write_mean_csv(&dir, 30, 3, 41);
    let plain = dir.join("plain");
    run_ok(&[
        "validate",
        &format!("--csv={}", csv.display()),
        "--kernel=ds",
        "--ratio=0.7",
        "--reps=2",
        "--seed=17",
        &format!("--out={}", plain.display()),
    ]);
    let sweep = dir.join("sweep");
    run_ok(&[
        "jitter-sweep",
        &format!("--csv={}", csv.display()),
        "--ratio=0.7",
        "--reps=2",
        "--seed=17",
        &format!("--out={}", sweep.display()),
    ]);
    let plain_q2 = read(&plain.join("q2.csv"));
    for a in 1..=7 {
        assert_eq!(
            plain_q2,
            read(&sweep.join(format!("a{a}")).join("q2.csv")),
            "level a={a} diverged from plain double sum"
        );
    }
}

#[test]
fn validate_records_singular_fits_as_nan_rows() {
    // Double-sum fits on membership-dependent subsets fail at every range;
    // validate keeps going and flags the rows instead of erroring out.
    let dir = tmp_dir("validate_nan");
    let csv = write_dependent_csv(&dir);
    let out = dir.join("out");
    run_ok(&[
        "validate",
        &format!("--csv={}", csv.display()),
        "--kernel=ds",
        "--ratio=0.8",
        "--reps=2",
        "--seed=3",
        &format!("--out={}", out.display()),
    ]);
    let q2 = read(&out.join("q2.csv"));
    let rows = data_rows(&q2);
    assert_eq!(rows.len(), 2);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[4], "NaN", "{row}");
        assert_eq!(fields[5], "exhaustive-singularity", "{row}");
    }
    let summary = read(&out.join("q2_summary.csv"));
    assert!(summary.lines().nth(1).unwrap().contains(",NaN,0,2"));
}

#[test]
fn input_errors_exit_2_and_numerical_failures_exit_3() {
    let dir = tmp_dir("exits");
    let csv = write_mean_csv(&dir, 10, 3, 51);

    // Bad ratio: input error.
    let out = bin()
        .args([
            "validate",
            &format!("--csv={}", csv.display()),
            "--kernel=de",
            "--ratio=1.5",
            "--reps=1",
            &format!("--out={}", dir.join("x1").display()),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // Missing file: input error.
    let out = bin()
        .args([
            "validate",
            "--csv=/nonexistent/file.csv",
            &format!("--out={}", dir.join("x2").display()),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Unknown flag: clap usage error.
    let out = bin().args(["validate", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Structurally singular double-sum fit without jitter: numerical failure.
    let dep = write_dependent_csv(&dir);
    let out = bin()
        .args([
            "diag",
            &format!("--csv={}", dep.display()),
            "--kernel=ds",
            "--ratio=0.8",
            &format!("--out={}", dir.join("x3").display()),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn jitter_sweep_small_a_degrades_prediction() {
    // Responses drawn from a deep-embedding GP over ground-set subsets:
    // double-sum fits are singular there without jitter, and the heavier
    // regularization of small `a` should cost predictive accuracy.
    use setgp::gp::{fit, JitterPolicy, SetDataset};
    use setgp::kernels::{DeepKernelParams, InnerKernelParams, KernelSpec};
    use setgp::testbed::combinations;

    let dir = tmp_dir("sweep_trend");
    let mut coords = Vec::new();
    for i in 0..6u32 {
        coords.push(Point::new(vec![(i % 3) as f64 / 2.0, (i / 3) as f64]).unwrap());
    }
    let ground = GroundSet::new(coords).unwrap();
    let subsets = combinations(6, 3);
    let sets: Vec<PointSet> = subsets.iter().map(|s| ground.subset(s).unwrap()).collect();

    // A smooth deterministic stand-in for a deep-embedding draw: distances
    // to a reference subset through the embedding metric.
    let reference = ground.subset(&[0, 2, 4]).unwrap();
    let params = InnerKernelParams::new(0.6).unwrap();
    let records: Vec<(PointSet, f64)> = sets
        .iter()
        .map(|s| {
            let d = setgp::kernels::embed_distance(s, &reference, &params).unwrap();
            (s.clone(), (-d * d).exp() * 3.0 + 0.5 * d)
        })
        .collect();
    let data = SetDataset::new(records).unwrap();
    let csv = dir.join("de_prior.csv");
    save_csv(&data, &csv).unwrap();

    // Sanity: without jitter the double-sum Gram over these subsets is
    // singular (membership rank at most 6), so the sweep's jitter really
    // fires, while the deep-embedding fit stands on its own.
    assert!(fit(&data, &KernelSpec::Ds(params), JitterPolicy::None).is_err());
    let de_spec = KernelSpec::De(DeepKernelParams::new(params, 0.5, 1.0).unwrap());
    assert!(fit(&data, &de_spec, JitterPolicy::None).is_ok());

    let out = dir.join("out");
    run_ok(&[
        "jitter-sweep",
        &format!("--csv={}", csv.display()),
        "--ratio=0.7",
        "--reps=3",
        "--seed=29",
        &format!("--out={}", out.display()),
    ]);
    let sweep = read(&out.join("sweep_summary.csv"));
    let rows = data_rows(&sweep);
    assert_eq!(rows.len(), 7);
    let q2_of = |row: &str| -> f64 {
        let fields: Vec<&str> = row.split(',').collect();
        fields[2].parse().unwrap()
    };
    let q2_a1 = q2_of(rows[0]);
    let q2_a7 = q2_of(rows[6]);
    assert!(
        q2_a1 < q2_a7,
        "expected small a (heavy jitter) to predict worse: a=1 {q2_a1} vs a=7 {q2_a7}"
    );
}
