use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use slope::cli::{run, EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
use slope::io;

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("slope").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

fn numbers(csv: &str) -> Vec<f64> {
    csv.lines()
        .filter_map(|l| l.split(',').next_back()?.trim().parse().ok())
        .collect()
}

#[test]
fn lambda_bh_first_value() {
    let (code, out, err) = call(&["lambda", "--p", "1000", "--q", "0.207"]);
    assert_eq!(code, EXIT_OK);
    assert!(err.starts_with("lambda: {"));
    let values = numbers(&out);
    assert_eq!(values.len(), 1000);
    assert!((values[0] - 3.7103).abs() < 1e-4);
}

#[test]
fn lambda_corrected_reports_critical_point() {
    let (code, out, err) = call(&[
        "lambda", "--kind", "bhc-gaussian", "--n", "5000", "--p", "5000", "--q", "0.05",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(err.contains("k_star: 91"), "{err}");
    let values = numbers(&out);
    assert!(values.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn prox_small_example() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("y.csv"), "y\n5\n4\n3\n").unwrap();
    fs::write(dir.path().join("l.csv"), "1\n1\n1\n").unwrap();
    let (code, out, _) = call(&[
        "prox", "--y", &path(dir.path(), "y.csv"), "--lambda", &path(dir.path(), "l.csv"),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(numbers(&out), vec![4.0, 3.0, 2.0]);
}

#[test]
fn solve_writes_estimate_and_report_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let x = DMatrix::from_fn(30, 20, |i, j| (((i * 7 + j * 13) % 11) as f64 - 5.0) / 10.0);
    io::write_matrix_binary(fs::File::create(dir.path().join("x.bin")).unwrap(), &x).unwrap();
    let y: Vec<f64> = (0..30).map(|i| 3.0 * x[(i, 0)] - 2.0 * x[(i, 1)] + 0.1 * (i % 3) as f64).collect();
    io::write_vector_csv(fs::File::create(dir.path().join("y.csv")).unwrap(), "y", &y).unwrap();
    let run_once = |tag: &str| {
        let out = path(dir.path(), &format!("b_{tag}.csv"));
        let report = path(dir.path(), &format!("r_{tag}.json"));
        let (code, _, err) = call(&[
            "solve", "--x", &path(dir.path(), "x.bin"), "--y", &path(dir.path(), "y.csv"),
            "--q", "0.1", "--out", &out, "--report", &report,
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        (fs::read(out).unwrap(), fs::read_to_string(report).unwrap())
    };
    let (b1, r1) = run_once("a");
    let (b2, r2) = run_once("b");
    assert_eq!(b1, b2);
    assert_eq!(r1, r2);
    assert!(r1.contains("\"gap\""));
    assert_eq!(numbers(std::str::from_utf8(&b1).unwrap()).len(), 20);
}

#[test]
fn declared_shape_mismatch_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let x = DMatrix::from_element(4, 3, 1.0);
    io::write_matrix_csv(fs::File::create(dir.path().join("x.csv")).unwrap(), &x).unwrap();
    io::write_vector_csv(fs::File::create(dir.path().join("y.csv")).unwrap(), "y", &[1.0; 4]).unwrap();
    let (code, _, _) = call(&[
        "solve", "--x", &path(dir.path(), "x.csv"), "--y", &path(dir.path(), "y.csv"),
        "--lasso", "1", "--rows", "4", "--cols", "5",
    ]);
    assert_eq!(code, EXIT_INPUT);
    let (code, _, _) = call(&["solve", "--x", "x.csv"]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn truncated_binary_design_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let x = DMatrix::from_element(10, 10, 0.5);
    let mut bytes = Vec::new();
    io::write_matrix_binary(&mut bytes, &x).unwrap();
    bytes.truncate(bytes.len() - 9);
    fs::write(dir.path().join("x.bin"), bytes).unwrap();
    io::write_vector_csv(fs::File::create(dir.path().join("y.csv")).unwrap(), "y", &[1.0; 10]).unwrap();
    let (code, _, err) = call(&[
        "solve", "--x", &path(dir.path(), "x.bin"), "--y", &path(dir.path(), "y.csv"), "--lasso", "0.1",
    ]);
    assert_eq!(code, EXIT_INPUT, "{err}");
}

#[test]
fn iteration_cap_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let x = DMatrix::from_fn(20, 40, |i, j| ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5);
    io::write_matrix_csv(fs::File::create(dir.path().join("x.csv")).unwrap(), &x).unwrap();
    let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
    io::write_vector_csv(fs::File::create(dir.path().join("y.csv")).unwrap(), "y", &y).unwrap();
    let (code, _, _) = call(&[
        "solve", "--x", &path(dir.path(), "x.csv"), "--y", &path(dir.path(), "y.csv"),
        "--lasso", "0.01", "--max-iters", "2", "--gap-tol", "1e-14",
    ]);
    assert_eq!(code, EXIT_NUMERIC);
}

#[test]
fn simulate_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "design": {"kind": {"type": "gaussian_iid"}, "n": 60, "p": 40},
        "signal": {"class": {"fixed_amplitude": 6.0}, "k": 4},
        "method": {"type": "slope", "lambda": "bh", "q": 0.1},
        "replications": 12,
        "master_seed": 5
    }"#;
    fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let csv = path(dir.path(), &format!("reps{threads}.csv"));
        let (code, summary, err) = call(&[
            "--threads", threads, "simulate", "--config", &path(dir.path(), "cfg.json"), "--out", &csv,
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        assert!(summary.contains("\"fdr\""));
        outputs.push((fs::read(csv).unwrap(), summary));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(String::from_utf8(outputs[0].0.clone()).unwrap().starts_with("rep,V,R,FDP,TPP,MSE"));
}

#[test]
fn predict_emits_grid() {
    let (code, out, _) = call(&["predict", "--epsilons", "0.1,0.2", "--deltas", "1"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "epsilon,delta,regime,alpha,gamma,q_star,power");
    assert_eq!(lines.len(), 3);
}

#[test]
fn weights_on_a_drawn_design() {
    let (code, out, err) = call(&[
        "weights", "--n", "40", "--p", "80", "--ks", "1,5", "--seed", "3", "--initial-samples", "32",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("k,w_hat,samples"));
    assert_eq!(out.lines().count(), 3);
}
