use std::fs;
use std::path::Path;
use std::process::Command;

use dictlasso::bundle::ProblemBundle;
use dictlasso::matrix_io::{read_vector, write_matrix};
use dictlasso::{DictionaryProblem, Matrix, Vector};
use dictlasso_cli::{run_cli, EXIT_NOT_CONVERGED, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, SOLVE_RESULT, THETA_HAT};
use serde_json::Value;

fn run(args: &[&str]) -> i32 {
    run_cli(std::iter::once("dictlasso").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SPEC: &str = r#"{
  "dictionary": {"kind": "conditioned", "p": 8, "kappa": 1.5, "seed": 3},
  "n": 20,
  "sparsity": 1,
  "noise_sigma": 0.01,
  "seed": 11
}"#;

fn generated_bundle(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.json");
    fs::write(&spec, SPEC).unwrap();
    let bundle = dir.join("bundle");
    assert_eq!(run(&["generate", p(&spec), "--out", p(&bundle)]), EXIT_OK);
    bundle
}

#[test]
fn identity_example_soft_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = DictionaryProblem::new(
        Matrix::identity(2, 2),
        Vector::from_vec(vec![2.0, 0.0]),
        Matrix::identity(2, 2),
        1.0,
    )
    .unwrap();
    ProblemBundle::from_problem(problem).write(tmp.path()).unwrap();
    assert_eq!(run(&["solve", p(tmp.path())]), EXIT_OK);
    let theta = read_vector(&tmp.path().join(THETA_HAT)).unwrap();
    assert!((theta[0] - 1.0).abs() < 1e-8 && theta[1].abs() < 1e-8, "{theta}");
    let report = read_json(&tmp.path().join(SOLVE_RESULT));
    assert_eq!(report["result"]["converged"], Value::Bool(true));
    assert!(report["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn generate_and_solve_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = generated_bundle(tmp.path());
    let again = tmp.path().join("again");
    assert_eq!(run(&["generate", p(&tmp.path().join("spec.json")), "--out", p(&again)]), EXIT_OK);
    for f in ["manifest.json", "phi.csv", "c.csv", "d.csv", "theta_star.csv", "epsilon.csv"] {
        assert_eq!(fs::read(bundle.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["solve", p(&bundle), "--out", p(&a)]), EXIT_OK);
    assert_eq!(run(&["solve", p(&bundle), "--out", p(&b)]), EXIT_OK);
    for f in [SOLVE_RESULT, THETA_HAT] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report = read_json(&a.join(SOLVE_RESULT));
    assert_eq!(report["seed"], Value::from(11u64));
}

#[test]
fn seed_override_changes_instance() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = generated_bundle(tmp.path());
    let other = tmp.path().join("other");
    assert_eq!(run(&["generate", p(&tmp.path().join("spec.json")), "--out", p(&other), "--seed", "12"]), EXIT_OK);
    assert_ne!(fs::read(bundle.join("phi.csv")).unwrap(), fs::read(other.join("phi.csv")).unwrap());
}

#[test]
fn simplified_path_matches_full_path() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = generated_bundle(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["solve", p(&bundle), "--out", p(&a)]), EXIT_OK);
    assert_eq!(run(&["solve", p(&bundle), "--out", p(&b), "--path", "simplified"]), EXIT_OK);
    let x = read_vector(&a.join(THETA_HAT)).unwrap();
    let y = read_vector(&b.join(THETA_HAT)).unwrap();
    assert!((&x - &y).norm() < 1e-6 * (1.0 + x.norm()));
}

#[test]
fn bounds_reports_unmet_conditions_with_success_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = generated_bundle(tmp.path());
    let out = tmp.path().join("bounds.json");
    assert_eq!(run(&["bounds", p(&bundle), "--l", "1", "--out", p(&out)]), EXIT_OK);
    let report = read_json(&out);
    assert_eq!(report["conditions_met"], Value::Bool(false));
    assert_eq!(report["s"], Value::from(1u64));
    assert!(!report["violations"].as_array().unwrap().is_empty());

    let searched = tmp.path().join("searched.json");
    assert_eq!(run(&["bounds", p(&bundle), "--s", "1", "--out", p(&searched)]), EXIT_OK);
    let report = read_json(&searched);
    assert_eq!(report["conditions_met"], Value::Bool(true));
    assert_eq!(report["bound_holds"], Value::Bool(true));

    assert_eq!(run(&["bounds", p(&bundle), "--s", "3"]), EXIT_USAGE);
}

#[test]
fn unconverged_solve_exits_three_and_still_writes() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = generated_bundle(tmp.path());
    let out = tmp.path().join("out");
    let code = run(&["solve", p(&bundle), "--out", p(&out), "--max-iters", "2", "--tol", "1e-14", "--no-polish"]);
    assert_eq!(code, EXIT_NOT_CONVERGED);
    assert_eq!(read_json(&out.join(SOLVE_RESULT))["result"]["converged"], Value::Bool(false));
    assert!(out.join(THETA_HAT).exists());
}

#[test]
fn singular_free_part_is_a_numerical_error() {
    // Phi annihilates the constant vector, the null space of the difference operator
    let tmp = tempfile::tempdir().unwrap();
    let phi = Matrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]);
    let d = dictlasso::dictionaries::difference_matrix_1d(3).unwrap();
    let problem = DictionaryProblem::new(phi, Vector::from_vec(vec![1.0, 2.0]), d, 1.0).unwrap();
    ProblemBundle::from_problem(problem).write(tmp.path()).unwrap();
    assert_eq!(run(&["simplify", p(tmp.path())]), EXIT_NUMERICAL);
    assert_eq!(run(&["solve", p(tmp.path()), "--path", "simplified"]), EXIT_NUMERICAL);
}

#[test]
fn simplify_dump_writes_matrices() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = generated_bundle(tmp.path());
    let dump = tmp.path().join("dump");
    assert_eq!(run(&["simplify", p(&bundle), "--dump", p(&dump)]), EXIT_OK);
    let man = read_json(&dump.join("manifest.json"));
    assert_eq!(man["rank_r"], Value::from(8u64));
    for f in man["files"].as_array().unwrap() {
        assert!(dump.join(f.as_str().unwrap()).exists());
    }
}

#[test]
fn rho_of_identity_is_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (psi, y, out) = (tmp.path().join("psi.csv"), tmp.path().join("y.csv"), tmp.path().join("rho.json"));
    write_matrix(&psi, &Matrix::identity(4, 4)).unwrap();
    write_matrix(&y, &Matrix::identity(4, 4)).unwrap();
    assert_eq!(run(&["rho", "--psi", p(&psi), "--y", p(&y), "--l2", "2", "--out", p(&out)]), EXIT_OK);
    let r = read_json(&out);
    assert!((r["rho_plus"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((r["rho_minus"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(run(&["rho", "--psi", p(&psi), "--y", p(&y), "--l2", "2", "--budget", "3"]), EXIT_NUMERICAL);
}

#[test]
fn experiment_and_plot_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("graphs.json");
    fs::write(&cfg, r#"{"sweep": "graph-kappa", "p": 12, "ratio_grid": [2, 5], "trials": 3, "seed": 1}"#).unwrap();
    let results = tmp.path().join("results");
    assert_eq!(run(&["experiment", p(&cfg), "--out", p(&results)]), EXIT_OK);
    let dir = results.join("graphs");
    for f in ["table.csv", "plot.svg", "meta.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert_eq!(read_json(&dir.join("meta.json"))["seed"], Value::from(1u64));
    let svg = tmp.path().join("replot.svg");
    assert_eq!(run(&["plot", p(&dir.join("table.csv")), "--out", p(&svg)]), EXIT_OK);
    assert_eq!(fs::read(&svg).unwrap(), fs::read(dir.join("plot.svg")).unwrap());
}

#[test]
fn schema_errors_exit_one_with_key_path() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_dictlasso");
    let cases = [
        (r#"{"sizes": [[40, 50]], "kappa_grid": [10, 1]}"#, "kappa_grid"),
        (r#"{"sizes": [[40, 50]], "trails": 3}"#, "trails"),
        (r#"{"sizes": [[40, 50]], "solver": {"max_iters": "many"}}"#, "solver.max_iters"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let cfg = tmp.path().join(format!("bad{i}.json"));
        fs::write(&cfg, text).unwrap();
        let out = Command::new(bin).args(["experiment", p(&cfg), "--out", p(tmp.path())]).output().unwrap();
        assert_eq!(out.status.code(), Some(EXIT_USAGE), "{text}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(needle), "{stderr}");
        assert!(stderr.contains("kappa_grid         nondecreasing"), "schema help missing");
    }
    assert!(!tmp.path().join("bad0").exists());
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(run(&["solve"]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["solve", "/nonexistent/bundle"]), EXIT_USAGE);
    assert_eq!(run(&["--help"]), EXIT_OK);
}
