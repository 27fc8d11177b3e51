use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fraclop(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraclop")).args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_1_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["solve", "--n", "-5", "--out", "x"][..],
        &["solve", "--n", "31", "--alpha", "1.5", "--out", "x"],
        &["solve", "--dim", "4", "--out", "x"],
        &["solve", "--no-such-flag", "--out", "x"],
        &["solve", "--n", "15", "--n", "31", "--out", "x"],
        &["solve", "--n", "15", "--design", "missing.canon", "--out", "x"],
        &["solve", "--n", "15", "--coeffs", "a1", "--out", "x"],
        &["solve", "--n", "15", "--box-interval", "0.8,0.2", "--out", "x"],
        &["sweep", "--n", "15", "--n", "-1", "--out", "x"],
        &["eig", "--n", "1"],
    ] {
        let o = fraclop(args, dir.path());
        assert_eq!(code(&o), 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn help_and_version_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fraclop(&["--help"], dir.path())), 0);
    assert_eq!(code(&fraclop(&["solve", "--help"], dir.path())), 0);
    let v = fraclop(&["--version"], dir.path());
    assert_eq!(code(&v), 0);
    assert!(stdout(&v).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn solve_writes_outputs_and_rerun_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let o = fraclop(
        &["solve", "--dim", "2", "--n", "31", "--alpha", "0.5", "--design", "h", "--deterministic", "--out", "a"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    assert!(line.contains("converged") && line.contains("iterations") && line.contains("max rank"), "{line}");
    let a = dir.path().join("a");
    let history = fs::read_to_string(a.join("history.csv")).unwrap();
    assert!(history.starts_with("iter,abs_residual,rel_residual,rank_X"));
    let meta = fs::read_to_string(a.join("meta.txt")).unwrap();
    for key in ["alpha=0.5", "design=h", "precond=direct", "q=", "iterations=", "forward_rank="] {
        assert!(meta.contains(key), "meta.txt lacks {key}");
    }
    let rows = history.lines().count() - 1;
    assert!(meta.contains(&format!("iterations={rows}")));

    let o = fraclop(&["solve", "--rerun", "a/meta.txt", "--out", "b"], dir.path());
    assert_eq!(code(&o), 0);
    for f in ["control.canon", "state.canon", "history.csv", "meta.txt"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
        assert!(x == y, "{f} differs on rerun");
    }
}

#[test]
fn non_convergence_exits_2_but_keeps_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = fraclop(&["solve", "--n", "15", "--max-iter", "1", "--stop-tol", "1e-14", "--out", "a"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("max_iterations"));
    assert!(dir.path().join("a/control.canon").exists());
}

#[test]
fn sweep_makes_one_directory_per_combination() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fraclop"))
        .args(["sweep", "--n", "15", "--alpha", "1", "--alpha", "0.1", "--gamma", "1", "0.01", "--out", "s"])
        .env("FRACLOP_THREADS", "2")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = dir.path().join("s");
    for name in ["n15_alpha1_gamma1", "n15_alpha1_gamma0.01", "n15_alpha0.1_gamma1", "n15_alpha0.1_gamma0.01"] {
        assert!(s.join(name).join("control.canon").exists(), "{name}");
    }
    let csv = fs::read_to_string(s.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.ends_with("converged")));
}

#[test]
fn slice_and_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fraclop(&["solve", "--dim", "3", "--n", "9", "--design", "h", "--out", "a"], dir.path())), 0);
    let s = fraclop(&["slice", "--file", "a/control.canon", "--axis", "z", "--index", "4"], dir.path());
    assert_eq!(code(&s), 0);
    let rows: Vec<Vec<f64>> = stdout(&s).lines().map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!((rows.len(), rows[0].len()), (9, 9));
    let e = fraclop(&["eval", "--file", "a/control.canon", "--i", "2", "--j", "3", "--k", "4"], dir.path());
    assert_eq!(code(&e), 0);
    let v: f64 = stdout(&e).trim().parse().unwrap();
    assert_eq!(v.to_bits(), rows[2][3].to_bits());
    assert_eq!(code(&fraclop(&["slice", "--file", "a/control.canon"], dir.path())), 1);
    assert_eq!(code(&fraclop(&["eval", "--file", "a/control.canon", "--i", "2"], dir.path())), 1);
}

#[test]
fn eig_op_precond_validate() {
    let dir = tempfile::tempdir().unwrap();
    let e = fraclop(&["eig", "--coef", "unit", "--n", "7"], dir.path());
    assert_eq!(code(&e), 0);
    let text = stdout(&e);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,eigenvalue");
    // unit coefficient: h^-2 (2 - 2 cos(pi k h)), h = 1/8
    let first: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    let exact = 64.0 * (2.0 - 2.0 * (std::f64::consts::PI / 8.0).cos());
    assert!((first - exact).abs() < 1e-10 * exact);

    let o = fraclop(
        &["op", "--n", "31", "--func", "f3", "--alpha", "0.5", "--validate", "40", "--out", "f3.canon"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("max relative error"));
    assert!(dir.path().join("f3.canon").exists());

    let p = fraclop(&["precond", "--n", "15", "--mode", "aniso", "--report"], dir.path());
    assert_eq!(code(&p), 0);
    let out = stdout(&p);
    assert!(out.contains("quantity,value") && out.contains("\nq,") && out.contains("\ncondition,"));

    let v = fraclop(&["validate", "--trials", "3", "--seed", "5"], dir.path());
    assert_eq!(code(&v), 0, "{}", stdout(&v));
    assert!(stdout(&v).contains("8 of 8 checks passed"));
}

#[test]
fn bench_writes_scaling_and_storage_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = fraclop(&["bench", "--n", "15", "--n", "31", "--max-iter", "2", "--out", "b"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bench = fs::read_to_string(dir.path().join("b/bench.csv")).unwrap();
    assert!(bench.starts_with("n,seconds_per_iter,iters,max_rank\n"));
    assert_eq!(bench.lines().count(), 3);
    let storage = fs::read_to_string(dir.path().join("b/storage.csv")).unwrap();
    let rows: Vec<Vec<&str>> = storage.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let dense: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(dense, vec![225.0 * 225.0, 961.0 * 961.0]);
}
