use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &[&str] = &[
    "n_modes=6",
    "horizon=20",
    "n_steps=1000",
    "grid_cells=50",
    "max_iters=5",
    "alpha_schedule=[1.0, 100.0]",
];

fn actopt(args: &[&str], overrides: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_actopt"));
    cmd.args(args);
    for o in overrides {
        cmd.arg("--set").arg(o);
    }
    cmd.output().expect("binary runs")
}

fn with_small<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    SMALL.iter().copied().chain(extra.iter().copied()).collect()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    read(path)
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn zero_iterations_write_a_single_history_row() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let res = actopt(
        &["optimize", "--out", out.to_str().unwrap()],
        &with_small(&["max_iters=0"]),
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let history = rows(&out.join("history.csv"));
    assert_eq!(
        history[0],
        ["iter", "alpha", "beta", "cost", "volume", "n_components"]
    );
    assert_eq!(history.len(), 2);
    assert_eq!(history[1][4], "8.000000000000000e-1");
}

#[test]
fn invalid_interval_fails_before_writing() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let res = actopt(
        &["optimize", "--out", out.to_str().unwrap()],
        &with_small(&["intervals=[[0.9, 0.1]]"]),
    );
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("intervals"));
    assert!(!out.exists());
}

#[test]
fn unknown_key_and_bad_arguments_exit_one() {
    let res = actopt(&["optimize"], &["volume_targett=0.3"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("volume_targett"));
    assert_eq!(actopt(&["frobnicate"], &[]).status.code(), Some(1));
    assert_eq!(actopt(&["--help"], &[]).status.code(), Some(0));
}

#[test]
fn runs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = actopt(&["optimize", "--out", out.to_str().unwrap()], SMALL);
        assert!(res.status.success());
    }
    for name in [
        "history.csv",
        "shape.csv",
        "summary.csv",
        "resolved_config.toml",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let res = actopt(&["optimize", "--out", first.to_str().unwrap()], SMALL);
    assert!(res.status.success());
    let cfg = first.join("resolved_config.toml");
    let res = actopt(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            second.to_str().unwrap(),
        ],
        &[],
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert_eq!(read(&cfg), read(&second.join("resolved_config.toml")));
    assert_eq!(
        read(&first.join("history.csv")),
        read(&second.join("history.csv"))
    );
}

#[test]
fn zero_initial_state_stays_at_rest() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    let res = actopt(
        &["simulate", "--out", out.to_str().unwrap()],
        &with_small(&["initial=zero", "snapshots=5"]),
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let traj = rows(&out.join("trajectory.csv"));
    assert_eq!(traj[0][..3], ["t", "u", "a_1"]);
    assert_eq!(traj[0].len(), 2 + 2 * 6);
    for row in &traj[1..] {
        assert!(row[1..].iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
    }
    let disp = rows(&out.join("displacement.csv"));
    assert_eq!(disp.len(), 6);
    assert_eq!(disp[0].len(), 51);
    let summary = rows(&out.join("simulate_summary.csv"));
    let col = summary[0].iter().position(|h| h == "lqr_cost").unwrap();
    assert_eq!(summary[1][col].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn simulate_reads_an_optimized_shape() {
    let dir = TempDir::new().unwrap();
    let opt = dir.path().join("opt");
    assert!(actopt(&["optimize", "--out", opt.to_str().unwrap()], SMALL)
        .status
        .success());
    let shape = opt.join("shape.csv");
    let sim = dir.path().join("sim");
    let file = format!("shape_file=\"{}\"", shape.display());
    let res = actopt(
        &["simulate", "--out", sim.to_str().unwrap()],
        &with_small(&[&file]),
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let opt_summary = rows(&opt.join("summary.csv"));
    let sim_summary = rows(&sim.join("simulate_summary.csv"));
    let value = |t: &Vec<Vec<String>>, key: &str| {
        let c = t[0].iter().position(|h| h == key).unwrap();
        t[1][c].clone()
    };
    assert_eq!(value(&opt_summary, "cost"), value(&sim_summary, "cost"));
    assert_eq!(value(&opt_summary, "volume"), value(&sim_summary, "volume"));
}

#[test]
fn single_pair_sweep_writes_one_row() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep");
    let res = actopt(
        &["sweep", "--out", out.to_str().unwrap()],
        &with_small(&["sweep_modes=[4]", "sweep_kelvin_voigt=[1e-4]"]),
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let table = rows(&out.join("sweep.csv"));
    assert_eq!(
        table[0],
        ["N", "C_d", "gain_norm", "cost", "volume", "n_components"]
    );
    assert_eq!(table.len(), 2);
    assert_eq!(table[1][0], "4");
}

#[test]
fn check_passes_and_detects_a_flipped_gradient() {
    let dir = TempDir::new().unwrap();
    let small = with_small(&["check_grid_cells=100", "check_samples=5"]);
    let res = actopt(&["check", "--out", dir.path().to_str().unwrap()], &small);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stdout)
    );
    let stdout = String::from_utf8_lossy(&res.stdout).to_string();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4);
    assert_eq!(rows(&dir.path().join("check.csv")).len(), 5);

    let faulty = [small.as_slice(), &["check_fault=flip_gradient_sign"]].concat();
    let res = actopt(&["check"], &faulty);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL gradient_fd"));
}

#[test]
fn numbers_carry_at_least_twelve_significant_digits() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    assert!(actopt(&["optimize", "--out", out.to_str().unwrap()], SMALL)
        .status
        .success());
    for row in &rows(&out.join("history.csv"))[1..] {
        for field in [&row[1], &row[2], &row[3], &row[4]] {
            let mantissa = field.split('e').next().unwrap();
            let digits = mantissa.chars().filter(char::is_ascii_digit).count();
            assert!(digits >= 12, "{field}");
        }
    }
}
