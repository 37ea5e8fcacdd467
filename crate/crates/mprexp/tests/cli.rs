//! End-to-end runs of the `mprexp` binary.

use std::path::Path;
use std::process::{Command, Output};

use mprexp::config::RunConfig;

const KO: &str = "\
epsilons = -0.05

[model]
variant = kim-omberg
kappa = 0.0404
theta = 0.117
gamma = 0.04395
lambda0 = 0.5
horizon = 10

[utility]
p = -1

[sim]
n_paths = 4000
dt = 0.05
seed = 3
strategy = corrected
";

fn run(args: &[&str], workers: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mprexp")).args(args).env("MPREXP_WORKERS", workers).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn table1_text_and_csv_agree_at_three_decimals() {
    let text = run(&["table1"], "1");
    let csv = run(&["table1", "--format", "csv"], "1");
    assert!(text.status.success() && csv.status.success());
    let text = stdout(&text);
    let csv = stdout(&csv);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("eps,lambda0,ce_order0,ce_order1,ce_order2,ce_exact"));
    for (row, line) in lines.zip(text.lines().skip(3)) {
        let nums: Vec<String> = row.split(',').take(6).map(|s| format!("{:.3}", s.parse::<f64>().unwrap())).collect();
        let shown: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(nums, shown);
    }
    assert!(text.contains("1.054      1.081     1.084"), "{text}");
}

#[test]
fn simulate_zero_strategy_gives_unit_certainty_equivalent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.ini", &KO.replace("strategy = corrected", "strategy = zero"));
    let o = run(&["simulate", "--config", &cfg, "--format", "csv"], "2");
    assert!(o.status.success());
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..5], &["-0.05", "1.0", "1.0", "1.0", "0.0"]);
}

#[test]
fn simulate_corrected_strategy_covers_exact_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ko.ini", KO);
    let o = run(&["simulate", "--config", &cfg, "--paths", "100000", "--dt", "0.005", "--format", "csv"], "2");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let v: Vec<f64> = out.lines().nth(1).unwrap().split(',').take(6).map(|s| s.parse().unwrap()).collect();
    let (lo, hi, exact) = (v[2], v[3], v[5]);
    assert!((exact - 1.846).abs() < 5e-4);
    assert!(lo - 0.01 <= exact && exact <= hi + 0.01, "{out}");
}

#[test]
fn repeated_runs_give_identical_csv_at_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ko.ini", KO);
    let out = dir.path().join("out.csv");
    let args = ["simulate", "--config", &cfg, "--eps", "-0.01,-0.1", "--out", out.to_str().unwrap()];
    let a = run(&args, "1");
    let first = std::fs::read(&out).unwrap();
    let b = run(&args, "1");
    let second = std::fs::read(&out).unwrap();
    let c = run(&args, "3");
    let third = std::fs::read(&out).unwrap();
    assert!(a.status.success() && b.status.success() && c.status.success());
    assert_eq!(first, second);
    assert_eq!(first, third);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn dumped_config_reloads_to_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ko.ini", KO);
    let o = run(&["simulate", "--config", &cfg, "--seed", "17", "--paths", "500", "--dump-config"], "1");
    assert!(o.status.success());
    let dumped = stdout(&o);
    let reloaded = RunConfig::parse(&dumped).unwrap();
    assert_eq!(reloaded.seed, 17);
    assert_eq!(reloaded.n_paths, 500);
    let again = write_config(dir.path(), "dumped.ini", &dumped);
    let a = run(&["simulate", "--config", &cfg, "--seed", "17", "--paths", "500", "--format", "csv"], "1");
    let b = run(&["simulate", "--config", &again, "--format", "csv"], "1");
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn expand_reports_black_scholes_identities() {
    let dir = tempfile::tempdir().unwrap();
    let text = "epsilons = 0.1\n[model]\nvariant = black-scholes\nlambda = 0.1\nlambda_prime = 1\nhorizon = 10\n";
    let cfg = write_config(dir.path(), "bs.ini", text);
    let o = run(&["expand", "--config", &cfg, "--format", "csv"], "1");
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let d0: f64 = row[header.iter().position(|h| *h == "delta0").unwrap()].parse().unwrap();
    // p Delta0 = q lambda lambda' T = -0.5
    assert!((-d0 + 0.5).abs() < 1e-12, "{d0}");
    let zero = write_config(dir.path(), "bs0.ini", &text.replace("lambda = 0.1", "lambda = 0"));
    let o = run(&["expand", "--config", &zero], "1");
    assert!(stdout(&o).contains("Delta0 = 0.000000"));
}

#[test]
fn expand_checks_finite_differences() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ko.ini", KO);
    let o = run(&["expand", "--config", &cfg, "--check-fd"], "1");
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("Finite-difference check") && out.contains("5.000e-4"), "{out}");
}

#[test]
fn exit_codes_classify_failures() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.ini", "[sim]\nn_path = 3\n");
    assert_eq!(run(&["table1", "--config", &bad], "1").status.code(), Some(2));
    assert_eq!(run(&["table2", "--dt", "0.3"], "1").status.code(), Some(2));
    assert_eq!(run(&["table1", "--format", "xml"], "1").status.code(), Some(2));
    assert_eq!(run(&["simulate"], "1").status.code(), Some(2));
    let ea = write_config(
        dir.path(),
        "ea.ini",
        "epsilons = 0.01\n[model]\nvariant = extended-affine\nkappa = 5\ntheta = 0.0169\nbeta = -0.1\ngamma = 0.1744\nf0 = 0.01\nhorizon = 10\n",
    );
    assert_eq!(run(&["expand", "--config", &ea, "--check-fd"], "1").status.code(), Some(2));
    assert_eq!(run(&["table1", "--config", &ea], "1").status.code(), Some(2));
    // a constant fraction this large makes the utility integral blow up
    let blow = write_config(
        dir.path(),
        "blow.ini",
        "epsilons = 0\n[model]\nvariant = black-scholes\nlambda = 0.1\nlambda_prime = 1\nhorizon = 1\n[utility]\np = -1\n[sim]\nn_paths = 1000\ndt = 0.5\nstrategy = constant\nconstant = 400\n",
    );
    let o = run(&["simulate", "--config", &blow], "1");
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
