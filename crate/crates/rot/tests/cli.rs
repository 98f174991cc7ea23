//! End-to-end tests of the `rot` binary: artifacts, exit codes, and the
//! analyze round trip.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rot(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rot"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn solve_writes_artifacts_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rot(
        &[
            "solve",
            "--instance",
            "torus-self",
            "--d",
            "1",
            "--m",
            "32",
            "--p",
            "2.0",
            "--eps",
            "1e-2",
            "--out",
            "run",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let duals = fs::read_to_string(tmp.path().join("run/duals.csv")).unwrap();
    assert!(duals.contains("# config_hash = "));
    assert!(duals.contains("marginal,x_1,value"));
    // 32 f rows + 32 g rows
    assert_eq!(duals.lines().filter(|l| l.starts_with("f,")).count(), 32);
    assert_eq!(duals.lines().filter(|l| l.starts_with("g,")).count(), 32);
    let conv = fs::read_to_string(tmp.path().join("run/convergence.csv")).unwrap();
    assert!(conv.contains("epsilon,p,iters,final_residual_rel,primal,dual,gap"));
    let sections = fs::read_to_string(tmp.path().join("run/sections.csv")).unwrap();
    assert!(sections.contains("index,x_1,size,diameter,volume,outer_ratio,inner_ratio,barycenter_1"));
    assert_eq!(sections.lines().filter(|l| !l.starts_with('#')).count(), 33);
}

#[test]
fn analyze_round_trips_duals_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let common = [
        "--instance",
        "torus-self",
        "--d",
        "1",
        "--m",
        "32",
        "--p",
        "2.0",
        "--eps",
        "1e-2",
    ];
    let mut solve_args = vec!["solve"];
    solve_args.extend_from_slice(&common);
    solve_args.extend_from_slice(&["--out", "run"]);
    assert_eq!(rot(&solve_args, tmp.path()).status.code(), Some(0));

    let mut analyze_args = vec!["analyze", "--duals", "run/duals.csv"];
    analyze_args.extend_from_slice(&common);
    analyze_args.extend_from_slice(&["--out", "analysis"]);
    let out = rot(&analyze_args, tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let original = fs::read(tmp.path().join("run/duals.csv")).unwrap();
    let roundtrip = fs::read(tmp.path().join("analysis/duals_roundtrip.csv")).unwrap();
    assert_eq!(original, roundtrip, "duals round trip is not bit-identical");
    assert!(tmp.path().join("analysis/sections.csv").exists());
}

#[test]
fn analyze_rejects_mismatched_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rot(
        &[
            "solve", "--instance", "torus-self", "--d", "1", "--m", "16", "--p", "2.0",
            "--eps", "1e-2", "--out", "run",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    // epsilon differs from the artifact header
    let out = rot(
        &[
            "analyze", "--duals", "run/duals.csv", "--instance", "torus-self", "--d", "1",
            "--m", "16", "--p", "2.0", "--eps", "2e-2", "--out", "analysis",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rot(
        &["solve", "--instance", "nonsense", "--m", "8", "--out", "x"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    // missing required m for torus-self
    let out = rot(&["solve", "--instance", "torus-self"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    // bad flags also count as configuration errors
    let out = rot(&["solve", "--no-such-flag"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("cfg.toml"),
        r#"
[instance]
kind = "torus-cosine"
d = 1
m = 64
amplitude = 0.5

[solver]
p = 2.0
epsilon = 1e-3
max_outer_iters = 1
"#,
    )
    .unwrap();
    let out = rot(&["solve", "--config", "cfg.toml", "--out", "run"], tmp.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_prints_table_and_flags_regime() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rot(
        &["oracle", "--d", "1", "--p", "2.0", "--eps", "1e-3,1e-4", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("C_eps(closed)"));
    let csv = fs::read_to_string(tmp.path().join("o/oracle.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);

    // eps too large: the support would wrap the torus
    let out = rot(&["oracle", "--d", "1", "--p", "2.0", "--eps", "0.05"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweep_passes_and_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rot(
        &[
            "sweep",
            "--instance",
            "torus-self",
            "--d",
            "1",
            "--p",
            "2.0",
            "--eps-max",
            "1e-2",
            "--eps-min",
            "1e-4",
            "--eps-count",
            "4",
            "--sweeps",
            "sparsity,max_xi",
            "--out",
            "sw",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("sw/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["pass"], serde_json::Value::Bool(true));
    let slope = summary["fits"]["sparsity"]["slope"].as_f64().unwrap();
    assert!((slope - 1.0 / 3.0).abs() < 0.05, "slope {slope}");
    assert!(tmp.path().join("sw/sweep_sparsity.csv").exists());
    let svg = fs::read_to_string(tmp.path().join("sw/sweep_sparsity.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(tmp.path().join("sw/sweep_convergence.csv").exists());
}

#[test]
fn sweep_criterion_failure_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("cfg.toml"),
        r#"
[instance]
kind = "torus-self"
d = 1

[solver]
p = 2.0

[sweep]
eps_max = 1e-2
eps_min = 2e-3
eps_count = 3
sweeps = ["strong_convexity"]
strong_convexity_threshold = 2.0
"#,
    )
    .unwrap();
    let out = rot(&["sweep", "--config", "cfg.toml", "--out", "sw"], tmp.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("FAIL"));
}
