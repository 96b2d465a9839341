use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use navform::sim::read_trajectory_csv;
use navform::{run, Scenario, SimOptions};

fn navform(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_navform"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/reference_fig1.toml")
}

fn write_scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const PAIR: &str = r#"
[params]
R_s = 20.0
delta_1 = 4.0
delta_2 = 2.0
k = 1.0
Gamma = 1.0

[integration]
dt = 0.01
t_final = 1.0
seed = 3

[[agents]]
id = 1
q = [0.0, 0.0]

[[agents]]
id = 2
q = [AX, AY]

[[formation_edges]]
pair = [1, 2]
c = [-6.0, 0.0]
"#;

#[test]
fn reference_run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ref");
    let r = navform(&[
        "run",
        "--scenario",
        reference().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--decimate",
        "50",
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["trajectory.csv", "summary.toml", "trajectories.svg", "distances.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,agent,qx,qy,ux,uy,in_Vf\n"));
    let summary = fs::read_to_string(out.join("summary.toml")).unwrap();
    assert!(summary.contains("all_passed = true"));
}

#[test]
fn no_plots_skips_svg() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(dir.path(), "pair.toml", &PAIR.replace("AX", "8.0").replace("AY", "1.0"));
    let out = dir.path().join("o");
    let r = navform(&["run", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap(), "--no-plots"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("trajectory.csv").is_file());
    assert!(!out.join("trajectories.svg").exists());
}

#[test]
fn colinear_scenario_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let text = PAIR.replace("AX", "8.0").replace("AY", "0.0");
    let s = write_scenario(dir.path(), "line.toml", &text);
    let v = navform(&["validate", "--scenario", s.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&v.stderr).contains("violation"));
    let out = dir.path().join("o");
    let r = navform(&["run", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn unknown_key_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("speed = 3\n{}", PAIR.replace("AX", "8.0").replace("AY", "1.0"));
    let s = write_scenario(dir.path(), "bad.toml", &text);
    let r = navform(&["validate", "--scenario", s.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn clearance_breach_aborts_with_monitor_status() {
    let dir = tempfile::tempdir().unwrap();
    // the agents start 3 apart; a clearance floor of 3.5 is breached at once
    let text = format!(
        "{}\n[monitors]\nepsilon_col = 3.5\n",
        PAIR.replace("AX", "3.0").replace("AY", "0.5")
    );
    let s = write_scenario(dir.path(), "close.toml", &text);
    let out = dir.path().join("o");
    let r = navform(&[
        "run",
        "--scenario",
        s.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--on-violation",
        "abort",
    ]);
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stdout).contains("aborted"));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let random = format!(
        "{}\n[failures]\nmode = \"random\"\np_fail = 0.4\ntau = 0.05\nT = 0.5\n",
        PAIR.replace("AX", "9.0").replace("AY", "2.0")
    );
    let s = write_scenario(dir.path(), "random.toml", &random);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let r = navform(&["run", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "11"]);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
        outputs.push(out);
    }
    for f in ["trajectory.csv", "summary.toml", "trajectories.svg", "distances.svg"] {
        assert_eq!(
            fs::read(outputs[0].join(f)).unwrap(),
            fs::read(outputs[1].join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn csv_round_trips_to_twelve_digits() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(dir.path(), "pair.toml", &PAIR.replace("AX", "8.0").replace("AY", "1.0"));
    let out = dir.path().join("o");
    let r = navform(&["run", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap(), "--decimate", "7"]);
    assert_eq!(r.status.code(), Some(0));
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let rows = read_trajectory_csv(&text).unwrap();
    // steps 0, 7, ..., 98 of 0..=100; the tail is dropped
    assert_eq!(rows.len(), 2 * 15);

    let scenario = Scenario::load(&s).unwrap();
    let exact = run(&scenario, SimOptions::default()).unwrap().log;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-11 * b.abs().max(1e-300);
    for row in &rows {
        let k = (row.t / exact.dt).round() as usize;
        assert_eq!(k % 7, 0);
        assert!(close(row.t, exact.times[k]));
        let i = row.agent - 1;
        let (q, u) = (exact.positions[k][i], exact.controls[k][i]);
        assert!(close(row.q.x, q.x) && close(row.q.y, q.y), "{row:?}");
        assert!(close(row.u.x, u.x) && close(row.u.y, u.y), "{row:?}");
        assert_eq!(row.in_vf, exact.active[k].in_vf(i));
    }
}

#[test]
fn verify_is_deterministic_and_reports_counterexamples() {
    let a = navform(&["verify", "gradients", "--seed", "4", "--trials", "50"]);
    let b = navform(&["verify", "gradients", "--seed", "4", "--trials", "50"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);

    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("cx.toml");
    let r = navform(&["verify", "bounds", "--seed", "42", "--trials", "50", "--out", dump.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    let text = fs::read_to_string(dump).unwrap();
    assert!(text.starts_with("# bounds / grad_gamma_lower_bound"));
}

#[test]
fn empty_sweep_prints_header_only() {
    let r = navform(&["sweep", "--scenario", reference().to_str().unwrap(), "--param", "k", "--values"]);
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&r.stdout).lines().count(), 1);
}

#[test]
fn sweep_rows_follow_input_order() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(dir.path(), "pair.toml", &PAIR.replace("AX", "8.0").replace("AY", "1.0"));
    let csv = dir.path().join("sweep.csv");
    let r = navform(&[
        "sweep",
        "--scenario",
        s.to_str().unwrap(),
        "--param",
        "Gamma",
        "--values",
        "4,1,2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let text = fs::read_to_string(csv).unwrap();
    let firsts: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(firsts, ["4", "1", "2"]);
}

#[test]
fn p_fail_sweep_needs_random_failures() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(dir.path(), "pair.toml", &PAIR.replace("AX", "8.0").replace("AY", "1.0"));
    let r = navform(&["sweep", "--scenario", s.to_str().unwrap(), "--param", "p_fail", "--values", "0.1"]);
    assert_eq!(r.status.code(), Some(1));
}
