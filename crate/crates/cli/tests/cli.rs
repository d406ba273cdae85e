use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rcfcs::sweep::SweepSpec;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rcfcs"));
    c.env("RCFCS_THREADS", "2");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("rcfcs-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn specs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("specs")
}

const SMALL_SWEEP: &str = r#"
name = "small"
axis = "lambda_coupling"
grid = { values = [0.01, 0.02, 0.03] }
truncation = 8

[base]
omega_rabi = 0.005
lambda_coupling = 0.03
alpha = 0.04
n_bath = 0.01

[outputs]
spectrum_k = 2
nonclassicality = true
correlation = { points = 50, t_max_gamma = 20.0 }
"#;

#[test]
fn steady_reports_diagnostics() {
    let v = json(&run(&["steady", "--truncation", "8", "--delta-q", "-0.001"]));
    assert_eq!(v["n_max"], 8);
    assert_eq!(v["config"]["params"]["delta_q"], -0.001);
    assert!(v["residual_norm"].as_f64().unwrap() < 1e-10);
    let pe = v["qubit_excited_population"].as_f64().unwrap();
    assert!(pe > 0.0 && pe < 0.5);
}

#[test]
fn cumulants_respect_basic_bounds() {
    let v = json(&run(&["cumulants", "--truncation", "8"]));
    let c = &v["cumulants"];
    let j = c["current_j"].as_f64().unwrap();
    let k = c["activity_k"].as_f64().unwrap();
    assert!(k >= j.abs() && c["noise_d"].as_f64().unwrap() > 0.0);
    assert_eq!(c["noise_method"], "drazin");
}

#[test]
fn flags_override_config_file() {
    let cfg = specs().join("point.toml");
    let v = json(&run(&[
        "steady",
        "-c",
        cfg.to_str().unwrap(),
        "--lambda",
        "0.02",
        "--truncation",
        "6",
    ]));
    assert_eq!(v["config"]["params"]["lambda_coupling"], 0.02);
    assert_eq!(v["config"]["params"]["omega_rabi"], 0.005);
    assert_eq!(v["n_max"], 6);
}

#[test]
fn sweep_is_byte_identical_on_rerun() {
    let dir = scratch("rerun");
    let spec = dir.join("small.toml");
    std::fs::write(&spec, SMALL_SWEEP).unwrap();
    let mut tables = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.join(sub);
        let v = json(&run(&["sweep", spec.to_str().unwrap(), "-o", out.to_str().unwrap()]));
        assert_eq!(v["rows"], 3);
        assert_eq!(v["traces"], 3);
        tables.push(std::fs::read(out.join("small.csv")).unwrap());
        let trace = std::fs::read_to_string(out.join("small_corr/point_0001.csv")).unwrap();
        assert!(trace.starts_with("tau,c\n"));
        let side: Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("small.json")).unwrap()).unwrap();
        assert_eq!(side["version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(side["config"]["truncation"], 8);
    }
    assert_eq!(tables[0], tables[1]);
    let text = String::from_utf8(tables.remove(0)).unwrap();
    let header = text.lines().next().unwrap();
    for col in ["current_j", "re_theta2", "g2_zero", "corr_integral", "error"] {
        assert!(header.split(',').any(|h| h == col), "missing {col}");
    }
    assert!(!text.contains("NaN"));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn failing_point_is_recorded_and_exit_is_nonzero() {
    let dir = scratch("fail");
    let spec = dir.join("bad.toml");
    std::fs::write(
        &spec,
        SMALL_SWEEP
            .replace("axis = \"lambda_coupling\"", "axis = \"n_bath\"")
            .replace("[0.01, 0.02, 0.03]", "[-0.5, 0.01, 0.02]"),
    )
    .unwrap();
    let out = run(&["sweep", spec.to_str().unwrap(), "-o", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = std::fs::read_to_string(dir.join("small.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].contains("n_bath"));
    assert!(rows[2].ends_with(','));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn single_point_sweep_matches_cumulants_command() {
    let dir = scratch("single");
    let spec = dir.join("one.toml");
    std::fs::write(
        &spec,
        SMALL_SWEEP
            .replace("name = \"small\"", "name = \"one\"")
            .replace("[0.01, 0.02, 0.03]", "[0.02]"),
    )
    .unwrap();
    json(&run(&["sweep", spec.to_str().unwrap(), "-o", dir.to_str().unwrap()]));
    let text = std::fs::read_to_string(dir.join("one.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |n: &str| row[header.iter().position(|h| *h == n).unwrap()].parse::<f64>().unwrap();
    let v = json(&run(&["cumulants", "--truncation", "8", "--lambda", "0.02"]));
    assert_eq!(col("current_j"), v["cumulants"]["current_j"].as_f64().unwrap());
    assert_eq!(col("noise_d"), v["cumulants"]["noise_d"].as_f64().unwrap());
    assert_eq!(col("c0"), v["c0"].as_f64().unwrap());
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn verify_passes_at_default_point() {
    let v = json(&run(&["verify", "--truncation", "8"]));
    assert_eq!(v["passed"], true);
    assert!(v["certificate"]["max_diff"].as_f64().unwrap() < 1e-9);
}

#[test]
fn density_and_spectrum_outputs() {
    let dir = scratch("density");
    let spec = specs().join("fig2_density.toml");
    json(&run(&["density", spec.to_str().unwrap(), "-o", dir.to_str().unwrap()]));
    let text = std::fs::read_to_string(dir.join("fig2_density.csv")).unwrap();
    assert_eq!(text.lines().count(), 602);
    let v = json(&run(&["spectrum", "--truncation", "6", "-k", "4"]));
    assert_eq!(v["theta"].as_array().unwrap().len(), 5);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn nonclassical_and_weak_model() {
    let v = json(&run(&["nonclassical", "--truncation", "8"]));
    assert!(v["report"]["delta_g"].as_f64().unwrap() >= 0.0);
    let weak = run(&["nonclassical", "--model", "weak"]);
    assert_eq!(weak.status.code(), Some(1));
    let v = json(&run(&["cumulants", "--model", "weak"]));
    assert_eq!(v["n_max"], Value::Null);
}

#[test]
fn trajectories_write_event_lists() {
    let dir = scratch("traj");
    let ev = dir.join("events.csv");
    let v = json(&run(&[
        "trajectories",
        "--truncation",
        "8",
        "--n",
        "100",
        "--t-window-gamma",
        "50",
        "--t-burn-gamma",
        "10",
        "--seed",
        "7",
        "--events",
        ev.to_str().unwrap(),
    ]));
    assert_eq!(v["estimate"]["n_traj"], 100);
    let text = std::fs::read_to_string(&ev).unwrap();
    assert!(text.starts_with("trajectory,time,channel\n"));
    assert!(text.lines().count() > 1);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn bad_inputs_fail_cleanly() {
    let out = run(&["steady", "--n-bath", "-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_bath"));
    let out = run(&["sweep", "/nonexistent/spec.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["steady", "--truncation", "zero"]);
    assert!(!out.status.success());
}

#[test]
fn shipped_sweep_specs_parse() {
    let mut n = 0;
    for entry in std::fs::read_dir(specs()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if !name.starts_with("fig") || name.contains("density") {
            continue;
        }
        let spec: SweepSpec = toml::from_str(&std::fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        spec.validate().unwrap();
        n += 1;
    }
    assert_eq!(n, 5);
}
