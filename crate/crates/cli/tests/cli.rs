use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vocsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vocsim"))
        .args(args)
        .env_remove("VOC_TRACE_DECIMATION_S")
        .output()
        .expect("failed to start vocsim")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
        .to_string_lossy()
        .into_owned()
}

fn stdout_toml(out: &Output) -> toml::Table {
    String::from_utf8_lossy(&out.stdout).parse().expect("report is not TOML")
}

/// Copy of a shipped scenario with `duration_s` replaced.
fn shortened(dir: &Path, name: &str, duration: f64) -> PathBuf {
    let text = std::fs::read_to_string(scenario(name)).unwrap();
    let mut doc: toml::Table = text.parse().unwrap();
    doc.insert("duration_s".into(), toml::Value::Float(duration));
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, toml::to_string(&doc).unwrap()).unwrap();
    path
}

#[test]
fn design_prints_reference_parameters() {
    let out = vocsim(&["design", "--scenario", &scenario("rise_time")]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_toml(&out);
    let params = &report["inverter"][0]["params"];
    assert_eq!(params["k_v"].as_float(), Some(126.0));
    assert!((params["k_i"].as_float().unwrap() - 0.15225).abs() < 1e-4);
    assert!((params["C_farad"].as_float().unwrap() - 0.203).abs() < 1e-3);
}

#[test]
fn empty_capacitance_window_exits_with_two() {
    let out = vocsim(&["design", "--scenario", &scenario("comparison")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_toml(&out)["inverter"][0]["feasible"].as_bool(), Some(false));
}

#[test]
fn design_flags_override_the_document() {
    let out = vocsim(&["design", "--mode", "disc", "--c-rule", "min"]);
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_toml(&out);
    assert_eq!(r["inverter"][0]["mode"].as_str(), Some("disc"));
    assert_eq!(r["inverter"][0]["c_rule"].as_str(), Some("min"));
}

#[test]
fn check_setpoint_reports_margin() {
    let out = vocsim(&["check-setpoint", "--p", "500", "--q", "83"]);
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_toml(&out);
    assert_eq!(r["achievable"].as_bool(), Some(true));
    assert!(r["margin"].as_float().unwrap() > 0.0);

    let out = vocsim(&["check-setpoint", "--p", "2000", "--q", "83"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_toml(&out)["achievable"].as_bool(), Some(false));
}

#[test]
fn zero_duration_gives_header_only_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = shortened(dir.path(), "rise_time", 0.0);
    let csv = dir.path().join("trace.csv");
    let out = vocsim(&["simulate", "--scenario", path.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("t_s,inv1_V_rms_V,inv1_theta_rad,inv1_freq_hz,inv1_P_W,inv1_Q_var,inv1_kv,inv1_ki,load_P_W,load_Q_var,margin"));
}

#[test]
fn simulate_is_deterministic_and_honours_decimation() {
    let dir = tempfile::tempdir().unwrap();
    let path = shortened(dir.path(), "droop_ideal", 0.2);
    let run = |out: &Path, decimation: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_vocsim"));
        cmd.args(["simulate", "--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        match decimation {
            Some(d) => cmd.env("VOC_TRACE_DECIMATION_S", d),
            None => cmd.env_remove("VOC_TRACE_DECIMATION_S"),
        };
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(out).unwrap()
    };
    let a = run(&dir.path().join("a.csv"), None);
    let b = run(&dir.path().join("b.csv"), None);
    assert_eq!(a, b);
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 202);
    let c = run(&dir.path().join("c.csv"), Some("0.01"));
    assert_eq!(String::from_utf8_lossy(&c).lines().count(), 22);
}

#[test]
fn model_flag_switches_integration() {
    let dir = tempfile::tempdir().unwrap();
    let path = shortened(dir.path(), "droop_ideal", 0.1);
    let csv = dir.path().join("t.csv");
    let out = vocsim(&[
        "simulate", "--scenario", path.to_str().unwrap(), "--model", "actual", "--dt", "1e-5",
        "--out", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = stdout_toml(&out);
    assert_eq!(r["model"].as_str(), Some("actual"));
    assert_eq!(r["steps"].as_integer(), Some(10_000));
}

#[test]
fn compare_writes_aligned_traces() {
    let dir = tempfile::tempdir().unwrap();
    let path = shortened(dir.path(), "comparison", 4.5);
    let base = dir.path().join("cmp.csv");
    let out = vocsim(&["compare", "--scenario", path.to_str().unwrap(), "--out", base.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let times = |suffix: &str| -> Vec<String> {
        std::fs::read_to_string(dir.path().join(format!("cmp_{suffix}.csv")))
            .unwrap()
            .lines()
            .map(|l| l.split(',').next().unwrap().to_string())
            .collect()
    };
    let actual = times("actual");
    assert_eq!(actual.len(), 4502);
    assert_eq!(actual, times("averaged"));
    assert_eq!(actual, times("legacy"));
    assert!(stdout_toml(&out).contains_key("deviation"));
}

#[test]
fn dispatch_reports_every_setpoint() {
    let out = vocsim(&["dispatch", "--out", "/dev/null"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = stdout_toml(&out);
    let tracking = r["tracking"].as_array().unwrap();
    assert_eq!(tracking.len(), 5);
    for t in tracking {
        let err = (t["P_W"].as_float().unwrap() - t["P_star_W"].as_float().unwrap()).abs();
        assert!(err <= 0.01 * t["P_star_W"].as_float().unwrap());
    }
}

#[test]
fn droop_writes_csv() {
    let out = vocsim(&["droop", "--axis", "Q", "--from", "0", "--to", "750", "--points", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "P_W,Q_var,V_eq_V,omega_eq_rad_s,exists");
    assert_eq!(lines.len(), 5);
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(scenario("rise_time")).unwrap().replace("duration_s", "duration");
    std::fs::write(&path, text).unwrap();
    let out = vocsim(&["simulate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("duration"), "{err}");
    assert!(err.contains("line"), "{err}");
}
