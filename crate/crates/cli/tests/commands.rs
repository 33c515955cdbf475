use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impulse-game"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const PAPER: [&str; 4] = ["0.1558984470", "0.3825673799", "0.2359455020", "0.5746537199"];

#[test]
fn solve_table1_exits_zero_with_the_reference_quadruple() {
    let out = run(&["solve", "table1", "--grid-points", "2000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["status"], "verified");
    assert_eq!(report["verification"]["pass"], true);
    let th = &report["thresholds"];
    for (key, want) in ["b11", "b12", "b21", "b22"].iter().zip(PAPER) {
        let got = th[key].as_f64().unwrap();
        assert!((got - want.parse::<f64>().unwrap()).abs() < 1e-6, "{key}: {got}");
    }
    assert_eq!(report["config"]["K1"], 0.5);
}

#[test]
fn solve_with_mc_block() {
    let out = run(&[
        "solve",
        "table1",
        "--grid-points",
        "500",
        "--mc",
        "n=8,dt=1e-3,horizon=5,seed=3",
        "--mc-x0",
        "0.3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let mc = &json(&out)["monte_carlo"];
    assert_eq!(mc["options"]["n_paths"], 8);
    assert_eq!(mc["points"].as_array().unwrap().len(), 1);
}

#[test]
fn verify_paper_values_pass() {
    let mut args = vec!["verify", "table1", "--grid-points", "2000", "--b"];
    args.extend(PAPER);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn verify_off_root_fails_with_named_conditions() {
    let out = run(&["verify", "table1", "--grid-points", "500", "--b", "0.1", "0.4", "0.25", "0.6"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("failed conditions:") && stderr.contains("root"), "{stderr}");
    assert_eq!(json(&out)["pass"], false);
}

#[test]
fn config_errors_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "mu = 0.02\nsigma = 0.0\n").unwrap();
    let out = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));

    let missing = run(&["solve", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(4));
}

#[test]
fn unchecked_non_integrable_config_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("heavy.toml");
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/table1.toml"))
        .unwrap()
        .replace("r2 = 0.10", "r2 = 0.05");
    std::fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap();
    assert_eq!(run(&["solve", p]).status.code(), Some(4));
    let out = run(&["solve", p, "--allow-unchecked"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("integrability"));
}

#[test]
fn simulate_is_reproducible() {
    let args = [
        "simulate", "table1", "--x0", "0.3", "--seed", "7", "--paths", "6", "--horizon", "3", "--dt", "1e-3",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_dump_writes_events() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("events.csv");
    let out = run(&[
        "simulate", "table1", "--x0", "0.9", "--paths", "2", "--horizon", "2", "--dt", "1e-3", "--dump",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dump).unwrap();
    assert!(text.starts_with("time,type,state_pre,state_post\n0,gov_impulse,0.9,"));
}

#[test]
fn values_table_with_baselines() {
    let mut args = vec!["values", "table1", "--points", "40", "--baselines", "--b"];
    args.extend(PAPER);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,v1,v2,dv1,dv2,v1_alone,v2_alone"));
    assert_eq!(lines.count(), 40);
}

#[test]
fn sweep_table_has_fixed_columns() {
    let out = run(&[
        "sweep", "table1", "--param", "K1", "--lo", "0.5", "--hi", "0.6", "--steps", "2", "--grid-points", "500",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("param,b11,b12,b21,b22,firm_size,gov_size,verified,status\n0.5,"));
    let bad = run(&["sweep", "table1", "--param", "gamma", "--lo", "0", "--hi", "1"]);
    assert_eq!(bad.status.code(), Some(4));
}

#[test]
fn baseline_reports_both_players() {
    let out = run(&["baseline", "table1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert!(r["firm"]["trigger"].as_f64().unwrap() < r["firm"]["target"].as_f64().unwrap());
    assert!(r["government"]["target"].as_f64().unwrap() < r["government"]["trigger"].as_f64().unwrap());
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = run(&["solve", "table1", "--grid-points", "500", "-o", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.contains("\"thresholds\""));
}
