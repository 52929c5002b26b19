use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_phasefield"));
    for k in ["PHASEFIELD_NEWTON_TOL", "PHASEFIELD_PICARD_TOL", "PHASEFIELD_CG_TOL"] {
        c.env_remove(k);
    }
    c
}

fn corpus(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(rel)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn equilibrium_simulation_has_a_zero_dissipation_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin()
        .args(["simulate", "--config"])
        .arg(corpus("positive/equilibrium.toml"))
        .arg("--out")
        .arg(dir.path()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ledger = fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    for name in ["grad_mu_sq", "phi_t_sq", "energy_balance_residual", "mean_drift"] {
        assert!(column(&ledger, name).iter().all(|v| *v == 0.0), "{name}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("snapshots/phi_00000.bin").exists());
    assert!(dir.path().join("snapshots/theta_00010.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(bin()
            .args(["simulate", "--seed", "7", "--config"])
            .arg(corpus("positive/local.toml"))
            .arg("--out")
            .arg(d.path()));
        assert!(o.status.success());
    }
    for f in ["summary.json", "ledger.csv", "manifest.json", "config.toml", "snapshots/phi_00020.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin()
        .args(["simulate", "--mode", "local", "--seed", "42", "--config"])
        .arg(corpus("positive/equilibrium.toml"))
        .arg("--out")
        .arg(dir.path()));
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["mode"], "local");
    assert_eq!(m["seed"], 42);
}

#[test]
fn check_operators_emits_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().args(["check-operators", "--out"]).arg(dir.path()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    assert!(r["batteries"].as_array().unwrap().len() >= 8);
}

#[test]
fn plot_renders_log_axes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("gap.csv");
    fs::write(&csv, "rung,value,ratio\n0,1.0e-2,\n1,4.0e-3,4.0e-1\n2,1.5e-3,3.75e-1\n").unwrap();
    let o = run(bin().arg("plot").arg(&csv));
    assert!(o.status.success());
    let svg = fs::read_to_string(dir.path().join("gap.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(">1e-2<") && svg.contains(">1e-3<"));
}

#[test]
fn tabulate_graphs_writes_one_table_per_graph() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().args(["tabulate-graphs", "--points", "11", "--out"]).arg(dir.path()));
    assert!(o.status.success());
    for g in ["log", "indicator", "power", "natural-log"] {
        let s = fs::read_to_string(dir.path().join(format!("{g}.csv"))).unwrap();
        assert!(s.starts_with("r,J_lambda,beta_lambda,beta_hat_lambda\n"));
        assert_eq!(s.lines().count(), 12);
    }
}

#[test]
fn config_problems_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "no_such_key = 1\n").unwrap();
    let o = run(bin().args(["simulate", "--config"]).arg(&bad).arg("--out").arg(dir.path().join("x")));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error: config:"));

    let o = run(bin().args(["simulate", "--config"]).arg(dir.path().join("missing.toml")));
    assert_eq!(o.status.code(), Some(2));

    let o = run(bin()
        .env("PHASEFIELD_NEWTON_TOL", "-1")
        .args(["simulate", "--config"])
        .arg(corpus("positive/equilibrium.toml"))
        .arg("--out")
        .arg(dir.path().join("y")));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("PHASEFIELD_NEWTON_TOL"));
}

#[test]
fn theta_lower_zero_cites_c5() {
    let o = run(bin().args(["simulate", "--config"]).arg(corpus("negative/c5-theta-lower.toml")));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("C5: theta_lower must be positive"));
}

#[test]
fn runtime_failures_exit_with_status_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cap.toml");
    fs::write(&cfg, "final_time = 0.02\ntime_step = 0.002\n[grid]\nextents = [1.0, 1.0]\ncells = [8, 8]\n[tolerances]\npicard_max_iter = 1\n").unwrap();
    let o = run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Picard"));
}
