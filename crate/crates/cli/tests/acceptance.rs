//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use phasefield_core::harness::{self, RateTable};
use phasefield_core::solver::{self, contraction_ratio, random_theta_trajectory, trajectory_distance};
use phasefield_core::{Coupling, Grid, Problem, RunConfig, Trajectory};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(rel: &str) -> RunConfig {
    RunConfig::from_path(&workspace().join(rel)).expect("config parses")
}

fn fmt(values: &[f64]) -> String {
    let v: Vec<String> = values.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", v.join(", "))
}

fn criterion_1() -> Verdict {
    let grid = Grid::unit_square(16);
    let cfg = RunConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [0.4, 0.2, 0.1] {
        let s = harness::spectral_battery(&grid, &cfg, eps, 20, SEED).expect("battery runs");
        ok &= s.symmetric && s.constants_exact && s.min_eigenvalue >= -1e-10 && s.form_error <= 1e-12;
        parts.push(format!(
            "eps {eps}: symmetric {}, constants {}, min eig {:.2e}, form err {:.2e}",
            s.symmetric, s.constants_exact, s.min_eigenvalue, s.form_error
        ));
    }
    verdict(ok, parts.join("; "))
}

fn criterion_2() -> Verdict {
    let grid = Grid::unit_square(16);
    let cfg = RunConfig::default();
    let mut worst: f64 = 0.0;
    for eps in [0.4, 0.2, 0.1] {
        worst = worst.max(harness::gateaux_battery(&grid, &cfg, eps, 20, SEED).expect("battery runs"));
    }
    verdict(worst <= 1e-10, format!("max relative error {worst:.2e} over 20 pairs, 3 eps (tol 1e-10)"))
}

fn criterion_3() -> Verdict {
    let grid = Grid::unit_square(64);
    let ladder = harness::dyadic_ladder(0.4, 4);
    let t = harness::energy_gap_battery(&grid, &RunConfig::default(), &ladder).expect("battery runs");
    let v = t.values();
    let ok = t.strictly_decreasing_from(0) && v[3] < v[0] / 3.0;
    verdict(ok, format!("gaps {} (final < initial/3 required)", fmt(&v)))
}

fn criterion_4() -> Verdict {
    let grid = Grid::unit_square(16);
    let m = harness::yosida_sign_battery(&grid, 50, &[0.5, 0.05], SEED).expect("battery runs");
    verdict(m >= -1e-10, format!("min (-Delta_h u, beta_lambda(u)) = {m:.3e} over 50 fields x 4 graphs x 2 lambdas"))
}

fn criterion_5() -> Verdict {
    let cfg = RunConfig {
        lambda: 0.5,
        final_time: 0.1,
        time_step: Some(0.005),
        ..RunConfig::default()
    };
    let p = Problem::new(&cfg).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut ratios = Vec::new();
    for _ in 0..5 {
        let a = random_theta_trajectory(&p, &mut rng, 0.2);
        let b = random_theta_trajectory(&p, &mut rng, 0.2);
        ratios.push(contraction_ratio(&p, &a, &b).expect("maps evaluate"));
    }
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let from_initial = solver::solve_global_picard(&p, None).expect("picard converges");
    let guess = random_theta_trajectory(&p, &mut rng, 0.3);
    let from_random = solver::solve_global_picard(&p, Some(guess)).expect("picard converges");
    let tol = p.picard_tolerance();
    let d = trajectory_distance(&p, &from_initial.theta_levels(), &from_random.theta_levels(), p.metric_weight());
    let ok = worst <= 0.6 && d <= 10.0 * tol;
    verdict(
        ok,
        format!(
            "ratios {} (<= 0.6), L = {}, fixed points from two guesses d_h = {d:.2e} (<= 10 tol = {:.2e})",
            fmt(&ratios),
            p.metric_weight(),
            10.0 * tol
        ),
    )
}

fn conserved(t: &Trajectory) -> (f64, f64) {
    let m0 = t.states[0].phi.mean();
    let drift = t.states.iter().map(|s| (s.phi.mean() - m0).abs()).fold(0.0, f64::max);
    let min_theta = t.states.iter().map(|s| s.theta.min()).fold(f64::INFINITY, f64::min);
    (drift, min_theta)
}

fn criterion_6(extra: &[Trajectory]) -> Verdict {
    let dir = workspace().join("configs/positive");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .expect("positive corpus")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    let mut runs = 0;
    let mut drift: f64 = 0.0;
    let mut min_theta = f64::INFINITY;
    for path in &paths {
        let cfg = RunConfig::from_path(path).expect("config parses");
        let t = solver::solve(&cfg).expect("positive config solves");
        let (d, m) = conserved(&t);
        drift = drift.max(d);
        min_theta = min_theta.min(m);
        runs += 1;
    }
    for t in extra {
        let (d, m) = conserved(t);
        drift = drift.max(d);
        min_theta = min_theta.min(m);
        runs += 1;
    }
    let ok = drift <= 1e-10 && min_theta > 0.0;
    verdict(ok, format!("{runs} runs: max mean drift {drift:.2e} (<= 1e-10), min theta {min_theta:.4}"))
}

fn criterion_7() -> (Verdict, Vec<Trajectory>) {
    let mut residuals = Vec::new();
    let mut runs = Vec::new();
    for steps in [20, 40, 80] {
        let cfg = RunConfig {
            time_step: Some(0.1 / steps as f64),
            ..RunConfig::default()
        };
        let t = solver::solve(&cfg).expect("default case solves");
        residuals.push(t.summary.energy_balance_residual);
        runs.push(t);
    }
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[1] / w[0]).collect();
    let ok = ratios.iter().all(|r| (0.375..=0.625).contains(r));
    (
        verdict(ok, format!("residuals {} ratios {} (0.5 +- 25%)", fmt(&residuals), fmt(&ratios))),
        runs,
    )
}

fn criterion_8() -> Verdict {
    let cfg = RunConfig {
        coupling: Coupling::PerStep,
        ..config("configs/sweeps/lambda-ladder.toml")
    };
    assert_eq!(cfg.eps, 0.2);
    let ladder = harness::dyadic_ladder(0.5, 5);
    let s = harness::sweep_lambda(&cfg, &ladder).expect("sweep runs");
    let ok = s.cauchy_decreasing && s.beta_growth <= 2.0;
    verdict(
        ok,
        format!(
            "cauchy {} (strictly decreasing for k >= 1), beta L2 growth {:.3} (<= 2)",
            fmt(&s.cauchy.values()),
            s.beta_growth
        ),
    )
}

fn criterion_9() -> Verdict {
    let cfg = config("configs/sweeps/eps-ladder.toml");
    assert_eq!(cfg.lambda, 1.0 / 32.0);
    let s = harness::sweep_epsilon(&cfg, &[0.4, 0.2, 0.1, 0.05]).expect("sweep runs");
    let g: &RateTable = &s.solution_gap;
    let ok = s.solution_gap_decreasing && s.solution_gap_halved;
    verdict(ok, format!("solution gap {} (decreasing, final < initial/2)", fmt(&g.values())))
}

fn criterion_10() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_phasefield");
    let out = tempfile::tempdir().expect("tempdir");
    let mut failures = Vec::new();
    let mut rejected = 0;
    let mut labels = [false; 8];
    let mut negatives: Vec<PathBuf> = std::fs::read_dir(workspace().join("configs/negative"))
        .expect("negative corpus")
        .map(|e| e.unwrap().path())
        .collect();
    negatives.sort();
    for path in &negatives {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let label = name.split('-').next().unwrap().to_uppercase();
        let o = Command::new(bin)
            .args(["simulate", "--config"])
            .arg(path)
            .arg("--out")
            .arg(out.path().join(&name))
            .output()
            .expect("binary runs");
        let stderr = String::from_utf8_lossy(&o.stderr);
        if o.status.code() == Some(2) && stderr.contains(&format!("error: {label}:")) {
            rejected += 1;
            if let Some(k) = label.strip_prefix('C').and_then(|k| k.parse::<usize>().ok()) {
                labels[k - 1] = true;
            }
        } else {
            failures.push(format!("{name}: status {:?}, stderr {}", o.status.code(), stderr.trim()));
        }
    }
    let mut positives: Vec<PathBuf> = std::fs::read_dir(workspace().join("configs/positive"))
        .expect("positive corpus")
        .map(|e| e.unwrap().path())
        .collect();
    positives.sort();
    for path in &positives {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let o = Command::new(bin)
            .args(["simulate", "--config"])
            .arg(path)
            .arg("--out")
            .arg(out.path().join(&name))
            .output()
            .expect("binary runs");
        if !o.status.success() {
            failures.push(format!("{name}: status {:?}", o.status.code()));
        }
    }
    let ok = failures.is_empty() && labels.iter().all(|l| *l);
    verdict(
        ok,
        format!(
            "{rejected}/{} negatives rejected with their label, {} positives run{}",
            negatives.len(),
            positives.len(),
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join("; ")) }
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let (c7, runs7) = criterion_7();
    let results = vec![
        (1, "operator battery", criterion_1()),
        (2, "Gateaux identity", criterion_2()),
        (3, "nonlocal-to-local energy", criterion_3()),
        (4, "Yosida sign inequality", criterion_4()),
        (5, "contraction", criterion_5()),
        (6, "conservation and positivity", criterion_6(&runs7)),
        (7, "energy-balance residual", c7),
        (8, "lambda-Cauchy", criterion_8()),
        (9, "eps-to-local solution gap", criterion_9()),
        (10, "config gate", criterion_10()),
    ];
    let mut failed = 0;
    for (k, name, v) in &results {
        if !v.passed {
            failed += 1;
        }
        println!(
            "criterion {k:>2} {:<4} {name}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
