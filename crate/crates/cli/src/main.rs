use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use phasefield_core::graphs::MonotoneGraph;
use phasefield_core::{harness, io, solver, Mode, RunConfig};
use serde_json::json;
use sha2::{Digest, Sha256};

/// Exit status for configuration errors (the message starts with the assumption label).
const EXIT_CONFIG: u8 = 2;
/// Exit status for solver failures and invariant violations.
const EXIT_RUNTIME: u8 = 3;
/// Exit status for a sweep or battery that ran but did not pass.
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser)]
#[command(name = "phasefield", version, about = "Conserved phase-field solvers and convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one trajectory and write snapshots, ledger and summary.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Write snapshots every this many steps (the final level is always written).
        #[arg(long, default_value_t = 0)]
        snapshot_every: usize,
    },
    /// Lambda-ladder at fixed eps.
    SweepLambda {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Eps-ladder against the local solver.
    SweepEpsilon {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Operator and graph batteries.
    CheckOperators {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Tabulate resolvent, Yosida approximation and Moreau envelope of every graph.
    TabulateGraphs {
        #[arg(long, default_value = "runs/graphs")]
        out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, default_value_t = 401)]
        points: usize,
    },
    /// Render a rate table CSV as a log-log SVG plot.
    Plot {
        /// CSV with columns rung,value,ratio
        input: PathBuf,
        /// Defaults to the input path with an .svg extension.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        title: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; defaults to runs/<subcommand>-<config hash prefix>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

struct Prepared {
    config: RunConfig,
    hash: String,
    out: PathBuf,
}

fn prepare(run: &RunArgs, command: &str) -> Result<Prepared, phasefield_core::Error> {
    let mut config = match &run.config {
        Some(p) => RunConfig::from_path(p).map_err(|e| match e {
            phasefield_core::Error::Io(io) => phasefield_core::Error::config(
                phasefield_core::Assumption::Schema,
                format!("cannot read {}: {io}", p.display()),
            ),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    config.apply_overrides(|k| std::env::var(k).ok())?;
    if let Some(s) = run.seed {
        config.seed = s;
    }
    if let Some(m) = run.mode {
        config.mode = m;
    }
    let hash = hex::encode(Sha256::digest(config.to_toml_string().as_bytes()));
    let out = run
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/{command}-{}", &hash[..12])));
    Ok(Prepared { config, hash, out })
}

fn write_manifest(p: &Prepared, command: &str, passed: Option<bool>, outputs: &[PathBuf]) -> anyhow::Result<()> {
    let rel: Vec<String> = outputs
        .iter()
        .map(|o| o.strip_prefix(&p.out).unwrap_or(o).display().to_string())
        .collect();
    let manifest = json!({
        "schema": 1,
        "command": command,
        "versions": {
            "phasefield": env!("CARGO_PKG_VERSION"),
        },
        "config_sha256": p.hash,
        "seed": p.config.seed,
        "mode": p.config.mode.name(),
        "passed": passed,
        "outputs": rel,
    });
    fs::write(p.out.join("config.toml"), p.config.to_toml_string())?;
    fs::write(p.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<PathBuf> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(path.to_path_buf())
}

enum Outcome {
    Passed,
    Failed,
}

fn run(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Simulate { run, snapshot_every } => {
            let p = prepare(&run, "simulate")?;
            let traj = solver::solve(&p.config)?;
            traj.check_invariants()?;
            let outputs = io::write_trajectory(&p.out, &traj, snapshot_every)?;
            write_manifest(&p, "simulate", Some(true), &outputs)?;
            let s = &traj.summary;
            println!(
                "{} steps, picard iterations {}, max mean drift {:.3e}, min theta {:.6}, energy balance residual {:.3e}",
                s.steps, s.picard_iterations, s.max_mean_drift, s.min_theta, s.energy_balance_residual
            );
            println!("wrote {}", p.out.display());
            Ok(Outcome::Passed)
        }
        Command::SweepLambda { run } => {
            let p = prepare(&run, "sweep-lambda")?;
            let sweep = harness::sweep_lambda(&p.config, &p.config.sweep.lambda_ladder)?;
            fs::create_dir_all(&p.out)?;
            let mut outputs = Vec::new();
            for t in [&sweep.cauchy, &sweep.ln_distance, &sweep.graph_distance, &sweep.beta_l2, &sweep.mu_l2] {
                outputs.push(io::write_rate_table(&p.out, t)?);
            }
            outputs.push(write_json(&p.out.join("report.json"), &sweep)?);
            write_manifest(&p, "sweep-lambda", Some(sweep.passed), &outputs)?;
            print!("{}", sweep.cauchy.to_csv());
            println!(
                "cauchy decreasing: {}, beta growth {:.3}, passed: {}",
                sweep.cauchy_decreasing, sweep.beta_growth, sweep.passed
            );
            Ok(if sweep.passed { Outcome::Passed } else { Outcome::Failed })
        }
        Command::SweepEpsilon { run } => {
            let p = prepare(&run, "sweep-epsilon")?;
            let sweep = harness::sweep_epsilon(&p.config, &p.config.sweep.eps_ladder)?;
            fs::create_dir_all(&p.out)?;
            let mut outputs = Vec::new();
            for t in [
                &sweep.solution_gap,
                &sweep.energy_gap,
                &sweep.probe_energy_gap,
                &sweep.probe_operator_gap,
                &sweep.final_energy,
            ] {
                outputs.push(io::write_rate_table(&p.out, t)?);
            }
            let energy = p.out.join("energy_table.csv");
            fs::write(&energy, sweep.energy_table_csv())?;
            outputs.push(energy);
            outputs.push(write_json(&p.out.join("report.json"), &sweep)?);
            write_manifest(&p, "sweep-epsilon", Some(sweep.passed), &outputs)?;
            print!("{}", sweep.solution_gap.to_csv());
            println!(
                "solution gap decreasing: {}, halved: {}, energy gap decreasing: {}, passed: {}",
                sweep.solution_gap_decreasing, sweep.solution_gap_halved, sweep.energy_gap_decreasing, sweep.passed
            );
            Ok(if sweep.passed { Outcome::Passed } else { Outcome::Failed })
        }
        Command::CheckOperators { run } => {
            let p = prepare(&run, "check-operators")?;
            p.config.validate()?;
            let report = harness::check_operator_lemmas(&p.config)?;
            fs::create_dir_all(&p.out)?;
            let out = write_json(&p.out.join("report.json"), &report)?;
            write_manifest(&p, "check-operators", Some(report.passed), &[out])?;
            for b in &report.batteries {
                println!("{:<18} {}", b.name, if b.passed { "pass" } else { "FAIL" });
            }
            Ok(if report.passed { Outcome::Passed } else { Outcome::Failed })
        }
        Command::TabulateGraphs {
            out,
            lambda,
            lo,
            hi,
            points,
        } => {
            anyhow::ensure!(lambda > 0.0 && lambda.is_finite(), "config: lambda must be positive");
            anyhow::ensure!(hi > lo && points >= 2, "config: need hi > lo and at least two points");
            fs::create_dir_all(&out)?;
            for g in MonotoneGraph::ALL {
                let path = out.join(format!("{}.csv", g.name()));
                fs::write(&path, io::graph_table_csv(g, lambda, lo, hi, points)?)?;
                println!("wrote {}", path.display());
            }
            Ok(Outcome::Passed)
        }
        Command::Plot { input, output, title } => {
            let text = fs::read_to_string(&input).with_context(|| format!("cannot read {}", input.display()))?;
            let rows = io::parse_rate_csv(&text)?;
            let title = title.unwrap_or_else(|| {
                input
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            let svg = io::rate_plot_svg(&title, &rows)?;
            let output = output.unwrap_or_else(|| input.with_extension("svg"));
            fs::write(&output, svg)?;
            println!("wrote {}", output.display());
            Ok(Outcome::Passed)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<phasefield_core::Error>() {
        Some(e) if e.assumption().is_some() => EXIT_CONFIG,
        Some(_) => EXIT_RUNTIME,
        None if err.to_string().starts_with("config:") => EXIT_CONFIG,
        None => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Passed) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => {
            eprintln!("acceptance failure: see report.json in the run directory");
            ExitCode::from(EXIT_ACCEPTANCE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
