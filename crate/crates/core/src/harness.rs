//! Lambda- and eps-sweeps with rate tables, and the operator batteries.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::graphs::{MonotoneGraph, ShiftedLog};
use crate::grid::{dual_norm_sq, Field, Grid, Unit};
use crate::kernel::{assemble, NonlocalOperator};
use crate::linalg::CosineBasis;
use crate::solver::{self, Problem, Trajectory};

/// Values below this are treated as zero: clamped and flagged in rate tables.
pub const RATE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub rung: usize,
    /// Ladder parameter of the rung (lambda or eps).
    pub parameter: f64,
    pub value: f64,
    /// `value_k / value_{k-1}`
    pub ratio: Option<f64>,
    /// Set when the raw value fell below [`RATE_FLOOR`] and was clamped.
    pub floored: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateTable {
    pub name: String,
    pub rows: Vec<RateRow>,
}

impl RateTable {
    pub fn new(name: &str, params: &[f64], values: &[f64]) -> Self {
        let mut rows: Vec<RateRow> = Vec::with_capacity(values.len());
        for (k, (&p, &v)) in params.iter().zip(values).enumerate() {
            let floored = v.abs() < RATE_FLOOR;
            let value = if floored { RATE_FLOOR } else { v };
            let ratio = rows.last().map(|r| value / r.value);
            rows.push(RateRow {
                rung: k,
                parameter: p,
                value,
                ratio,
                floored,
            });
        }
        Self {
            name: name.to_string(),
            rows,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    /// Strictly decreasing from rung `from` on.
    pub fn strictly_decreasing_from(&self, from: usize) -> bool {
        self.rows[from.min(self.rows.len())..].windows(2).all(|w| w[1].value < w[0].value)
    }

    /// `rung,value,ratio` with an empty ratio on the first rung.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rung,value,ratio\n");
        for r in &self.rows {
            let ratio = r.ratio.map(|x| format!("{x:.12e}")).unwrap_or_default();
            s.push_str(&format!("{},{:.12e},{}\n", r.rung, r.value, ratio));
        }
        s
    }
}

/// Dyadic ladder `x0 2^{-k}`, `k = 0..rungs-1`.
pub fn dyadic_ladder(x0: f64, rungs: usize) -> Vec<f64> {
    (0..rungs).map(|k| x0 / f64::powi(2.0, k as i32)).collect()
}

fn max_over_levels(a: &Trajectory, b: &Trajectory, f: impl Fn(&Field, &Field) -> Result<f64>) -> Result<f64> {
    let mut m: f64 = 0.0;
    for (x, y) in a.states.iter().zip(&b.states) {
        m = m.max(f(&x.phi, &y.phi)?);
    }
    Ok(m)
}

fn run(p: &Problem) -> Result<Trajectory> {
    let t = match p.config.coupling {
        crate::config::Coupling::GlobalPicard => solver::solve_global_picard(p, None)?,
        crate::config::Coupling::PerStep => solver::solve_per_step(p)?,
    };
    t.check_invariants()?;
    Ok(t)
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaSweep {
    pub eps: f64,
    pub ladder: Vec<f64>,
    /// `max_n ||phi_{lambda_k}(t_n) - phi_{lambda_{k+1}}(t_n)||_H`
    pub cauchy: RateTable,
    /// `max_n ||Ln_lambda(theta) - ln theta||_H`
    pub ln_distance: RateTable,
    /// `max_n ||phi - J_lambda(phi)||_H`, a bound on the distance of `(phi, beta_lambda(phi))` to the graph
    pub graph_distance: RateTable,
    /// `||beta_lambda(phi)||_{L^2(0,T;H)}`
    pub beta_l2: RateTable,
    /// `||mu||_{L^2(0,T;H)}`
    pub mu_l2: RateTable,
    pub cauchy_decreasing: bool,
    /// `max_k beta_l2 / beta_l2[0]`
    pub beta_growth: f64,
    pub picard_iterations: Vec<usize>,
    pub passed: bool,
}

/// Runs the lambda-ladder at fixed eps (one shared kernel assembly) and
/// tabulates the Cauchy column and the a priori bounds.
pub fn sweep_lambda(config: &RunConfig, ladder: &[f64]) -> Result<LambdaSweep> {
    if ladder.len() < 2 {
        return Err(Error::config(crate::error::Assumption::Schema, "lambda ladder needs at least two rungs"));
    }
    let configs: Vec<RunConfig> = ladder
        .iter()
        .map(|&l| RunConfig {
            lambda: l,
            ..config.clone()
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let grid = config.grid()?;
    let op = if config.mode.uses_kernel() {
        let family = config.kernel_family(grid.dim())?;
        Some(Arc::new(assemble(&grid, config.eps, &family, &config.assembly_options())?))
    } else {
        None
    };
    let runs: Vec<Result<(Problem, Trajectory)>> = configs
        .par_iter()
        .map(|c| {
            let p = Problem::with_operator(c, op.clone())?;
            let t = run(&p)?;
            Ok((p, t))
        })
        .collect();
    let runs: Vec<(Problem, Trajectory)> = runs.into_iter().collect::<Result<_>>()?;

    let mut cauchy = Vec::new();
    for w in runs.windows(2) {
        cauchy.push(max_over_levels(&w[0].1, &w[1].1, |a, b| a.distance(b))?);
    }
    let mut ln_dist = Vec::new();
    let mut graph_dist = Vec::new();
    for (p, t) in &runs {
        let log = ShiftedLog::new(p.lambda);
        let mut ml: f64 = 0.0;
        let mut mg: f64 = 0.0;
        for s in &t.states {
            let mut dl = Vec::with_capacity(p.grid.nodes());
            let mut dg = Vec::with_capacity(p.grid.nodes());
            for (&th, &ph) in s.theta.values().iter().zip(s.phi.values()) {
                dl.push(log.value(th)? - th.ln());
                dg.push(ph - p.graph.resolvent(ph)?);
            }
            ml = ml.max(p.grid.norm(&dl));
            mg = mg.max(p.grid.norm(&dg));
        }
        ln_dist.push(ml);
        graph_dist.push(mg);
    }
    let beta: Vec<f64> = runs.iter().map(|(_, t)| t.summary.beta_l2).collect();
    let mu: Vec<f64> = runs.iter().map(|(_, t)| t.summary.mu_l2).collect();
    let cauchy_params = &ladder[..ladder.len() - 1];
    let cauchy = RateTable::new("lambda_cauchy", cauchy_params, &cauchy);
    let cauchy_decreasing = cauchy.strictly_decreasing_from(1);
    let beta_growth = if beta[0] > 0.0 {
        beta.iter().fold(0.0_f64, |m, b| m.max(b / beta[0]))
    } else if beta.iter().any(|b| *b > 0.0) {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(LambdaSweep {
        eps: config.eps,
        ladder: ladder.to_vec(),
        passed: cauchy_decreasing && beta_growth <= 2.0,
        cauchy,
        ln_distance: RateTable::new("ln_distance", ladder, &ln_dist),
        graph_distance: RateTable::new("graph_distance", ladder, &graph_dist),
        beta_l2: RateTable::new("beta_l2", ladder, &beta),
        mu_l2: RateTable::new("mu_l2", ladder, &mu),
        cauchy_decreasing,
        beta_growth,
        picard_iterations: runs.iter().map(|(_, t)| t.summary.picard_iterations).collect(),
    })
}

impl EpsSweep {
    /// `epsilon,energy,dirichlet_energy,gap` for `phi_loc(T)`, with energy `2 E_eps`.
    pub fn energy_table_csv(&self) -> String {
        let mut s = String::from("epsilon,energy,dirichlet_energy,gap\n");
        for ((e, en), row) in self.ladder.iter().zip(&self.local_energies).zip(&self.energy_gap.rows) {
            s.push_str(&format!("{e:.12e},{en:.12e},{:.12e},{:.12e}\n", self.local_dirichlet_energy, row.value));
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsSweep {
    pub lambda: f64,
    pub ladder: Vec<f64>,
    /// `max_n ||phi_eps(t_n) - phi_loc(t_n)||_H`
    pub solution_gap: RateTable,
    /// `|2 E_eps(phi_loc(T)) - ||grad_h phi_loc(T)||^2|`
    pub energy_gap: RateTable,
    /// `|2 E_eps(psi) - int |grad psi|^2|` for `psi = cos(pi x_1 / L_1)`
    pub probe_energy_gap: RateTable,
    /// `||B_eps psi - (-Delta_h psi)||_H` for the same probe
    pub probe_operator_gap: RateTable,
    /// `E_eps(phi_eps(T))`, expected to stay bounded
    pub final_energy: RateTable,
    /// `2 E_eps(phi_loc(T))` per rung
    pub local_energies: Vec<f64>,
    pub local_dirichlet_energy: f64,
    pub solution_gap_decreasing: bool,
    pub solution_gap_halved: bool,
    pub energy_gap_decreasing: bool,
    pub probe_energy_gap_decreasing: bool,
    pub passed: bool,
}

/// Smooth probe `cos(pi x_1 / L_1)` and its exact Dirichlet integral.
pub fn cosine_probe(grid: &Grid) -> Result<(Field, f64)> {
    let l = grid.extents()[0];
    let psi = Field::from_fn(*grid, Unit::Generic, |x| (PI * x[0] / l).cos())?;
    Ok((psi, (PI / l).powi(2) * grid.volume() / 2.0))
}

/// Runs the nonlocal solver along an eps-ladder on a fixed grid and compares
/// with the local solver, which is the reference.
pub fn sweep_epsilon(config: &RunConfig, ladder: &[f64]) -> Result<EpsSweep> {
    if ladder.len() < 2 {
        return Err(Error::config(crate::error::Assumption::Schema, "eps ladder needs at least two rungs"));
    }
    let nonlocal_mode = if config.mode == Mode::Local { Mode::EpsLambda } else { config.mode };
    let base = RunConfig {
        mode: nonlocal_mode,
        eps: ladder[0],
        ..config.clone()
    };
    base.validate_with_ladder(Some(ladder))?;
    let local_cfg = RunConfig {
        mode: Mode::Local,
        ..config.clone()
    };
    local_cfg.validate()?;
    let local = run(&Problem::new(&local_cfg)?)?;
    let grid = base.grid()?;
    let family = base.kernel_family(grid.dim())?;
    let results: Vec<Result<(Arc<NonlocalOperator>, Trajectory)>> = ladder
        .par_iter()
        .map(|&e| {
            let c = RunConfig { eps: e, ..base.clone() };
            let op = Arc::new(assemble(&grid, e, &family, &c.assembly_options())?);
            let p = Problem::with_operator(&c, Some(op.clone()))?;
            Ok((op, run(&p)?))
        })
        .collect();
    let results: Vec<(Arc<NonlocalOperator>, Trajectory)> = results.into_iter().collect::<Result<_>>()?;

    let phi_loc_t = local.final_state().phi.clone();
    let dirichlet = grid.grad_norm_sq(phi_loc_t.values());
    let (psi, psi_dirichlet) = cosine_probe(&grid)?;
    let neg_lap_psi: Vec<f64> = grid.laplacian(psi.values()).into_iter().map(|v| -v).collect();
    let mut sol = Vec::new();
    let mut egap = Vec::new();
    let mut energies = Vec::new();
    let mut pgap = Vec::new();
    let mut ogap = Vec::new();
    let mut fin = Vec::new();
    for (op, t) in &results {
        sol.push(max_over_levels(t, &local, |a, b| a.distance(b))?);
        let e2 = 2.0 * op.energy(&phi_loc_t)?;
        energies.push(e2);
        egap.push((e2 - dirichlet).abs());
        pgap.push((2.0 * op.energy(&psi)? - psi_dirichlet).abs());
        let bpsi = op.apply_slice(psi.values());
        let d: Vec<f64> = bpsi.iter().zip(&neg_lap_psi).map(|(a, b)| a - b).collect();
        ogap.push(grid.norm(&d));
        fin.push(op.energy(&t.final_state().phi)?);
    }
    let solution_gap = RateTable::new("solution_gap", ladder, &sol);
    let energy_gap = RateTable::new("energy_gap", ladder, &egap);
    let probe_energy_gap = RateTable::new("probe_energy_gap", ladder, &pgap);
    let solution_gap_decreasing = solution_gap.strictly_decreasing_from(0);
    let solution_gap_halved = sol.last().unwrap() < &(0.5 * sol[0]);
    let energy_gap_decreasing = energy_gap.strictly_decreasing_from(0);
    let probe_energy_gap_decreasing = probe_energy_gap.strictly_decreasing_from(0);
    Ok(EpsSweep {
        lambda: config.lambda,
        ladder: ladder.to_vec(),
        passed: solution_gap_decreasing && solution_gap_halved && energy_gap_decreasing,
        solution_gap,
        energy_gap,
        probe_energy_gap,
        probe_operator_gap: RateTable::new("probe_operator_gap", ladder, &ogap),
        final_energy: RateTable::new("final_energy", ladder, &fin),
        local_energies: energies,
        local_dirichlet_energy: dirichlet,
        solution_gap_decreasing,
        solution_gap_halved,
        energy_gap_decreasing,
        probe_energy_gap_decreasing,
    })
}

/// One battery of the operator report.
#[derive(Debug, Clone, Serialize)]
pub struct Battery {
    pub name: String,
    pub passed: bool,
    pub metrics: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorReport {
    pub seed: u64,
    pub ladder: Vec<f64>,
    pub passed: bool,
    pub batteries: Vec<Battery>,
}

fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, amp: f64) -> Field {
    let v = (0..grid.nodes()).map(|_| rng.gen_range(-amp..amp)).collect();
    Field::new(*grid, v, Unit::Generic).expect("finite")
}

/// Smooth probes: a few products of low cosine modes plus a constant.
fn smooth_probes(grid: &Grid) -> Vec<Field> {
    let ext = grid.extents();
    let modes = [(1usize, 0usize, 1.0), (0, 1, 0.5), (1, 1, 1.0), (2, 1, 0.3)];
    modes
        .iter()
        .map(|&(a, b, amp)| {
            Field::from_fn(*grid, Unit::Generic, |x| {
                0.2 + amp * (a as f64 * PI * x[0] / ext[0]).cos() * (b as f64 * PI * x[1] / ext[1]).cos()
            })
            .expect("finite")
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralCheck {
    pub eps: f64,
    pub symmetric: bool,
    pub nonnegative_weights: bool,
    pub constants_exact: bool,
    pub min_eigenvalue: f64,
    /// Count of eigenvalues below `1e-9` times the largest.
    pub null_dimension: usize,
    /// Max relative error of `a_eps(phi, psi) = (B phi, psi)_H` over the probes.
    pub form_error: f64,
}

/// Symmetry, PSD, constant annihilation and the form identity by dense eigensolve.
pub fn spectral_battery(grid: &Grid, config: &RunConfig, eps: f64, probes: usize, seed: u64) -> Result<SpectralCheck> {
    let family = config.kernel_family(grid.dim())?;
    let op = assemble(grid, eps, &family, &config.assembly_options())?;
    let n = grid.nodes();
    let mut symmetric = true;
    let mut nonneg = true;
    for i in 0..n {
        for j in 0..n {
            let w = op.weight(i, j);
            symmetric &= w == op.weight(j, i);
            nonneg &= w >= 0.0;
        }
    }
    let ones = Field::constant(*grid, 1.0, Unit::Generic);
    let constants_exact = op.apply(&ones)?.values().iter().all(|v| *v == 0.0);
    let m = op.to_dense() * grid.cell_volume();
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().copied().fold(0.0_f64, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let null_dimension = eig.iter().filter(|e| e.abs() <= 1e-9 * max).count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut form_error: f64 = 0.0;
    for _ in 0..probes {
        let phi = random_field(grid, &mut rng, 1.0);
        let psi = random_field(grid, &mut rng, 1.0);
        let a = op.bilinear(&phi, &psi)?;
        let b = op.apply(&phi)?.inner(&psi)?;
        form_error = form_error.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
    }
    Ok(SpectralCheck {
        eps,
        symmetric,
        nonnegative_weights: nonneg,
        constants_exact,
        min_eigenvalue: min,
        null_dimension,
        form_error,
    })
}

/// Step sizes for the central difference. The identity is exact for any h;
/// very small h only measures cancellation in the energy difference.
pub const GATEAUX_STEPS: [f64; 3] = [1.0, 1e-1, 1e-2];

/// Largest relative error of the central difference of `E_eps` against
/// `(B phi, psi)_H` over random pairs and step sizes.
pub fn gateaux_battery(grid: &Grid, config: &RunConfig, eps: f64, pairs: usize, seed: u64) -> Result<f64> {
    let family = config.kernel_family(grid.dim())?;
    let op = assemble(grid, eps, &family, &config.assembly_options())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let phi = random_field(grid, &mut rng, 1.0);
        let psi = random_field(grid, &mut rng, 1.0);
        let exact = op.apply(&phi)?.inner(&psi)?;
        for h in GATEAUX_STEPS {
            let shift = |s: f64| {
                let v = phi.values().iter().zip(psi.values()).map(|(a, b)| a + s * b).collect();
                Field::new(*grid, v, Unit::Generic)
            };
            let fd = (op.energy(&shift(h)?)? - op.energy(&shift(-h)?)?) / (2.0 * h);
            worst = worst.max((fd - exact).abs() / exact.abs());
        }
    }
    Ok(worst)
}

/// `|2 E_eps(psi) - int |grad psi|^2|` along the ladder for `psi = cos(pi x_1 / L_1)`.
pub fn energy_gap_battery(grid: &Grid, config: &RunConfig, ladder: &[f64]) -> Result<RateTable> {
    let family = config.kernel_family(grid.dim())?;
    let (psi, target) = cosine_probe(grid)?;
    let mut gaps = Vec::new();
    for &e in ladder {
        let op = assemble(grid, e, &family, &config.assembly_options())?;
        gaps.push((2.0 * op.energy(&psi)? - target).abs());
    }
    Ok(RateTable::new("probe_energy_gap", ladder, &gaps))
}

/// Minimum of `(-Delta_h u, beta_lambda(u))_H` over random fields, graphs and lambdas.
pub fn yosida_sign_battery(grid: &Grid, fields: usize, lambdas: &[f64], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..fields {
        let u = random_field(grid, &mut rng, 1.5);
        let neg_lap: Vec<f64> = grid.laplacian(u.values()).into_iter().map(|v| -v).collect();
        for g in MonotoneGraph::ALL {
            for &l in lambdas {
                let mut b = Vec::with_capacity(u.values().len());
                for &x in u.values() {
                    b.push(g.yosida(l, x)?);
                }
                worst = worst.min(grid.inner(&neg_lap, &b));
            }
        }
    }
    Ok(worst)
}

/// `||phi||_{V_eps} / ||phi||_V` maximized over smooth probes, per rung.
pub fn embedding_battery(grid: &Grid, config: &RunConfig, ladder: &[f64]) -> Result<Vec<f64>> {
    let family = config.kernel_family(grid.dim())?;
    let probes = smooth_probes(grid);
    let mut out = Vec::new();
    for &e in ladder {
        let op = assemble(grid, e, &family, &config.assembly_options())?;
        let mut c: f64 = 0.0;
        for p in &probes {
            let v = (p.norm().powi(2) + grid.grad_norm_sq(p.values())).sqrt();
            c = c.max(op.norm_v_eps(p)? / v);
        }
        out.push(c);
    }
    Ok(out)
}

/// Empirical `C_delta` of the compactness interpolation for `phi_eps = (I + eps^2 A)^{-1} w`.
pub fn compactness_probe(grid: &Grid, config: &RunConfig, ladder: &[f64], deltas: &[f64], seed: u64) -> Result<Vec<f64>> {
    let family = config.kernel_family(grid.dim())?;
    let basis = CosineBasis::new(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_field(grid, &mut rng, 1.0);
    let mut family_fields = Vec::new();
    for &e in ladder {
        let op = assemble(grid, e, &family, &config.assembly_options())?;
        let phi = Field::new(*grid, basis.apply_spectral(w.values(), |_, a| 1.0 / (1.0 + e * e * a)), Unit::Generic)?;
        let energy = op.energy(&phi)?;
        family_fields.push((phi, energy));
    }
    let mut out = Vec::new();
    for &delta in deltas {
        let mut c: f64 = 0.0;
        for i in 0..family_fields.len() {
            for j in i + 1..family_fields.len() {
                let (a, ea) = &family_fields[i];
                let (b, eb) = &family_fields[j];
                let d = Field::new(*grid, a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect(), Unit::Generic)?;
                let lhs = d.norm().powi(2) - delta * (ea + eb);
                let dual = dual_norm_sq(&d)?;
                if dual > 0.0 {
                    c = c.max(lhs.max(0.0) / dual);
                }
            }
        }
        out.push(c);
    }
    Ok(out)
}

/// Runs every battery and assembles the pass/fail report. The batteries use
/// their own 8x8, 16x16 and 64x64 unit-square grids; the config supplies the
/// kernel, the eps-ladder, the probe count and the seed.
pub fn check_operator_lemmas(config: &RunConfig) -> Result<OperatorReport> {
    let seed = config.seed;
    let ladder = config.sweep.eps_ladder.clone();
    config
        .kernel_family(2)?
        .self_test(&ladder, Some(config.sweep.tail_delta))
        .map_err(|m| Error::config(crate::error::Assumption::C1, format!("kernel family fails its self-test: {m}")))?;
    if ladder.is_empty() || ladder.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::config(crate::error::Assumption::C7, "eps-ladder rungs must lie in (0, 1)"));
    }
    let probes = config.sweep.probes;
    let small = Grid::unit_square(16);
    let tiny = Grid::unit_square(8);
    let fine = Grid::unit_square(64);
    let mut batteries = Vec::new();

    let mut spectral = Vec::new();
    let resolved: Vec<f64> = ladder.iter().copied().filter(|e| *e >= 3.0 * small.max_spacing()).collect();
    for &e in &resolved {
        spectral.push(spectral_battery(&small, config, e, probes, seed)?);
    }
    let ok = !spectral.is_empty() && spectral.iter().all(|s| {
        s.symmetric
            && s.nonnegative_weights
            && s.constants_exact
            && s.null_dimension == 1
            && s.min_eigenvalue >= -1e-10
            && s.form_error <= 1e-12
    });
    batteries.push(Battery {
        name: "spectral".into(),
        passed: ok,
        metrics: serde_json::to_value(&spectral)?,
    });

    let tiny_check = spectral_battery(&tiny, config, 0.3, 2, seed)?;
    batteries.push(Battery {
        name: "eigen-8x8".into(),
        passed: tiny_check.min_eigenvalue >= -1e-10 && tiny_check.null_dimension == 1 && tiny_check.symmetric,
        metrics: serde_json::to_value(&tiny_check)?,
    });

    let g = gateaux_battery(&small, config, ladder[0], probes, seed)?;
    batteries.push(Battery {
        name: "gateaux".into(),
        passed: g <= 1e-10,
        metrics: serde_json::json!({ "max_relative_error": g }),
    });

    let gaps = energy_gap_battery(&fine, config, &ladder)?;
    batteries.push(Battery {
        name: "form-convergence".into(),
        passed: gaps.strictly_decreasing_from(0),
        metrics: serde_json::to_value(&gaps)?,
    });

    let sign = yosida_sign_battery(&small, 50, &[0.5, 0.05], seed)?;
    batteries.push(Battery {
        name: "yosida-sign".into(),
        passed: sign >= -1e-10,
        metrics: serde_json::json!({ "min_inner_product": sign }),
    });

    let emb = embedding_battery(&fine, config, &ladder)?;
    let (lo, hi) = emb.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), c| (a.min(*c), b.max(*c)));
    batteries.push(Battery {
        name: "embedding".into(),
        passed: lo > 0.0 && (hi - lo) / lo < 0.2,
        metrics: serde_json::json!({ "constants": emb, "relative_spread": (hi - lo) / lo }),
    });

    let family = config.kernel_family(2)?;
    let op = assemble(&small, ladder[0], &family, &config.assembly_options())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let phi = random_field(&small, &mut rng, 1.0);
        worst = worst.max(op.dual_norm_of_image(&phi)? / op.norm_v_eps(&phi)?);
    }
    batteries.push(Battery {
        name: "dual-bound".into(),
        passed: worst <= 1.0 + 1e-10,
        metrics: serde_json::json!({ "max_ratio": worst }),
    });

    let comp = compactness_probe(&fine, config, &ladder, &[0.1, 0.01], seed)?;
    batteries.push(Battery {
        name: "compactness".into(),
        passed: comp.iter().all(|c| c.is_finite()) && comp[1] >= comp[0],
        metrics: serde_json::json!({ "deltas": [0.1, 0.01], "c_delta": comp }),
    });

    let (c_lo, c_hi, c_pw) = norm_constants(&small, seed)?;
    batteries.push(Battery {
        name: "norm-constants".into(),
        passed: c_lo > 0.0 && c_hi.is_finite() && c_pw.is_finite(),
        metrics: serde_json::json!({ "c_lower": c_lo, "c_upper": c_hi, "poincare_wirtinger": c_pw }),
    });

    let mut resid: f64 = 0.0;
    let mut ln_gap: f64 = 0.0;
    for k in 0..=60 {
        let r = -3.0 + 0.1 * k as f64;
        for &l in &[0.5, 0.05] {
            for gr in [MonotoneGraph::Power, MonotoneGraph::Log] {
                let j = gr.resolvent(l, r)?;
                if let Some(b) = gr.minimal_section(j) {
                    if j.abs() < 1.0 - 1e-3 || gr == MonotoneGraph::Power {
                        resid = resid.max((j + l * b - r).abs() / r.abs().max(1.0));
                    }
                }
            }
            let theta = 0.05 + 0.05 * k as f64;
            let pt = ShiftedLog::new(l).eval(theta)?;
            ln_gap = ln_gap.max((pt.yosida - pt.resolvent.ln()).abs());
        }
    }
    batteries.push(Battery {
        name: "graph-scalars".into(),
        passed: resid <= 1e-12 && ln_gap <= 1e-10,
        metrics: serde_json::json!({ "resolvent_residual": resid, "ln_lambda_identity": ln_gap }),
    });

    Ok(OperatorReport {
        seed,
        ladder,
        passed: batteries.iter().all(|b| b.passed),
        batteries,
    })
}

/// Measured `C_*`, `C^*` of `||w||_V^2 ~ ||grad w||^2 + ||w||^2_Gamma` and the
/// Poincare-Wirtinger constant, over random and smooth samples.
pub fn norm_constants(grid: &Grid, seed: u64) -> Result<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<Field> = (0..10).map(|_| random_field(grid, &mut rng, 1.0)).collect();
    samples.extend(smooth_probes(grid));
    let (mut lo, mut hi, mut pw) = (f64::INFINITY, 0.0_f64, 0.0_f64);
    for w in &samples {
        let grad = grid.grad_norm_sq(w.values());
        let v = w.norm().powi(2) + grad;
        let r = v / (grad + grid.trace_norm_sq(w.values()));
        lo = lo.min(r);
        hi = hi.max(r);
        if grad > 0.0 {
            let m = w.mean();
            let centered: Vec<f64> = w.values().iter().map(|x| x - m).collect();
            pw = pw.max(grid.norm(&centered) / grad.sqrt());
        }
    }
    Ok((lo, hi, pw))
}
