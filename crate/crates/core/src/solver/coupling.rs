//! Composition `S = B o A` of the phase and temperature maps and its fixed point.

use rand::Rng;

use crate::config::{Coupling, RunConfig};
use crate::error::{Error, Result};

use super::diagnostics::{build_ledger, initial_potential, make_state, summarize, StepInfo};
use super::phase::{phase_map, phase_step, PhaseStep};
use super::state::Trajectory;
use super::thermal::{thermal_map, thermal_step, ThermalStep};
use super::Problem;

/// `sum_{n=1}^N tau e^{-L t_n} ||a_n - b_n||_H^2`.
pub fn trajectory_distance(p: &Problem, a: &[Vec<f64>], b: &[Vec<f64>], weight: f64) -> f64 {
    (1..a.len())
        .map(|n| {
            let d: Vec<f64> = a[n].iter().zip(&b[n]).map(|(x, y)| x - y).collect();
            p.tau * (-weight * p.time(n)).exp() * p.grid.inner(&d, &d)
        })
        .sum()
}

/// Validates, assembles and solves with the configured coupling.
pub fn solve(config: &RunConfig) -> Result<Trajectory> {
    let p = Problem::new(config)?;
    match config.coupling {
        Coupling::GlobalPicard => solve_global_picard(&p, None),
        Coupling::PerStep => solve_per_step(&p),
    }
}

fn levels(p: &Problem, phases: &[PhaseStep]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(phases.len() + 1);
    out.push(p.phi0.values().to_vec());
    out.extend(phases.iter().map(|s| s.phi.clone()));
    out
}

type Composed = (Vec<PhaseStep>, Vec<ThermalStep>, Vec<Vec<f64>>);

/// `S(theta)`: temperature levels `0..N` after one phase and one temperature solve.
fn compose(p: &Problem, thetas: &[Vec<f64>]) -> Result<Composed> {
    let phases = phase_map(p, thetas)?;
    let phis = levels(p, &phases);
    let refs: Vec<&[f64]> = phis.iter().map(|v| v.as_slice()).collect();
    let thermal = thermal_map(p, &refs)?;
    let mut out = Vec::with_capacity(thetas.len());
    out.push(p.theta0.values().to_vec());
    out.extend(thermal.iter().map(|s| s.theta.clone()));
    Ok((phases, thermal, out))
}

fn assemble_trajectory(
    p: &Problem,
    phases: Vec<PhaseStep>,
    thermal: Vec<ThermalStep>,
    coupling_iterations: &[usize],
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(p.steps + 1);
    states.push(make_state(
        p,
        0.0,
        p.phi0.values().to_vec(),
        initial_potential(p)?,
        p.theta0.values().to_vec(),
        None,
    )?);
    let mut info = Vec::with_capacity(p.steps);
    for (n, (ph, th)) in phases.into_iter().zip(thermal).enumerate() {
        info.push(StepInfo {
            newton_phase: ph.newton_iterations,
            newton_thermal: th.newton_iterations,
            coupling_iterations: coupling_iterations[n],
            retried: ph.retried,
            enthalpy_residual: th.enthalpy_residual,
        });
        states.push(make_state(p, p.time(n + 1), ph.phi, ph.mu, th.theta, Some(th.u))?);
    }
    let ledger = build_ledger(p, &states, &info)?;
    let summary = summarize(p, &states, &ledger);
    Ok(Trajectory {
        mode: p.mode,
        coupling: p.config.coupling,
        tau: p.tau,
        states,
        ledger,
        summary,
    })
}

/// Global Picard iteration `theta^(k+1) = B(A(theta^(k)))` over whole
/// trajectories, from `theta^(0) = theta_0` at every level unless a guess is
/// given. Stops when both the weighted and the unweighted distance between
/// successive iterates fall below the tolerance.
pub fn solve_global_picard(p: &Problem, guess: Option<Vec<Vec<f64>>>) -> Result<Trajectory> {
    let weight = p.metric_weight();
    let tol = p.picard_tolerance();
    let mut thetas = guess.unwrap_or_else(|| vec![p.theta0.values().to_vec(); p.steps + 1]);
    if thetas.len() != p.steps + 1 {
        return Err(Error::Invariant(format!(
            "initial guess has {} levels, expected {}",
            thetas.len(),
            p.steps + 1
        )));
    }
    thetas[0] = p.theta0.values().to_vec();
    let mut weighted = Vec::new();
    let mut unweighted = Vec::new();
    let mut ratios = Vec::new();
    let max_iter = p.config.tolerances.picard_max_iter;
    for k in 1..=max_iter {
        let (phases, thermal, next) = compose(p, &thetas)?;
        let dw = trajectory_distance(p, &thetas, &next, weight);
        let du = trajectory_distance(p, &thetas, &next, 0.0);
        if let Some(&prev) = weighted.last() {
            if prev > 0.0 {
                ratios.push(dw / prev);
            }
        }
        weighted.push(dw);
        unweighted.push(du);
        thetas = next;
        if dw <= tol && du <= tol {
            let mut traj = assemble_trajectory(p, phases, thermal, &vec![k; p.steps])?;
            traj.summary.picard_iterations = k;
            traj.summary.picard_distances = weighted;
            traj.summary.unweighted_distances = unweighted;
            traj.summary.contraction_ratios = ratios;
            return Ok(traj);
        }
    }
    Err(Error::PicardCap {
        iterations: max_iter,
        distance: weighted.last().copied().unwrap_or(f64::NAN),
        ratios,
    })
}

/// Fixed point inside each step: alternate the phase and temperature steps
/// at level `n + 1` until `tau ||theta^(j+1) - theta^(j)||_H^2 <= tol / N`.
pub fn solve_per_step(p: &Problem) -> Result<Trajectory> {
    let tol = p.picard_tolerance() / p.steps.max(1) as f64;
    let max_iter = p.config.tolerances.picard_max_iter;
    let mut phi = p.phi0.values().to_vec();
    let mut theta = p.theta0.values().to_vec();
    let mut u = Vec::with_capacity(theta.len());
    for &v in &theta {
        u.push(p.log.value(v)?);
    }
    let mut phases = Vec::with_capacity(p.steps);
    let mut thermal = Vec::with_capacity(p.steps);
    let mut counts = Vec::with_capacity(p.steps);
    let mut worst = 0;
    for n in 1..=p.steps {
        let mut guess = theta.clone();
        let mut done = None;
        for j in 1..=max_iter {
            let ph = phase_step(p, &phi, &guess, n)?;
            let dphi: Vec<f64> = ph.phi.iter().zip(&phi).map(|(a, b)| a - b).collect();
            let th = thermal_step(p, &theta, &u, &dphi, p.time(n), n)?;
            let diff: Vec<f64> = th.theta.iter().zip(&guess).map(|(a, b)| a - b).collect();
            let d = p.tau * p.grid.inner(&diff, &diff);
            guess.clone_from(&th.theta);
            if d <= tol {
                done = Some((ph, th, j));
                break;
            }
        }
        let Some((ph, th, j)) = done else {
            return Err(Error::PicardCap {
                iterations: max_iter,
                distance: f64::NAN,
                ratios: vec![],
            });
        };
        phi.clone_from(&ph.phi);
        theta.clone_from(&th.theta);
        u.clone_from(&th.u);
        worst = worst.max(j);
        counts.push(j);
        phases.push(ph);
        thermal.push(th);
    }
    let mut traj = assemble_trajectory(p, phases, thermal, &counts)?;
    traj.summary.picard_iterations = worst;
    Ok(traj)
}

/// `d_h(S theta_1, S theta_2) / d_h(theta_1, theta_2)` in the weighted metric.
pub fn contraction_ratio(p: &Problem, theta1: &[Vec<f64>], theta2: &[Vec<f64>]) -> Result<f64> {
    let weight = p.metric_weight();
    let before = trajectory_distance(p, theta1, theta2, weight);
    let (_, _, s1) = compose(p, theta1)?;
    let (_, _, s2) = compose(p, theta2)?;
    Ok(trajectory_distance(p, &s1, &s2, weight) / before)
}

/// A positive temperature trajectory: `theta_0` plus nodewise uniform noise
/// of the given relative amplitude at every level `n >= 1`.
pub fn random_theta_trajectory<R: Rng>(p: &Problem, rng: &mut R, amplitude: f64) -> Vec<Vec<f64>> {
    let base = p.theta0.values();
    (0..=p.steps)
        .map(|n| {
            if n == 0 {
                base.to_vec()
            } else {
                base.iter().map(|v| v * (1.0 + amplitude * rng.gen_range(-1.0..1.0))).collect()
            }
        })
        .collect()
}
