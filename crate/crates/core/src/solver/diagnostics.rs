//! Per-step ledger of the a priori quantities and the discrete energy balance.

use serde::Serialize;

use crate::config::{Coupling, Mode};
use crate::error::Result;
use crate::grid::{Field, Unit};

use super::state::{SystemState, Trajectory};
use super::Problem;

/// Solver counters for one step, filled in by the coupling loop.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct StepInfo {
    pub newton_phase: usize,
    pub newton_thermal: usize,
    pub coupling_iterations: usize,
    pub retried: bool,
    pub enthalpy_residual: f64,
}

/// Cumulative quantities are integrals over `[0, t]`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub mean_phi: f64,
    pub mean_drift: f64,
    pub min_theta: f64,
    pub max_theta: f64,
    /// `lambda/2 ||grad phi||^2 + E(phi) + int (beta_hat_lambda + pi_hat)(phi)`
    pub phase_energy: f64,
    /// `E_eps(phi)` (local mode: `1/2 ||grad phi||^2`)
    pub interaction_energy: f64,
    /// `int_0^t ||grad mu||^2`
    pub grad_mu_sq: f64,
    /// `int_0^t ||phi_t||^2`
    pub phi_t_sq: f64,
    /// `int_0^t (theta, phi_t)`
    pub coupling_work: f64,
    /// Cumulative residual of the energy identity, `O(tau)` for implicit Euler.
    pub energy_balance_residual: f64,
    /// `lambda/2 ||theta||^2 + lambda/2 ||ln_lambda theta||^2 + int J^ln_lambda(theta)`
    pub theta_energy: f64,
    /// `int_0^t ||grad theta||^2`
    pub grad_theta_sq: f64,
    /// `int_0^t ||theta||^2_{L^2(Gamma)}`
    pub trace_theta_sq: f64,
    pub beta_l1: f64,
    pub beta_l2: f64,
    pub enthalpy_residual: f64,
    pub newton_phase: usize,
    pub newton_thermal: usize,
    pub coupling_iterations: usize,
    pub retried: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub mode: String,
    pub coupling: String,
    pub steps: usize,
    pub tau: f64,
    pub lambda: f64,
    pub eps: Option<f64>,
    pub metric_weight: f64,
    pub picard_tolerance: f64,
    /// Global iterations (global Picard) or the maximum per step (per-step).
    pub picard_iterations: usize,
    /// Weighted distances between successive Picard iterates.
    pub picard_distances: Vec<f64>,
    pub unweighted_distances: Vec<f64>,
    /// Ratios of successive weighted distances.
    pub contraction_ratios: Vec<f64>,
    pub newton_phase_total: usize,
    pub newton_thermal_total: usize,
    pub retried_steps: usize,
    pub max_mean_drift: f64,
    pub min_theta: f64,
    pub max_enthalpy_residual: f64,
    pub energy_balance_residual: f64,
    pub final_phase_energy: f64,
    /// `||mu||_{L^2(0,T;H)}`
    pub mu_l2: f64,
    /// `||beta_lambda(phi)||_{L^2(0,T;H)}`
    pub beta_l2: f64,
    pub grad_mu_sq: f64,
    pub phi_t_sq: f64,
}

/// Phase energy and interaction part.
fn phase_energy(p: &Problem, phi: &[f64]) -> Result<(f64, f64)> {
    let vol = p.grid.cell_volume();
    let inter = p.interaction_energy(phi);
    let mut pot = 0.0;
    for &x in phi {
        pot += p.graph.moreau(x)? + p.pi.primitive(x);
    }
    Ok((0.5 * p.lambda * p.grid.grad_norm_sq(phi) + inter + vol * pot, inter))
}

fn theta_energy(p: &Problem, theta: &[f64]) -> Result<f64> {
    let vol = p.grid.cell_volume();
    let mut acc = 0.0;
    for &x in theta {
        let pt = p.log.eval(x)?;
        acc += 0.5 * p.lambda * (x * x + pt.yosida * pt.yosida) + pt.resolvent;
    }
    Ok(vol * acc)
}

/// Builds the state at one level from `phi`, `mu`, `theta`.
pub(crate) fn make_state(p: &Problem, t: f64, phi: Vec<f64>, mu: Vec<f64>, theta: Vec<f64>, u: Option<Vec<f64>>) -> Result<SystemState> {
    let mut xi = Vec::with_capacity(phi.len());
    for &x in &phi {
        xi.push(p.graph.value(x)?);
    }
    let u = match u {
        Some(u) => u,
        None => {
            let mut v = Vec::with_capacity(theta.len());
            for &x in &theta {
                v.push(p.log.value(x)?);
            }
            v
        }
    };
    Ok(SystemState {
        t,
        theta: Field::new(p.grid, theta, Unit::Temperature)?,
        mu: Field::new(p.grid, mu, Unit::Potential)?,
        phi: Field::new(p.grid, phi, Unit::OrderParameter)?,
        xi: Field::new(p.grid, xi, Unit::Generic)?,
        u: Field::new(p.grid, u, Unit::Generic)?,
    })
}

/// `mu_0 = lambda A phi_0 + B phi_0 + beta_lambda(phi_0) + pi(phi_0) - theta_0`.
pub(crate) fn initial_potential(p: &Problem) -> Result<Vec<f64>> {
    let phi = p.phi0.values();
    let a = p.stiffness(phi);
    let b = p.apply_interaction(phi);
    let theta = p.theta0.values();
    let mut mu = Vec::with_capacity(phi.len());
    for i in 0..phi.len() {
        mu.push(p.lambda * a[i] + b[i] + p.graph.value(phi[i])? + p.pi.value(phi[i]) - theta[i]);
    }
    Ok(mu)
}

/// Ledger over a finished set of states.
pub(crate) fn build_ledger(p: &Problem, states: &[SystemState], info: &[StepInfo]) -> Result<Vec<StepRecord>> {
    let tau = p.tau;
    let m0 = states[0].phi.mean();
    let mut out: Vec<StepRecord> = Vec::with_capacity(states.len());
    let mut prev_energy = 0.0;
    for (n, s) in states.iter().enumerate() {
        let phi = s.phi.values();
        let theta = s.theta.values();
        let (energy, inter) = phase_energy(p, phi)?;
        let xi = s.xi.values();
        let vol = p.grid.cell_volume();
        let mut rec = StepRecord {
            t: s.t,
            mean_phi: s.phi.mean(),
            mean_drift: (s.phi.mean() - m0).abs(),
            min_theta: s.theta.min(),
            max_theta: s.theta.max(),
            phase_energy: energy,
            interaction_energy: inter,
            theta_energy: theta_energy(p, theta)?,
            beta_l1: vol * xi.iter().map(|v| v.abs()).sum::<f64>(),
            beta_l2: s.xi.norm(),
            ..StepRecord::default()
        };
        if n > 0 {
            let prev = &out[n - 1];
            let before = &states[n - 1];
            let dphi: Vec<f64> = phi.iter().zip(before.phi.values()).map(|(a, b)| a - b).collect();
            let grad_mu = tau * p.grid.grad_norm_sq(s.mu.values());
            let phi_t = p.grid.inner(&dphi, &dphi) / tau;
            let work = p.grid.inner(theta, &dphi);
            let step_residual = grad_mu + phi_t + energy - prev_energy - work;
            let i = info[n - 1];
            rec.grad_mu_sq = prev.grad_mu_sq + grad_mu;
            rec.phi_t_sq = prev.phi_t_sq + phi_t;
            rec.coupling_work = prev.coupling_work + work;
            rec.energy_balance_residual = prev.energy_balance_residual + step_residual;
            rec.grad_theta_sq = prev.grad_theta_sq + tau * p.grid.grad_norm_sq(theta);
            rec.trace_theta_sq = prev.trace_theta_sq + tau * p.grid.trace_norm_sq(theta);
            rec.enthalpy_residual = i.enthalpy_residual;
            rec.newton_phase = i.newton_phase;
            rec.newton_thermal = i.newton_thermal;
            rec.coupling_iterations = i.coupling_iterations;
            rec.retried = i.retried;
        }
        prev_energy = energy;
        out.push(rec);
    }
    Ok(out)
}

/// Summary over the ledger.
pub(crate) fn summarize(p: &Problem, states: &[SystemState], ledger: &[StepRecord]) -> RunSummary {
    let last = ledger.last().cloned().unwrap_or_default();
    let tau = p.tau;
    RunSummary {
        mode: p.mode.name().to_string(),
        coupling: match p.config.coupling {
            Coupling::GlobalPicard => "global-picard",
            Coupling::PerStep => "per-step",
        }
        .to_string(),
        steps: p.steps,
        tau,
        lambda: p.lambda,
        eps: (p.mode != Mode::Local).then_some(p.config.eps),
        metric_weight: p.metric_weight(),
        picard_tolerance: p.picard_tolerance(),
        newton_phase_total: ledger.iter().map(|r| r.newton_phase).sum(),
        newton_thermal_total: ledger.iter().map(|r| r.newton_thermal).sum(),
        retried_steps: ledger.iter().filter(|r| r.retried).count(),
        max_mean_drift: ledger.iter().map(|r| r.mean_drift).fold(0.0, f64::max),
        min_theta: ledger.iter().map(|r| r.min_theta).fold(f64::INFINITY, f64::min),
        max_enthalpy_residual: ledger.iter().map(|r| r.enthalpy_residual.abs()).fold(0.0, f64::max),
        energy_balance_residual: last.energy_balance_residual,
        final_phase_energy: last.phase_energy,
        mu_l2: (tau * states[1..].iter().map(|s| s.mu.norm().powi(2)).sum::<f64>()).sqrt(),
        beta_l2: (tau * states[1..].iter().map(|s| s.xi.norm().powi(2)).sum::<f64>()).sqrt(),
        grad_mu_sq: last.grad_mu_sq,
        phi_t_sq: last.phi_t_sq,
        ..RunSummary::default()
    }
}

/// Recomputes ledger and summary for an existing trajectory (counters are kept).
pub fn diagnose(p: &Problem, traj: &Trajectory) -> Result<(Vec<StepRecord>, RunSummary)> {
    let info: Vec<StepInfo> = traj.ledger[1..]
        .iter()
        .map(|r| StepInfo {
            newton_phase: r.newton_phase,
            newton_thermal: r.newton_thermal,
            coupling_iterations: r.coupling_iterations,
            retried: r.retried,
            enthalpy_residual: r.enthalpy_residual,
        })
        .collect();
    let ledger = build_ledger(p, &traj.states, &info)?;
    let mut summary = summarize(p, &traj.states, &ledger);
    summary.picard_iterations = traj.summary.picard_iterations;
    summary.picard_distances.clone_from(&traj.summary.picard_distances);
    summary.unweighted_distances.clone_from(&traj.summary.unweighted_distances);
    summary.contraction_ratios.clone_from(&traj.summary.contraction_ratios);
    Ok((ledger, summary))
}
