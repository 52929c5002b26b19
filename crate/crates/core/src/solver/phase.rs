//! The phase map: implicit Euler for
//! `(phi - phi_n)/tau = Delta_h mu`,
//! `mu = (phi - phi_n)/tau - lambda Delta_h phi + B phi + beta_lambda(phi) + pi(phi) - theta`.
//!
//! The first equation gives `mu = -N(phi - phi_n)/tau + mean(mu)` with `N` the
//! mean-zero inverse of `-Delta_h`, so Newton runs on the mean-zero increment
//! `v = phi - phi_n` alone:
//! `F(v) = P[N v / tau + G(phi_n + v)] = 0`, `P` the mean-removing projection.

use crate::error::{Error, Result};
use crate::linalg::{self, pcg, CgOptions};

use super::Problem;

#[derive(Debug, Clone)]
pub struct PhaseStep {
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub newton_iterations: usize,
    /// Max-norm of `F` at acceptance.
    pub residual: f64,
    /// Whether the step needed the two-half-step retry.
    pub retried: bool,
}

/// `G(phi) = (phi - phi_n)/tau + lambda A phi + B phi + beta_lambda(phi) + pi(phi) - theta`.
fn potential(p: &Problem, phi: &[f64], phi_prev: &[f64], theta: &[f64], tau: f64) -> Result<Vec<f64>> {
    let a = p.stiffness(phi);
    let b = p.apply_interaction(phi);
    let mut g = Vec::with_capacity(phi.len());
    for i in 0..phi.len() {
        let beta = p.graph.value(phi[i])?;
        g.push((phi[i] - phi_prev[i]) / tau + p.lambda * a[i] + b[i] + beta + p.pi.value(phi[i]) - theta[i]);
    }
    Ok(g)
}

struct Residual {
    f: Vec<f64>,
    g_mean: f64,
    nv: Vec<f64>,
}

fn residual(p: &Problem, v: &[f64], phi_prev: &[f64], theta: &[f64], tau: f64) -> Result<Residual> {
    let phi: Vec<f64> = phi_prev.iter().zip(v).map(|(a, b)| a + b).collect();
    let g = potential(p, &phi, phi_prev, theta, tau)?;
    let nv = p.basis.neumann_inverse(v);
    let mut f: Vec<f64> = nv.iter().zip(&g).map(|(n, gi)| n / tau + gi).collect();
    linalg::remove_mean(&mut f);
    Ok(Residual {
        f,
        g_mean: linalg::arithmetic_mean(&g),
        nv,
    })
}

fn l2(x: &[f64]) -> f64 {
    linalg::dot(x, x).sqrt()
}

fn solve_once(p: &Problem, phi_prev: &[f64], theta: &[f64], tau: f64) -> Result<PhaseStep> {
    let n = phi_prev.len();
    let tol = p.config.tolerances.newton;
    let mut v = vec![0.0; n];
    let mut r = residual(p, &v, phi_prev, theta, tau)?;
    let mut iterations = 0;
    loop {
        let norm = linalg::max_abs(&r.f);
        if norm <= tol {
            let mu: Vec<f64> = r.nv.iter().map(|x| -x / tau + r.g_mean).collect();
            let phi = phi_prev.iter().zip(&v).map(|(a, b)| a + b).collect();
            return Ok(PhaseStep {
                phi,
                mu,
                newton_iterations: iterations,
                residual: norm,
                retried: false,
            });
        }
        if iterations >= p.config.tolerances.newton_max_iter {
            return Err(Error::Newton {
                stage: "phase",
                step: 0,
                residual: norm,
            });
        }
        iterations += 1;

        let phi: Vec<f64> = phi_prev.iter().zip(&v).map(|(a, b)| a + b).collect();
        let mut slope = Vec::with_capacity(n);
        for &x in &phi {
            slope.push(p.graph.slope(x)? + p.pi.slope(x));
        }
        let shift_mean = linalg::arithmetic_mean(&slope);
        let jac = |x: &[f64], y: &mut [f64]| {
            let nx = p.basis.neumann_inverse(x);
            let ax = p.stiffness(x);
            let bx = p.apply_interaction(x);
            for i in 0..x.len() {
                y[i] = nx[i] / tau + x[i] / tau + p.lambda * ax[i] + bx[i] + slope[i] * x[i];
            }
        };
        let precond = |x: &[f64], y: &mut [f64]| {
            let z = p.basis.apply_spectral(x, |k, a| {
                if k == 0 {
                    0.0
                } else {
                    let d = 1.0 / (tau * a) + 1.0 / tau + shift_mean + p.lambda * a + p.symbol[k];
                    1.0 / d.max(1e-3 / tau)
                }
            });
            y.copy_from_slice(&z);
        };
        let rhs: Vec<f64> = r.f.iter().map(|x| -x).collect();
        let mut delta = vec![0.0; n];
        pcg(
            &jac,
            precond,
            &rhs,
            &mut delta,
            CgOptions {
                rel_tol: p.config.tolerances.cg,
                mean_zero: true,
                ..CgOptions::default()
            },
        )?;

        // backtracking on ||F||_2
        let base = l2(&r.f);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, d)| a + alpha * d).collect();
            let rt = residual(p, &trial, phi_prev, theta, tau)?;
            if l2(&rt.f) <= (1.0 - 1e-4 * alpha) * base || linalg::max_abs(&rt.f) <= tol {
                v = trial;
                r = rt;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return Err(Error::Newton {
                    stage: "phase",
                    step: 0,
                    residual: linalg::max_abs(&r.f),
                });
            }
        }
    }
}

/// One implicit step from `phi_prev` with the temperature `theta_next` at the new level.
///
/// On Newton failure the step is retried once as two half steps.
pub fn phase_step(p: &Problem, phi_prev: &[f64], theta_next: &[f64], step: usize) -> Result<PhaseStep> {
    match solve_once(p, phi_prev, theta_next, p.tau) {
        Ok(s) => Ok(s),
        Err(Error::Newton { .. }) | Err(Error::LinearSolve { .. }) => {
            let fail = |e: Error| match e {
                Error::Newton { residual, .. } => Error::Newton {
                    stage: "phase",
                    step,
                    residual,
                },
                other => other,
            };
            let half = solve_once(p, phi_prev, theta_next, 0.5 * p.tau).map_err(fail)?;
            let mut second = solve_once(p, &half.phi, theta_next, 0.5 * p.tau).map_err(fail)?;
            second.newton_iterations += half.newton_iterations;
            second.retried = true;
            Ok(second)
        }
        Err(e) => Err(e),
    }
}

/// The map from a temperature trajectory `theta_1..theta_N` to the phase
/// trajectory `(phi_n, mu_n)`, `n = 1..N`, started from `phi_0`.
pub fn phase_map(p: &Problem, thetas: &[Vec<f64>]) -> Result<Vec<PhaseStep>> {
    let mut out: Vec<PhaseStep> = Vec::with_capacity(p.steps);
    let mut prev = p.phi0.values().to_vec();
    for (n, theta) in thetas.iter().enumerate().take(p.steps + 1).skip(1) {
        let s = phase_step(p, &prev, theta, n)?;
        prev.clone_from(&s.phi);
        out.push(s);
    }
    Ok(out)
}
