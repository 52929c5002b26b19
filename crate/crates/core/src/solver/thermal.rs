//! The temperature map: implicit Euler for
//! `(Ln_lambda(theta) - u_n)/tau + (phi_{n+1} - phi_n)/tau - Delta_h theta = f`
//! with the Robin condition `d_nu theta + theta = theta_Gamma` entering
//! through boundary-face quadrature.

use crate::error::{Error, Result};
use crate::linalg;

use super::Problem;

#[derive(Debug, Clone)]
pub struct ThermalStep {
    pub theta: Vec<f64>,
    /// `Ln_lambda(theta)`
    pub u: Vec<f64>,
    pub newton_iterations: usize,
    /// `|cell| sum [(u - u_n) + (phi_{n+1} - phi_n) + tau (g theta - q - f)]`,
    /// the discrete weak form tested with `w = 1`.
    pub enthalpy_residual: f64,
}

struct Eval {
    r: Vec<f64>,
    u: Vec<f64>,
    slope: Vec<f64>,
}

fn evaluate(p: &Problem, theta: &[f64], u_prev: &[f64], dphi: &[f64], load: &[f64], tau: f64) -> Result<Eval> {
    let n = theta.len();
    let mut y = vec![0.0; n];
    p.robin.apply(theta, &mut y);
    let mut u = Vec::with_capacity(n);
    let mut slope = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for i in 0..n {
        let pt = p.log.eval(theta[i])?;
        r.push((pt.value - u_prev[i]) / tau + dphi[i] / tau + y[i] - load[i]);
        u.push(pt.value);
        slope.push(pt.slope);
    }
    Ok(Eval { r, u, slope })
}

/// One step: given `theta_n`, `u_n = Ln_lambda(theta_n)` and the phase
/// increment `phi_{n+1} - phi_n`, returns `theta_{n+1}`.
pub fn thermal_step(
    p: &Problem,
    theta_prev: &[f64],
    u_prev: &[f64],
    dphi: &[f64],
    t_next: f64,
    step: usize,
) -> Result<ThermalStep> {
    let tau = p.tau;
    let tol = p.config.tolerances.newton;
    let f = p.source(t_next);
    let q = p.boundary_load(t_next);
    let load: Vec<f64> = f.iter().zip(&q).map(|(a, b)| a + b).collect();
    let mut theta = theta_prev.to_vec();
    let mut e = evaluate(p, &theta, u_prev, dphi, &load, tau)?;
    let mut iterations = 0;
    let mut op = p.robin.clone();
    loop {
        let scaled = tau * linalg::max_abs(&e.r);
        if scaled <= tol {
            break;
        }
        if iterations >= p.config.tolerances.newton_max_iter {
            return Err(Error::Newton {
                stage: "temperature",
                step,
                residual: scaled,
            });
        }
        iterations += 1;
        op.set_shift(e.slope.iter().map(|s| s / tau).collect());
        let rhs: Vec<f64> = e.r.iter().map(|x| -x).collect();
        let mut delta = vec![0.0; rhs.len()];
        op.solve(&rhs, &mut delta, p.config.tolerances.cg)?;
        let base = linalg::dot(&e.r, &e.r).sqrt();
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&delta).map(|(a, d)| a + alpha * d).collect();
            let et = evaluate(p, &trial, u_prev, dphi, &load, tau)?;
            let norm = linalg::dot(&et.r, &et.r).sqrt();
            if norm <= (1.0 - 1e-4 * alpha) * base || tau * linalg::max_abs(&et.r) <= tol {
                theta = trial;
                e = et;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return Err(Error::Newton {
                    stage: "temperature",
                    step,
                    residual: tau * linalg::max_abs(&e.r),
                });
            }
        }
    }
    let min = theta.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::Positivity { step, min });
    }
    let vol = p.grid.cell_volume();
    let g = p.robin.boundary_coefficients();
    let mut balance = 0.0;
    for i in 0..theta.len() {
        balance += (e.u[i] - u_prev[i]) + dphi[i] + tau * (g[i] * theta[i] - load[i]);
    }
    Ok(ThermalStep {
        theta,
        u: e.u,
        newton_iterations: iterations,
        enthalpy_residual: vol * balance,
    })
}

/// The map from phase levels `phi_0..phi_N` to temperature levels
/// `theta_0..theta_N` (with `theta_0` the initial datum).
pub fn thermal_map(p: &Problem, phis: &[&[f64]]) -> Result<Vec<ThermalStep>> {
    let theta0 = p.theta0.values().to_vec();
    let mut u_prev = Vec::with_capacity(theta0.len());
    for &v in &theta0 {
        u_prev.push(p.log.value(v)?);
    }
    let mut theta_prev = theta0;
    let mut out = Vec::with_capacity(p.steps);
    for n in 1..=p.steps {
        let dphi: Vec<f64> = phis[n].iter().zip(phis[n - 1]).map(|(a, b)| a - b).collect();
        let s = thermal_step(p, &theta_prev, &u_prev, &dphi, p.time(n), n)?;
        theta_prev.clone_from(&s.theta);
        u_prev.clone_from(&s.u);
        out.push(s);
    }
    Ok(out)
}
