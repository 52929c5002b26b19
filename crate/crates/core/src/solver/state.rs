use crate::config::{Coupling, Mode};
use crate::error::{Error, Result};
use crate::grid::Field;

use super::diagnostics::{RunSummary, StepRecord};

/// One time level `(theta, mu, phi, xi)` with the cached `u = Ln_lambda(theta)`.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub t: f64,
    pub theta: Field,
    pub mu: Field,
    pub phi: Field,
    /// `beta_lambda(phi)`
    pub xi: Field,
    pub u: Field,
}

/// Time levels `t_n = n tau`, `n = 0..N`, with one ledger record per level.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mode: Mode,
    pub coupling: Coupling,
    pub tau: f64,
    pub states: Vec<SystemState>,
    pub ledger: Vec<StepRecord>,
    pub summary: RunSummary,
}

/// Mean drift allowed by the conservation check.
pub const MASS_TOL: f64 = 1e-10;

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &SystemState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn theta_levels(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.theta.values().to_vec()).collect()
    }

    /// `max_n ||phi_n - other_n||_H`.
    pub fn max_phase_distance(&self, other: &Trajectory) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::Invariant(format!(
                "trajectories have {} and {} levels",
                self.len(),
                other.len()
            )));
        }
        let mut m: f64 = 0.0;
        for (a, b) in self.states.iter().zip(&other.states) {
            m = m.max(a.phi.distance(&b.phi)?);
        }
        Ok(m)
    }

    /// Conservation, positivity, time ordering and ledger length.
    pub fn check_invariants(&self) -> Result<()> {
        if self.ledger.len() != self.states.len() {
            return Err(Error::Invariant("ledger length differs from state count".into()));
        }
        if self.states.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::Invariant("times are not strictly increasing".into()));
        }
        let m0 = self.states[0].phi.mean();
        for (n, s) in self.states.iter().enumerate() {
            let drift = (s.phi.mean() - m0).abs();
            if drift > MASS_TOL {
                return Err(Error::Invariant(format!("mean of phi drifted by {drift:e} at step {n}")));
            }
            if !(s.theta.min() > 0.0) {
                return Err(Error::Invariant(format!("temperature not positive at step {n}")));
            }
        }
        Ok(())
    }
}
