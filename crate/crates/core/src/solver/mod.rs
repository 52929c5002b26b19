//! Time discretization of the coupled system: the phase map, the
//! temperature map, and their composition by Picard iteration.

mod coupling;
mod diagnostics;
mod phase;
mod state;
mod thermal;

use std::sync::Arc;

pub use coupling::{contraction_ratio, random_theta_trajectory, solve, solve_global_picard, solve_per_step, trajectory_distance};
pub use diagnostics::{diagnose, RunSummary, StepRecord};
pub use phase::{phase_map, phase_step, PhaseStep};
pub use state::{SystemState, Trajectory};
pub use thermal::{thermal_map, thermal_step, ThermalStep};

use crate::config::{Mode, RunConfig};
use crate::error::Result;
use crate::graphs::{Perturbation, ShiftedLog, Yosida};
use crate::grid::{Field, Grid, RobinOperator};
use crate::kernel::{assemble, NonlocalOperator};
use crate::linalg::CosineBasis;

/// Everything a solve needs, assembled once from a validated config.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: RunConfig,
    pub grid: Grid,
    pub mode: Mode,
    pub lambda: f64,
    pub tau: f64,
    pub steps: usize,
    pub graph: Yosida,
    pub pi: Perturbation,
    pub log: ShiftedLog,
    /// `None` in local mode, where `-Delta_h` takes its place.
    pub nonlocal: Option<Arc<NonlocalOperator>>,
    pub basis: Arc<CosineBasis>,
    /// Cosine-basis symbol of the nonlocal (or local) operator, for preconditioning.
    pub symbol: Arc<Vec<f64>>,
    pub robin: RobinOperator,
    pub phi0: Field,
    pub theta0: Field,
}

impl Problem {
    /// Validates the config and assembles the operators.
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        Self::assemble(config, None)
    }

    /// Like [`Problem::new`] but reuses an assembled nonlocal operator
    /// (sweeps over lambda share one). The config must already be validated.
    pub fn with_operator(config: &RunConfig, op: Option<Arc<NonlocalOperator>>) -> Result<Self> {
        Self::assemble(config, op)
    }

    fn assemble(config: &RunConfig, op: Option<Arc<NonlocalOperator>>) -> Result<Self> {
        let grid = config.grid()?;
        let basis = Arc::new(CosineBasis::new(&grid));
        let nonlocal = match (config.mode.uses_kernel(), op) {
            (false, _) => None,
            (true, Some(op)) => Some(op),
            (true, None) => {
                let family = config.kernel_family(grid.dim())?;
                Some(Arc::new(assemble(&grid, config.eps, &family, &config.assembly_options())?))
            }
        };
        let symbol = match &nonlocal {
            Some(op) => op.cosine_symbol(),
            None => (0..basis.len()).map(|k| basis.eigenvalue(k)).collect(),
        };
        let data = config.phase_data(&grid)?;
        let phi0 = match config.mode {
            Mode::EpsLambda => data.phi0_eps_lambda,
            Mode::Eps => data.phi0_eps,
            Mode::Local => data.phi0,
        };
        Ok(Self {
            config: config.clone(),
            grid,
            mode: config.mode,
            lambda: config.lambda,
            tau: config.time_step(),
            steps: config.steps(),
            graph: config.graph.yosida_view(config.lambda),
            pi: config.perturbation(),
            log: ShiftedLog::new(config.lambda),
            nonlocal,
            basis,
            symbol: Arc::new(symbol),
            robin: RobinOperator::new(grid),
            phi0,
            theta0: config.initial_temperature(&grid)?,
        })
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }

    /// `B_eps x`, or `-Delta_h x` in local mode.
    pub fn apply_interaction(&self, x: &[f64]) -> Vec<f64> {
        match &self.nonlocal {
            Some(op) => op.apply_slice(x),
            None => self.grid.laplacian(x).into_iter().map(|v| -v).collect(),
        }
    }

    /// `E_eps(x)`, or `1/2 ||grad_h x||^2` in local mode.
    pub fn interaction_energy(&self, x: &[f64]) -> f64 {
        match &self.nonlocal {
            Some(op) => op.energy_slice(x),
            None => 0.5 * self.grid.grad_norm_sq(x),
        }
    }

    /// `-Delta_h x`
    pub fn stiffness(&self, x: &[f64]) -> Vec<f64> {
        self.grid.laplacian(x).into_iter().map(|v| -v).collect()
    }

    /// Boundary load `sum_faces |face| theta_Gamma(face, t) / |cell|` per node.
    pub fn boundary_load(&self, t: f64) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        let ext = self.grid.extents();
        let mut q = vec![0.0; self.grid.nodes()];
        for f in self.grid.boundary_faces() {
            q[f.cell] += f.area * self.config.temperature.boundary.eval(f.midpoint, t, ext) / vol;
        }
        q
    }

    /// Source `f(., t)` at the nodes.
    pub fn source(&self, t: f64) -> Vec<f64> {
        let ext = self.grid.extents();
        self.grid
            .centers()
            .into_iter()
            .map(|x| self.config.temperature.source.eval(x, t, ext))
            .collect()
    }

    /// `L = 2 ||pi'|| + 3 / lambda`.
    pub fn metric_weight(&self) -> f64 {
        self.config.metric_weight()
    }

    /// Scale for the Picard tolerance: `T ||theta_0||_H^2`.
    pub fn energy_scale(&self) -> f64 {
        (self.steps as f64 * self.tau * self.theta0.norm().powi(2)).max(f64::MIN_POSITIVE)
    }

    /// Absolute Picard tolerance on the squared trajectory distance.
    pub fn picard_tolerance(&self) -> f64 {
        self.config.tolerances.picard * self.energy_scale()
    }
}
