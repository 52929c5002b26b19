//! Run configuration: TOML schema, defaults, and validation against the
//! modelling assumptions C1-C8.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::expr::Expr;
use crate::graphs::{MonotoneGraph, Perturbation};
use crate::grid::{Field, Grid, Unit};
use crate::kernel::{KernelFamily, KernelKind, Quadrature, StorageMode, DEFAULT_DENSE_NODE_CAP, DEFAULT_GAUSSIAN_CUTOFF};
use crate::linalg::CosineBasis;

/// Which system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Nonlocal operator with Yosida-regularized graph and temperature law.
    #[default]
    EpsLambda,
    /// Same discretization at the configured (small) lambda, reporting the selection.
    Eps,
    /// Nonlocal operator replaced by the Neumann Laplacian.
    Local,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::EpsLambda => "eps-lambda",
            Mode::Eps => "eps",
            Mode::Local => "local",
        }
    }

    pub fn uses_kernel(self) -> bool {
        self != Mode::Local
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "eps-lambda" => Ok(Mode::EpsLambda),
            "eps" => Ok(Mode::Eps),
            "local" => Ok(Mode::Local),
            other => Err(format!("unknown mode '{other}' (expected eps-lambda, eps or local)")),
        }
    }
}

/// How the phase and temperature subproblems are coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    /// Fixed point over whole trajectories.
    #[default]
    GlobalPicard,
    /// Fixed point inside each time step.
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            extents: vec![1.0, 1.0],
            cells: vec![16, 16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSpec {
    pub family: KernelKind,
    /// Overrides the profile normalization; must equal `c_d` to pass C1.
    pub normalization: Option<f64>,
    pub gaussian_cutoff: f64,
    pub storage: StorageMode,
    pub dense_node_cap: usize,
    pub quadrature: Quadrature,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            family: KernelKind::Polynomial,
            normalization: None,
            gaussian_cutoff: DEFAULT_GAUSSIAN_CUTOFF,
            storage: StorageMode::Auto,
            dense_node_cap: DEFAULT_DENSE_NODE_CAP,
            quadrature: Quadrature::MomentCorrected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSpec {
    /// `kappa` in `pi(r) = -kappa r`.
    pub coefficient: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self { coefficient: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemperatureSpec {
    /// `theta_*`
    pub lower: f64,
    /// `theta^*`
    pub upper: f64,
    pub initial: Expr,
    /// Boundary temperature, a function of position and time.
    pub boundary: Expr,
    /// Volume source `f`.
    pub source: Expr,
}

impl Default for TemperatureSpec {
    fn default() -> Self {
        Self {
            lower: 0.5,
            upper: 2.0,
            initial: Expr::constant(1.0),
            boundary: Expr::constant(1.0),
            source: Expr::constant(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseSpec {
    pub initial: Expr,
    /// Explicit `phi_{0,eps}`; defaults to `phi_0` (or its mollification).
    pub initial_eps: Option<Expr>,
    /// Explicit `phi_{0,eps,lambda}`; defaults to `phi_{0,eps}` (or its mollification).
    pub initial_eps_lambda: Option<Expr>,
    /// `[a_0, b_0]`; defaults to the degenerate window at `mean(phi_{0,eps})`.
    pub mean_window: Option<[f64; 2]>,
    /// Generate eps- and lambda-dependent data by smoothing `phi_0`.
    pub mollify: bool,
}

impl Default for PhaseSpec {
    fn default() -> Self {
        Self {
            initial: Expr::sum(vec![Expr::constant(0.1), Expr::cos(0.3, &[1, 1])]),
            initial_eps: None,
            initial_eps_lambda: None,
            mean_window: None,
            mollify: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Max-norm residual for both Newton solvers.
    pub newton: f64,
    /// Picard stopping tolerance relative to the trajectory energy scale.
    pub picard: f64,
    /// Relative residual of inner CG solves.
    pub cg: f64,
    pub newton_max_iter: usize,
    pub picard_max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton: 1e-9,
            picard: 1e-10,
            cg: 1e-10,
            newton_max_iter: 50,
            picard_max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub lambda_ladder: Vec<f64>,
    pub eps_ladder: Vec<f64>,
    /// Radius for the kernel tail check along an eps-ladder.
    pub tail_delta: f64,
    /// Number of random probes in operator batteries.
    pub probes: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            lambda_ladder: (0..6).map(|k| 0.5 / f64::powi(2.0, k)).collect(),
            eps_ladder: (0..4).map(|k| 0.4 / f64::powi(2.0, k)).collect(),
            tail_delta: 0.3,
            probes: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    /// Defaults to `final_time / 200`.
    #[serde(default)]
    pub time_step: Option<f64>,
    #[serde(default = "default_graph")]
    pub graph: MonotoneGraph,
    #[serde(default)]
    pub coupling: Coupling,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub temperature: TemperatureSpec,
    #[serde(default)]
    pub phase: PhaseSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn default_eps() -> f64 {
    0.2
}

fn default_lambda() -> f64 {
    0.5
}

fn default_final_time() -> f64 {
    0.1
}

fn default_graph() -> MonotoneGraph {
    MonotoneGraph::Power
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

/// Initial phase data in its three variants.
#[derive(Debug, Clone)]
pub struct PhaseData {
    pub phi0: Field,
    pub phi0_eps: Field,
    pub phi0_eps_lambda: Field,
}

/// Environment variables read by [`RunConfig::apply_overrides`].
pub const ENV_NEWTON_TOL: &str = "PHASEFIELD_NEWTON_TOL";
pub const ENV_PICARD_TOL: &str = "PHASEFIELD_PICARD_TOL";
pub const ENV_CG_TOL: &str = "PHASEFIELD_CG_TOL";

fn schema(msg: impl Into<String>) -> Error {
    Error::config(Assumption::Schema, msg)
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| schema(e.to_string().trim_end().to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies tolerance overrides from a variable lookup (normally the process environment).
    pub fn apply_overrides(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        for (key, slot) in [
            (ENV_NEWTON_TOL, &mut self.tolerances.newton),
            (ENV_PICARD_TOL, &mut self.tolerances.picard),
            (ENV_CG_TOL, &mut self.tolerances.cg),
        ] {
            if let Some(raw) = get(key) {
                let v: f64 = raw.trim().parse().map_err(|_| schema(format!("{key}={raw} is not a number")))?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(schema(format!("{key} must be positive, got {v}")));
                }
                *slot = v;
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        if g.extents.len() != g.cells.len() {
            return Err(schema("grid.extents and grid.cells differ in length"));
        }
        if !(2..=3).contains(&g.cells.len()) {
            return Err(schema(format!("grid must be 2- or 3-dimensional, got {}", g.cells.len())));
        }
        Grid::new(&g.extents, &g.cells).map_err(|e| schema(e.to_string()))
    }

    pub fn time_step(&self) -> f64 {
        self.time_step.unwrap_or(self.final_time / 200.0)
    }

    pub fn steps(&self) -> usize {
        (self.final_time / self.time_step()).round() as usize
    }

    pub fn perturbation(&self) -> Perturbation {
        Perturbation {
            coefficient: self.perturbation.coefficient,
        }
    }

    pub fn kernel_family(&self, dim: usize) -> Result<KernelFamily> {
        let mut f = KernelFamily::new(self.kernel.family, dim)?;
        f.gaussian_cutoff = self.kernel.gaussian_cutoff;
        if let Some(m) = self.kernel.normalization {
            f.normalization = m;
        }
        Ok(f)
    }

    pub fn assembly_options(&self) -> crate::kernel::AssemblyOptions {
        crate::kernel::AssemblyOptions {
            storage: self.kernel.storage,
            dense_node_cap: self.kernel.dense_node_cap,
            quadrature: self.kernel.quadrature,
        }
    }

    /// Exponential weight `L = 2 ||pi'||_inf + 3 / lambda` of the trajectory metric.
    pub fn metric_weight(&self) -> f64 {
        2.0 * self.perturbation().lipschitz() + 3.0 / self.lambda
    }

    /// Evaluates `phi_0`, `phi_{0,eps}`, `phi_{0,eps,lambda}` on the grid.
    pub fn phase_data(&self, grid: &Grid) -> Result<PhaseData> {
        let ext = grid.extents();
        let eval = |e: &Expr| {
            let vals: Vec<f64> = grid.centers().into_iter().map(|x| e.eval(x, 0.0, ext)).collect();
            Field::new(*grid, vals, Unit::OrderParameter)
        };
        let phi0 = eval(&self.phase.initial)?;
        let basis = self.phase.mollify.then(|| CosineBasis::new(grid));
        let smooth = |f: &Field, s: f64| -> Result<Field> {
            match &basis {
                Some(b) => Field::new(*grid, b.apply_spectral(f.values(), |_, e| 1.0 / (1.0 + s * e)), Unit::OrderParameter),
                None => Ok(f.clone()),
            }
        };
        let phi0_eps = match &self.phase.initial_eps {
            Some(e) => eval(e)?,
            None if self.mode.uses_kernel() => smooth(&phi0, self.eps * self.eps)?,
            None => phi0.clone(),
        };
        let phi0_eps_lambda = match &self.phase.initial_eps_lambda {
            Some(e) => eval(e)?,
            None => smooth(&phi0_eps, self.lambda)?,
        };
        Ok(PhaseData {
            phi0,
            phi0_eps,
            phi0_eps_lambda,
        })
    }

    pub fn initial_temperature(&self, grid: &Grid) -> Result<Field> {
        let ext = grid.extents();
        let vals = grid.centers().into_iter().map(|x| self.temperature.initial.eval(x, 0.0, ext)).collect();
        Field::new(*grid, vals, Unit::Temperature)
    }

    /// Full validation for a single run.
    pub fn validate(&self) -> Result<()> {
        self.validate_with_ladder(None)
    }

    /// Validation; with an eps-ladder the kernel is self-tested on every
    /// rung and its tail is checked along the ladder.
    pub fn validate_with_ladder(&self, eps_ladder: Option<&[f64]>) -> Result<()> {
        let grid = self.grid()?;
        self.check_schema()?;
        self.check_c1(&grid, eps_ladder)?;
        self.check_c2()?;
        self.check_c3()?;
        self.check_c4(&grid)?;
        self.check_c5(&grid)?;
        let data = self.check_c6(&grid)?;
        self.check_c7(&grid, &data, eps_ladder)?;
        self.check_c8(&data)?;
        Ok(())
    }

    fn check_schema(&self) -> Result<()> {
        let t = self.final_time;
        if !(t > 0.0 && t.is_finite()) {
            return Err(schema(format!("final_time must be positive, got {t}")));
        }
        let tau = self.time_step();
        if !(tau > 0.0 && tau <= t) {
            return Err(schema(format!("time_step must lie in (0, final_time], got {tau}")));
        }
        let n = self.steps();
        if ((n as f64) * tau - t).abs() > 1e-9 * t {
            return Err(schema(format!("final_time {t} is not a multiple of time_step {tau}")));
        }
        let tol = &self.tolerances;
        for (name, v) in [("newton", tol.newton), ("picard", tol.picard), ("cg", tol.cg)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(schema(format!("tolerances.{name} must be positive, got {v}")));
            }
        }
        if self.kernel.gaussian_cutoff <= 0.0 {
            return Err(schema("kernel.gaussian_cutoff must be positive"));
        }
        Ok(())
    }

    fn check_c1(&self, grid: &Grid, eps_ladder: Option<&[f64]>) -> Result<()> {
        if !self.mode.uses_kernel() && eps_ladder.is_none() {
            return Ok(());
        }
        let family = self.kernel_family(grid.dim())?;
        let (ladder, tail) = match eps_ladder {
            Some(l) => (l.to_vec(), Some(self.sweep.tail_delta)),
            None => (vec![self.eps], None),
        };
        family
            .self_test(&ladder, tail)
            .map_err(|m| Error::config(Assumption::C1, format!("kernel family fails its self-test: {m}")))
    }

    fn check_c2(&self) -> Result<()> {
        let g = self.graph;
        if !g.domain().contains_interior(0.0) && g.domain().lower != 0.0 {
            return Err(Error::config(Assumption::C2, format!("0 is not in the domain of the {} graph", g.name())));
        }
        if !g.primitive_vanishes_at_zero() {
            return Err(Error::config(
                Assumption::C2,
                format!("the {} graph has beta_hat(0) = {} but C2 requires beta_hat(0) = 0", g.name(), g.primitive(0.0)),
            ));
        }
        Ok(())
    }

    fn check_c3(&self) -> Result<()> {
        let k = self.perturbation.coefficient;
        if !k.is_finite() {
            return Err(Error::config(Assumption::C3, format!("pi must be Lipschitz, got coefficient {k}")));
        }
        if k.abs() * self.time_step() >= 1.0 {
            return Err(schema(format!(
                "time_step {} times |pi'| = {} must be below 1 for the implicit phase step",
                self.time_step(),
                k.abs()
            )));
        }
        Ok(())
    }

    /// Sample times `t_n = n tau`.
    fn sample_times(&self) -> Vec<f64> {
        let tau = self.time_step();
        (0..=self.steps()).map(|n| n as f64 * tau).collect()
    }

    fn check_c4(&self, grid: &Grid) -> Result<()> {
        let ext = grid.extents();
        let centers = grid.centers();
        let times = if self.temperature.source.is_static() { vec![0.0] } else { self.sample_times() };
        for t in times {
            for x in &centers {
                let v = self.temperature.source.eval(*x, t, ext);
                if !v.is_finite() {
                    return Err(Error::config(
                        Assumption::C4,
                        format!("source f must be finite (got {v} at x = {:?}, t = {t})", &x[..grid.dim()]),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_c5(&self, grid: &Grid) -> Result<()> {
        let (lo, hi) = (self.temperature.lower, self.temperature.upper);
        if !(lo > 0.0) {
            return Err(Error::config(Assumption::C5, format!("theta_lower must be positive, got {lo}")));
        }
        if !(hi >= lo && hi.is_finite()) {
            return Err(Error::config(
                Assumption::C5,
                format!("theta_upper must be finite and at least theta_lower, got [{lo}, {hi}]"),
            ));
        }
        let inside = |v: f64| v >= lo && v <= hi;
        let theta0 = self.initial_temperature(grid).map_err(|_| {
            Error::config(Assumption::C5, "initial temperature must be finite")
        })?;
        if let Some(v) = theta0.values().iter().find(|v| !inside(**v)) {
            return Err(Error::config(Assumption::C5, format!("initial temperature {v} outside [{lo}, {hi}]")));
        }
        let ext = grid.extents();
        let times = if self.temperature.boundary.is_static() { vec![0.0] } else { self.sample_times() };
        for t in times {
            for f in grid.boundary_faces() {
                let v = self.temperature.boundary.eval(f.midpoint, t, ext);
                if !inside(v) {
                    return Err(Error::config(
                        Assumption::C5,
                        format!("boundary temperature {v} at t = {t} outside [{lo}, {hi}]"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_c6(&self, grid: &Grid) -> Result<PhaseData> {
        let data = self
            .phase_data(grid)
            .map_err(|_| Error::config(Assumption::C6, "initial phase must be finite"))?;
        let g = self.graph;
        let m = data.phi0.mean();
        if !g.domain().contains_interior(m) {
            return Err(Error::config(
                Assumption::C6,
                format!("mean of phi_0 = {m} must lie in Int D(beta) of the {} graph", g.name()),
            ));
        }
        check_primitive(g, &data.phi0, Assumption::C6, "phi_0")?;
        Ok(data)
    }

    fn check_c7(&self, grid: &Grid, data: &PhaseData, eps_ladder: Option<&[f64]>) -> Result<()> {
        if self.mode.uses_kernel() || eps_ladder.is_some() {
            let mut all = vec![self.eps];
            all.extend(eps_ladder.unwrap_or(&[]));
            for e in all {
                if !(e > 0.0 && e < 1.0) {
                    return Err(Error::config(Assumption::C7, format!("eps must lie in (0, 1), got {e}")));
                }
            }
        }
        if let Some(l) = eps_ladder {
            let h = grid.max_spacing();
            if let Some(e) = l.iter().find(|e| **e < 3.0 * h) {
                return Err(schema(format!("eps = {e} is below grid resolution (3h = {})", 3.0 * h)));
            }
        }
        let g = self.graph;
        let m = data.phi0_eps.mean();
        let [a, b] = self.phase.mean_window.unwrap_or([m, m]);
        let dom = g.domain();
        if !(a <= b && dom.contains_interior(a) && dom.contains_interior(b)) {
            return Err(Error::config(
                Assumption::C7,
                format!("mean window [{a}, {b}] must be an interval inside Int D(beta) of the {} graph", g.name()),
            ));
        }
        let slack = 1e-12 * m.abs().max(1.0);
        if m < a - slack || m > b + slack {
            return Err(Error::config(
                Assumption::C7,
                format!("mean of phi_0,eps = {m} outside the window [{a}, {b}]"),
            ));
        }
        check_primitive(g, &data.phi0_eps, Assumption::C7, "phi_0,eps")
    }

    fn check_c8(&self, data: &PhaseData) -> Result<()> {
        let l = self.lambda;
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::config(Assumption::C8, format!("lambda must lie in (0, 1), got {l}")));
        }
        let (a, b) = (data.phi0_eps_lambda.mean(), data.phi0_eps.mean());
        if (a - b).abs() > 1e-10 * b.abs().max(1.0) {
            return Err(Error::config(
                Assumption::C8,
                format!("mean of phi_0,eps,lambda = {a} differs from mean of phi_0,eps = {b}"),
            ));
        }
        Ok(())
    }
}

fn check_primitive(g: MonotoneGraph, phi: &Field, label: Assumption, name: &str) -> Result<()> {
    if let Some(v) = phi.values().iter().find(|v| !g.primitive(**v).is_finite()) {
        return Err(Error::config(
            label,
            format!("beta_hat({name}) must be integrable, but {name} takes the value {v} outside D(beta)"),
        ));
    }
    Ok(())
}
