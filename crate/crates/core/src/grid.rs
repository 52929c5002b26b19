//! Uniform cell-centred discretization of rectangular boxes, scalar fields,
//! the Neumann stencil, boundary traces and the Robin weak form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, jacobi, pcg, CgOptions, CgStats};

/// Uniform box grid in 2 or 3 dimensions with nodes at cell centres.
///
/// Unused trailing axes carry one cell of unit extent so that volumes and
/// strides need no special casing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extents: [f64; 3],
    cells: [usize; 3],
}

/// A boundary face of the box, owned by one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub cell: usize,
    pub midpoint: [f64; 3],
    pub area: f64,
}

impl Grid {
    pub fn new(extents: &[f64], cells: &[usize]) -> Result<Self> {
        let dim = extents.len();
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if cells.len() != dim {
            return Err(Error::GridMismatch(format!(
                "{} extents but {} cell counts",
                dim,
                cells.len()
            )));
        }
        let mut e = [1.0; 3];
        let mut c = [1; 3];
        for axis in 0..dim {
            if !(extents[axis] > 0.0 && extents[axis].is_finite()) || cells[axis] == 0 {
                return Err(Error::GridMismatch(format!(
                    "axis {axis} needs positive extent and cell count"
                )));
            }
            e[axis] = extents[axis];
            c[axis] = cells[axis];
        }
        Ok(Self {
            dim,
            extents: e,
            cells: c,
        })
    }

    /// Unit square with `n x n` cells.
    pub fn unit_square(n: usize) -> Self {
        Self::new(&[1.0, 1.0], &[n, n]).expect("valid square grid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    pub fn nodes(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.cells[axis] as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// `|Omega|`
    pub fn volume(&self) -> f64 {
        self.extents[..self.dim].iter().product()
    }

    /// `|Gamma|`
    pub fn boundary_measure(&self) -> f64 {
        let e = &self.extents;
        match self.dim {
            2 => 2.0 * (e[0] + e[1]),
            _ => 2.0 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2]),
        }
    }

    pub fn diameter(&self) -> f64 {
        self.extents[..self.dim].iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.cells[0] * (ijk[1] + self.cells[1] * ijk[2])
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.cells;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn center(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = (c[axis] as f64 + 0.5) * self.spacing(axis);
        }
        x
    }

    pub fn centers(&self) -> Vec<[f64; 3]> {
        (0..self.nodes()).map(|i| self.center(i)).collect()
    }

    /// All boundary faces, each with its midpoint and area (length in 2D).
    pub fn boundary_faces(&self) -> Vec<Face> {
        let mut faces = Vec::new();
        for axis in 0..self.dim {
            let area: f64 = (0..self.dim)
                .filter(|&a| a != axis)
                .map(|a| self.spacing(a))
                .product();
            for idx in 0..self.nodes() {
                let c = self.coords(idx);
                for (side, at) in [(0usize, 0.0), (self.cells[axis] - 1, self.extents[axis])] {
                    if c[axis] == side {
                        let mut midpoint = self.center(idx);
                        midpoint[axis] = at;
                        faces.push(Face {
                            cell: idx,
                            midpoint,
                            area,
                        });
                    }
                }
            }
        }
        faces
    }

    /// Per-cell sum of boundary face areas.
    pub fn trace_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.nodes()];
        for f in self.boundary_faces() {
            w[f.cell] += f.area;
        }
        w
    }

    /// `Delta_h u` with ghost reflection (homogeneous Neumann).
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.laplacian_into(u, &mut out);
        out
    }

    pub fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        let [nx, ny, nz] = self.cells;
        let inv_h2 = [
            1.0 / (self.spacing(0) * self.spacing(0)),
            1.0 / (self.spacing(1) * self.spacing(1)),
            1.0 / (self.spacing(2) * self.spacing(2)),
        ];
        let strides = [1, nx, nx * ny];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let idx = i + nx * (j + ny * k);
                    let c = [i, j, k];
                    let mut acc = 0.0;
                    for axis in 0..self.dim {
                        let s = strides[axis];
                        let mut flux = 0.0;
                        if c[axis] > 0 {
                            flux += u[idx - s] - u[idx];
                        }
                        if c[axis] + 1 < self.cells[axis] {
                            flux += u[idx + s] - u[idx];
                        }
                        acc += flux * inv_h2[axis];
                    }
                    out[idx] = acc;
                }
            }
        }
    }

    /// Diagonal of `-Delta_h` per node.
    pub fn laplacian_diagonal_vec(&self) -> Vec<f64> {
        (0..self.nodes())
            .map(|idx| {
                let c = self.coords(idx);
                (0..self.dim)
                    .map(|axis| {
                        let links = (c[axis] > 0) as usize + (c[axis] + 1 < self.cells[axis]) as usize;
                        links as f64 / (self.spacing(axis) * self.spacing(axis))
                    })
                    .sum()
            })
            .collect()
    }

    /// Interior diagonal of `-Delta_h`.
    pub fn laplacian_diagonal(&self) -> f64 {
        (0..self.dim).map(|a| 2.0 / (self.spacing(a) * self.spacing(a))).sum()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume() * linalg::dot(a, b)
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    pub fn mean_of(&self, a: &[f64]) -> f64 {
        linalg::arithmetic_mean(a)
    }

    /// `||grad_h u||_H^2 = (-Delta_h u, u)_H`, summed over interior faces.
    pub fn grad_norm_sq(&self, u: &[f64]) -> f64 {
        let strides = [1, self.cells[0], self.cells[0] * self.cells[1]];
        let mut acc = 0.0;
        for axis in 0..self.dim {
            let h = self.spacing(axis);
            let mut s = 0.0;
            for idx in 0..u.len() {
                if self.coords(idx)[axis] + 1 < self.cells[axis] {
                    let d = u[idx + strides[axis]] - u[idx];
                    s += d * d;
                }
            }
            acc += s / (h * h);
        }
        acc * self.cell_volume()
    }

    /// `||u||_{L^2(Gamma)}^2` with the one-sided trace.
    pub fn trace_norm_sq(&self, u: &[f64]) -> f64 {
        self.boundary_faces().iter().map(|f| f.area * u[f.cell] * u[f.cell]).sum()
    }

    fn check(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Physical meaning of a field; carried into snapshot headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    Temperature,
    OrderParameter,
    Potential,
    Generic,
}

/// Node values on a grid. Values are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    unit: Unit,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, unit: Unit) -> Result<Self> {
        if values.len() != grid.nodes() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.nodes()
            )));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        Ok(Self { grid, unit, values })
    }

    pub fn constant(grid: Grid, value: f64, unit: Unit) -> Self {
        assert!(value.is_finite());
        Self {
            grid,
            unit,
            values: vec![value; grid.nodes()],
        }
    }

    pub fn from_fn(grid: Grid, unit: Unit, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let values = (0..grid.nodes()).map(|i| f(grid.center(i))).collect();
        Self::new(grid, values, unit)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    pub fn mean(&self) -> f64 {
        mean(self)
    }

    pub fn norm(&self) -> f64 {
        self.grid.norm(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(self, other)_H`
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.grid.check(&other.grid)?;
        Ok(self.grid.inner(&self.values, &other.values))
    }

    pub fn distance(&self, other: &Field) -> Result<f64> {
        self.grid.check(&other.grid)?;
        let d: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(self.grid.norm(&d))
    }
}

/// `Delta_h phi` with homogeneous Neumann reflection.
pub fn laplacian_neumann(phi: &Field) -> Field {
    Field {
        grid: phi.grid,
        unit: phi.unit,
        values: phi.grid.laplacian(&phi.values),
    }
}

/// Cell-weighted average.
pub fn mean(phi: &Field) -> f64 {
    linalg::arithmetic_mean(&phi.values)
}

/// Face quadrature of `phi * g` over the boundary.
pub fn trace_integral(phi: &Field, g: impl Fn([f64; 3]) -> f64) -> f64 {
    phi.grid
        .boundary_faces()
        .iter()
        .map(|f| f.area * phi.values[f.cell] * g(f.midpoint))
        .sum()
}

/// Mean-zero solution of `-Delta_h u = v`, defining `||v||_{V0*}^2 = (v, N v)_H`.
pub fn inv_neumann_laplacian(v: &Field) -> Result<Field> {
    let grid = v.grid;
    let m = mean(v);
    let scale = v.norm() / grid.volume().sqrt();
    if m.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) && m != 0.0 {
        return Err(Error::NonzeroMean { mean: m });
    }
    let op = |x: &[f64], y: &mut [f64]| {
        grid.laplacian_into(x, y);
        y.iter_mut().for_each(|v| *v = -*v);
    };
    let diag = grid.laplacian_diagonal_vec();
    let mut u = vec![0.0; grid.nodes()];
    pcg(
        &op,
        jacobi(&diag),
        &v.values,
        &mut u,
        CgOptions {
            mean_zero: true,
            ..CgOptions::default()
        },
    )?;
    Field::new(grid, u, v.unit)
}

/// Solution of `(-Delta_h + I) u = v`, defining `||v||_{V*}^2 = (v, F^{-1} v)_H`.
pub fn riesz_inverse(v: &Field) -> Result<Field> {
    let grid = v.grid;
    let op = |x: &[f64], y: &mut [f64]| {
        grid.laplacian_into(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - *yi;
        }
    };
    let diag: Vec<f64> = grid.laplacian_diagonal_vec().iter().map(|d| d + 1.0).collect();
    let mut u = vec![0.0; grid.nodes()];
    pcg(&op, jacobi(&diag), &v.values, &mut u, CgOptions::default())?;
    Field::new(grid, u, v.unit)
}

/// `||v||_{V*}^2`
pub fn dual_norm_sq(v: &Field) -> Result<f64> {
    v.inner(&riesz_inverse(v)?)
}

/// The Robin weak form `(grad theta, grad w) + (theta, w)_Gamma + (shift theta, w)`
/// scaled by the cell volume, i.e. `-Delta_h + diag(shift + g_i / |cell|)`.
#[derive(Debug, Clone)]
pub struct RobinOperator {
    grid: Grid,
    boundary: Vec<f64>,
    shift: Vec<f64>,
}

impl RobinOperator {
    pub fn new(grid: Grid) -> Self {
        let vol = grid.cell_volume();
        let boundary = grid.trace_weights().into_iter().map(|g| g / vol).collect();
        Self {
            grid,
            boundary,
            shift: vec![0.0; grid.nodes()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Boundary coefficient `g_i / |cell|` per node.
    pub fn boundary_coefficients(&self) -> &[f64] {
        &self.boundary
    }

    pub fn set_shift(&mut self, shift: Vec<f64>) {
        assert_eq!(shift.len(), self.grid.nodes());
        self.shift = shift;
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.grid.laplacian_into(x, y);
        for i in 0..x.len() {
            y[i] = -y[i] + (self.boundary[i] + self.shift[i]) * x[i];
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.grid
            .laplacian_diagonal_vec()
            .into_iter()
            .zip(self.boundary.iter().zip(&self.shift))
            .map(|(d, (b, s))| d + b + s)
            .collect()
    }

    pub fn solve(&self, rhs: &[f64], x: &mut [f64], rel_tol: f64) -> Result<CgStats> {
        let diag = self.diagonal();
        pcg(
            &|a: &[f64], b: &mut [f64]| self.apply(a, b),
            jacobi(&diag),
            rhs,
            x,
            CgOptions {
                rel_tol,
                ..CgOptions::default()
            },
        )
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.grid.nodes();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        m
    }
}

/// Stationary Robin problem `-Delta theta = source` with
/// `d_nu theta + theta = theta_gamma`, in cell-scaled strong form.
#[derive(Debug, Clone)]
pub struct RobinSystem {
    pub operator: RobinOperator,
    pub rhs: Vec<f64>,
}

/// Assembles the weak-form operator and right side for boundary data
/// `theta_gamma` (evaluated at face midpoints) and a volume source.
pub fn robin_system(theta_gamma: impl Fn([f64; 3]) -> f64, source: &Field) -> Result<RobinSystem> {
    let grid = *source.grid();
    let vol = grid.cell_volume();
    let mut rhs = source.values.clone();
    for f in grid.boundary_faces() {
        let g = theta_gamma(f.midpoint);
        if !g.is_finite() {
            return Err(Error::NonFinite { node: f.cell });
        }
        rhs[f.cell] += f.area * g / vol;
    }
    Ok(RobinSystem {
        operator: RobinOperator::new(grid),
        rhs,
    })
}

impl RobinSystem {
    pub fn solve(&self) -> Result<Field> {
        let mut x = vec![0.0; self.rhs.len()];
        self.operator.solve(&self.rhs, &mut x, 1e-12)?;
        Field::new(self.operator.grid, x, Unit::Temperature)
    }
}
