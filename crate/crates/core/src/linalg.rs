//! Vector kernels, preconditioned conjugate gradient, and the separable
//! cosine-basis solver for Neumann problems on boxes.

use crate::error::{Error, Result};
use crate::grid::Grid;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn arithmetic_mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

pub fn remove_mean(a: &mut [f64]) {
    let m = arithmetic_mean(a);
    for v in a.iter_mut() {
        *v -= m;
    }
}

/// Symmetric positive (semi)definite operator acting on node vectors.
pub trait LinearOperator {
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for F {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self(x, y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Restrict the iteration to mean-zero vectors (Neumann problems).
    pub mean_zero: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 5000,
            mean_zero: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Preconditioned conjugate gradient. `x` holds the initial guess on entry.
pub fn pcg<A, P>(op: &A, precond: P, b: &[f64], x: &mut [f64], opts: CgOptions) -> Result<CgStats>
where
    A: LinearOperator + ?Sized,
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut b = b.to_vec();
    if opts.mean_zero {
        remove_mean(&mut b);
        remove_mean(x);
    }
    let b_norm = dot(&b, &b).sqrt();
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(CgStats {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(&b) {
        *ri = bi - *ri;
    }
    if opts.mean_zero {
        remove_mean(&mut r);
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    if opts.mean_zero {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    for it in 0..opts.max_iter {
        if rel <= opts.rel_tol {
            return Ok(CgStats {
                iterations: it,
                rel_residual: rel,
            });
        }
        op.apply(&p, &mut q);
        if opts.mean_zero {
            remove_mean(&mut q);
        }
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        axpy(alpha, &p, x);
        axpy(-alpha, &q, &mut r);
        precond(&r, &mut z);
        if opts.mean_zero {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        rel = dot(&r, &r).sqrt() / b_norm;
    }
    if rel <= opts.rel_tol {
        return Ok(CgStats {
            iterations: opts.max_iter,
            rel_residual: rel,
        });
    }
    Err(Error::LinearSolve {
        iterations: opts.max_iter,
        residual: rel,
    })
}

/// Jacobi preconditioner from a diagonal.
pub fn jacobi(diag: &[f64]) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |r, z| {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(diag) {
            *zi = ri / di;
        }
    }
}

/// Orthonormal eigenbasis of the cell-centred Neumann Laplacian on a box.
///
/// The 1D eigenvectors are `cos(k pi (i + 1/2) / n)` with eigenvalues
/// `(2/h^2)(1 - cos(k pi / n))` of `-Delta_h`; the box operator is their
/// tensor product, so every solve with a function of `-Delta_h` reduces to
/// two separable transforms.
#[derive(Debug, Clone)]
pub struct CosineBasis {
    cells: [usize; 3],
    dim: usize,
    /// per axis, row-major `n x n` matrix with `basis[k * n + i]`
    basis: [Vec<f64>; 3],
    eig: [Vec<f64>; 3],
}

impl CosineBasis {
    pub fn new(grid: &Grid) -> Self {
        let cells = grid.cells();
        let mut basis: [Vec<f64>; 3] = Default::default();
        let mut eig: [Vec<f64>; 3] = Default::default();
        for axis in 0..3 {
            let n = cells[axis];
            let h = grid.spacing(axis);
            let mut b = vec![0.0; n * n];
            let mut e = vec![0.0; n];
            for k in 0..n {
                let norm = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                for i in 0..n {
                    b[k * n + i] =
                        norm * (k as f64 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos();
                }
                e[k] = if axis < grid.dim() {
                    2.0 / (h * h) * (1.0 - (k as f64 * std::f64::consts::PI / n as f64).cos())
                } else {
                    0.0
                };
            }
            basis[axis] = b;
            eig[axis] = e;
        }
        Self {
            cells,
            dim: grid.dim(),
            basis,
            eig,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Eigenvalue of `-Delta_h` for the mode with flat index `idx`.
    pub fn eigenvalue(&self, idx: usize) -> f64 {
        let [nx, ny, _] = self.cells;
        let kx = idx % nx;
        let ky = (idx / nx) % ny;
        let kz = idx / (nx * ny);
        self.eig[0][kx] + self.eig[1][ky] + self.eig[2][kz]
    }

    /// Mode indices `(kx, ky, kz)` for a flat index.
    pub fn mode(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.cells;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    fn transform(&self, data: &mut [f64], transpose: bool) {
        let mut scratch = vec![0.0; data.len()];
        for axis in 0..self.dim {
            self.along_axis(data, &mut scratch, axis, transpose);
            data.copy_from_slice(&scratch);
        }
    }

    fn along_axis(&self, src: &[f64], dst: &mut [f64], axis: usize, transpose: bool) {
        let n = self.cells[axis];
        let stride: usize = self.cells[..axis].iter().product();
        let m = &self.basis[axis];
        let len = src.len();
        let block = stride * n;
        for outer in (0..len).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for k in 0..n {
                    let mut acc = 0.0;
                    for i in 0..n {
                        let coef = if transpose { m[k * n + i] } else { m[i * n + k] };
                        acc += coef * src[base + i * stride];
                    }
                    dst[base + k * stride] = acc;
                }
            }
        }
    }

    /// Coefficients of `v` in the orthonormal basis.
    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.transform(&mut out, true);
        out
    }

    pub fn backward(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = coeffs.to_vec();
        self.transform(&mut out, false);
        out
    }

    /// Applies `g(-Delta_h)` where `g` receives the flat mode index and the eigenvalue.
    pub fn apply_spectral<G: Fn(usize, f64) -> f64>(&self, v: &[f64], g: G) -> Vec<f64> {
        let mut c = self.forward(v);
        for (idx, ci) in c.iter_mut().enumerate() {
            *ci *= g(idx, self.eigenvalue(idx));
        }
        self.backward(&c)
    }

    /// Mean-zero solution of `-Delta_h u = v - mean(v)`.
    pub fn neumann_inverse(&self, v: &[f64]) -> Vec<f64> {
        self.apply_spectral(v, |idx, e| if idx == 0 { 0.0 } else { 1.0 / e })
    }

    /// Solution of `(-Delta_h + I) u = v`.
    pub fn riesz_inverse(&self, v: &[f64]) -> Vec<f64> {
        self.apply_spectral(v, |_, e| 1.0 / (1.0 + e))
    }
}
