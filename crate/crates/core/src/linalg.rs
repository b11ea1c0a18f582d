//! Preconditioned conjugate gradients for symmetric five-point operators.
//!
//! Operators are stored as a diagonal plus the coupling to the east and north
//! neighbor of each cell; the matrix is `A[k][k] = diag[k]`,
//! `A[k][k+1] = A[k+1][k] = -east[k]`, `A[k][k+nx] = A[k+nx][k] = -north[k]`.
//! Off-diagonal weights are stored as non-negative conductances.

use crate::error::{Error, Result};

/// Symmetric five-point stencil on an `nx` x `ny` lattice.
#[derive(Debug, Clone)]
pub struct Stencil5 {
    pub nx: usize,
    pub ny: usize,
    pub diag: Vec<f64>,
    pub east: Vec<f64>,
    pub north: Vec<f64>,
}

impl Stencil5 {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        let n = nx * ny;
        Stencil5 { nx, ny, diag: vec![0.0; n], east: vec![0.0; n], north: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds conductance `c` between neighboring cells `k` and `k + 1`.
    pub fn couple_east(&mut self, k: usize, c: f64) {
        self.east[k] += c;
        self.diag[k] += c;
        self.diag[k + 1] += c;
    }

    /// Adds conductance `c` between cells `k` and `k + nx`.
    pub fn couple_north(&mut self, k: usize, c: f64) {
        self.north[k] += c;
        self.diag[k] += c;
        self.diag[k + self.nx] += c;
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nx = self.nx;
        let n = self.len();
        for k in 0..n {
            y[k] = self.diag[k] * x[k];
        }
        for k in 0..n {
            let ce = self.east[k];
            if ce != 0.0 {
                y[k] -= ce * x[k + 1];
                y[k + 1] -= ce * x[k];
            }
            let cn = self.north[k];
            if cn != 0.0 {
                y[k] -= cn * x[k + nx];
                y[k + nx] -= cn * x[k];
            }
        }
    }
}

/// Something that can compute `y = A x` for a symmetric positive
/// (semi-)definite `A`.
pub trait LinearOperator {
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for Stencil5 {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        Stencil5::apply(self, x, y)
    }
}

/// Modified incomplete Cholesky, level zero, for a [`Stencil5`].
#[derive(Debug, Clone)]
pub struct Mic0 {
    nx: usize,
    inv_diag: Vec<f64>,
    /// `east[k] * inv_diag[k]` and `north[k] * inv_diag[k]`.
    east_scaled: Vec<f64>,
    north_scaled: Vec<f64>,
}

impl Mic0 {
    const TAU: f64 = 0.97;
    const SIGMA: f64 = 0.25;

    pub fn new(a: &Stencil5) -> Self {
        let nx = a.nx;
        let n = a.len();
        let mut inv = vec![0.0; n];
        for k in 0..n {
            if a.diag[k] <= 0.0 {
                continue;
            }
            let mut e = a.diag[k];
            if k % nx > 0 {
                let w = k - 1;
                let cw = a.east[w] * inv[w];
                e -= cw * cw + Self::TAU * a.east[w] * a.north[w] * inv[w] * inv[w];
            }
            if k >= nx {
                let s = k - nx;
                let cs = a.north[s] * inv[s];
                e -= cs * cs + Self::TAU * a.north[s] * a.east[s] * inv[s] * inv[s];
            }
            if e < Self::SIGMA * a.diag[k] {
                e = a.diag[k];
            }
            inv[k] = 1.0 / e.sqrt();
        }
        let east_scaled = a.east.iter().zip(&inv).map(|(c, d)| c * d).collect();
        let north_scaled = a.north.iter().zip(&inv).map(|(c, d)| c * d).collect();
        Mic0 { nx, inv_diag: inv, east_scaled, north_scaled }
    }

    /// Solves `L L^T z = r`.
    pub fn solve(&self, r: &[f64], z: &mut [f64]) {
        let nx = self.nx;
        let n = r.len();
        let ny = n / nx;
        let (d, e, no) = (&self.inv_diag, &self.east_scaled, &self.north_scaled);
        // forward: L q = r
        for j in 0..ny {
            let row = j * nx;
            let mut west = 0.0;
            for i in 0..nx {
                let k = row + i;
                let mut t = r[k];
                if i > 0 {
                    t += e[k - 1] * west;
                }
                if j > 0 {
                    t += no[k - nx] * z[k - nx];
                }
                west = t * d[k];
                z[k] = west;
            }
        }
        // backward: L^T z = q
        for j in (0..ny).rev() {
            let row = j * nx;
            let mut east = 0.0;
            for i in (0..nx).rev() {
                let k = row + i;
                let mut t = z[k];
                if i + 1 < nx {
                    t += e[k] * east;
                }
                if j + 1 < ny {
                    t += no[k] * z[k + nx];
                }
                east = t * d[k];
                z[k] = east;
            }
        }
    }
}

/// Stopping rule for [`pcg`].
#[derive(Debug, Clone, Copy)]
pub struct CgControl {
    /// Stop when `||r||_2 <= rel_tol * ||b||_2`.
    pub rel_tol: f64,
    /// ... or when `max |r_k| <= abs_tol`.
    pub abs_tol: f64,
    pub max_iter: usize,
    /// Remove the mean of `b` and of the residual (pure Neumann problems).
    pub remove_mean: bool,
}

impl Default for CgControl {
    fn default() -> Self {
        CgControl { rel_tol: 1e-10, abs_tol: 0.0, max_iter: 10_000, remove_mean: false }
    }
}

#[derive(Debug, Clone)]
pub struct CgReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub residual_max: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn subtract_mean(a: &mut [f64]) {
    if a.is_empty() {
        return;
    }
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    for v in a.iter_mut() {
        *v -= mean;
    }
}

/// Preconditioned CG with `x` as the initial guess (warm start).
pub fn pcg(
    op: &impl LinearOperator,
    precond: &Mic0,
    b: &[f64],
    x: &mut [f64],
    ctl: CgControl,
    solver: &'static str,
) -> Result<CgReport> {
    let n = b.len();
    let mut rhs = b.to_vec();
    if ctl.remove_mean {
        subtract_mean(&mut rhs);
    }
    let b_norm = dot(&rhs, &rhs).sqrt();
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for k in 0..n {
        r[k] = rhs[k] - r[k];
    }
    if ctl.remove_mean {
        subtract_mean(&mut r);
    }
    let converged = |r: &[f64]| {
        let rn = dot(r, r).sqrt();
        rn <= ctl.rel_tol * b_norm || max_abs(r) <= ctl.abs_tol || rn == 0.0
    };
    let mut history = Vec::new();
    if converged(&r) {
        return Ok(CgReport { iterations: 0, residual_norm: dot(&r, &r).sqrt(), residual_max: max_abs(&r) });
    }
    let mut z = vec![0.0; n];
    precond.solve(&r, &mut z);
    if ctl.remove_mean {
        subtract_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=ctl.max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rn = dot(&r, &r).sqrt();
        history.push(rn);
        if converged(&r) {
            return Ok(CgReport { iterations: it, residual_norm: rn, residual_max: max_abs(&r) });
        }
        precond.solve(&r, &mut z);
        if ctl.remove_mean {
            subtract_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    let residual = history.last().copied().unwrap_or(f64::NAN);
    Err(Error::Solver { solver, iterations: history.len(), residual, history })
}
