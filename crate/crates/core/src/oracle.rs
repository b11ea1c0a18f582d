//! Semi-analytic reference potential for a dielectric disk in free space,
//! used to validate the grid solver.
//!
//! The potential is split as `psi = (omega + phi + Phi) / kappa`:
//! `omega = -2 int f(y) ln|x - y| dy` is the free-space potential of the
//! charge density `f` (direct summation, each cell a point charge),
//! `phi` is the harmonic correction that restores the transmission conditions
//! on the disk boundary, and `Phi` carries the applied far field
//! `offset - E0 . x` together with its own interface response. Both harmonic
//! parts are Fourier series on the circle.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, Vec2};
use crate::poisson::ElectrostaticBC;

/// Far-field potential `offset - E0 . x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppliedField {
    pub e0: Vec2,
    pub offset: f64,
}

/// Disk geometry and the two dielectric constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskProblem {
    pub center: Vec2,
    pub radius: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

const SAMPLES: usize = 256;
const TAIL_TOL: f64 = 1e-10;

/// Mean of `ln|z|` over a square cell of side `h` centered at the origin.
pub fn cell_mean_log(h: f64) -> f64 {
    (0.5 * h).ln() + 0.5 * 2f64.ln() - 1.5 + 0.25 * PI
}

/// The assembled reference solution.
#[derive(Debug, Clone)]
pub struct DiskOracle {
    problem: DiskProblem,
    field: AppliedField,
    charges: Vec<(Vec2, f64)>,
    h: f64,
    /// `(cos, sin)` coefficients of the interior harmonic part, charge-driven.
    inner_charge: Vec<(f64, f64)>,
    outer_charge: Vec<(f64, f64)>,
    inner_applied: Vec<(f64, f64)>,
    outer_applied: Vec<(f64, f64)>,
}

/// The three potentials at one point; `psi = (omega + phi + big_phi) / kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub omega: f64,
    pub phi: f64,
    pub big_phi: f64,
    pub kappa: f64,
}

impl Decomposition {
    pub fn psi(&self) -> f64 {
        (self.omega + self.phi + self.big_phi) / self.kappa
    }
}

/// Builds the oracle from a cell-centered charge density `f` (the total of
/// fixed and ionic charge, so `div(kappa grad psi) = -4 pi f`).
pub fn oracle_decomposition_disk(
    charge: &ScalarField,
    grid: &Grid,
    field: AppliedField,
    problem: DiskProblem,
) -> Result<DiskOracle> {
    if !(problem.radius > 0.0 && problem.kappa1 > 0.0 && problem.kappa2 > 0.0) {
        return Err(Error::Oracle("radius and dielectric constants must be positive".into()));
    }
    let h2 = grid.cell_area();
    let mut charges = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let q = charge.at(i, j);
            if q != 0.0 {
                charges.push((grid.cell_center(i, j), q * h2));
            }
        }
    }
    let mut oracle = DiskOracle {
        problem,
        field,
        charges,
        h: grid.h,
        inner_charge: Vec::new(),
        outer_charge: Vec::new(),
        inner_applied: Vec::new(),
        outer_applied: Vec::new(),
    };

    let (k1, k2, a) = (problem.kappa1, problem.kappa2, problem.radius);
    // g = omega (1/k2 - 1/k1) sampled on the circle.
    let jump = 1.0 / k2 - 1.0 / k1;
    let g: Vec<f64> = (0..SAMPLES)
        .map(|m| {
            let t = 2.0 * PI * m as f64 / SAMPLES as f64;
            oracle.omega([problem.center[0] + a * t.cos(), problem.center[1] + a * t.sin()]) * jump
        })
        .collect();
    let modes = SAMPLES / 2;
    let mut gc = vec![(0.0, 0.0); modes];
    for (n, slot) in gc.iter_mut().enumerate() {
        let (mut c, mut s) = (0.0, 0.0);
        for (m, gv) in g.iter().enumerate() {
            let t = 2.0 * PI * (n * m) as f64 / SAMPLES as f64;
            c += gv * t.cos();
            s += gv * t.sin();
        }
        let w = if n == 0 { 1.0 } else { 2.0 } / SAMPLES as f64;
        *slot = (c * w, s * w);
    }
    let scale = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tail = gc[modes * 3 / 4..].iter().fold(0.0_f64, |m, (c, s)| m.max(c.abs()).max(s.abs()));
    if scale > 0.0 && tail > TAIL_TOL * scale {
        return Err(Error::Oracle(format!(
            "interface series does not converge (tail {tail:.3e} relative to {scale:.3e}); keep charges away from the disk boundary"
        )));
    }
    // Interior H1 = sum A_n (r/a)^n, exterior H2 = sum B_n (a/r)^n with
    // A_n - B_n = g_n and k1 A_n = -k2 B_n for n >= 1; A_0 = g_0, B_0 = 0.
    oracle.inner_charge = gc
        .iter()
        .enumerate()
        .map(|(n, (c, s))| if n == 0 { (*c, 0.0) } else { (k2 * c / (k1 + k2), k2 * s / (k1 + k2)) })
        .collect();
    oracle.outer_charge = gc
        .iter()
        .zip(&oracle.inner_charge)
        .enumerate()
        .map(|(n, ((c, s), (ac, as_)))| if n == 0 { (0.0, 0.0) } else { (ac - c, as_ - s) })
        .collect();
    // Applied field: exterior has P_1 (r/a) plus B_1 (a/r); interior A_1 (r/a).
    let p1 = (-field.e0[0] * a, -field.e0[1] * a);
    let a1 = (2.0 * k2 * p1.0 / (k1 + k2), 2.0 * k2 * p1.1 / (k1 + k2));
    oracle.inner_applied = vec![(field.offset, 0.0), a1];
    oracle.outer_applied = vec![(field.offset, 0.0), (a1.0 - p1.0, a1.1 - p1.1)];
    Ok(oracle)
}

impl DiskOracle {
    /// Free-space potential `-2 sum q ln|x - y|`; a charge sitting on the
    /// evaluation point contributes its cell-averaged logarithm.
    pub fn omega(&self, x: Vec2) -> f64 {
        let self_log = cell_mean_log(self.h);
        let tiny = 1e-9 * self.h;
        let mut w = 0.0;
        for (y, q) in &self.charges {
            let r = (x[0] - y[0]).hypot(x[1] - y[1]);
            let l = if r < tiny { self_log } else { r.ln() };
            w -= 2.0 * q * l;
        }
        w
    }

    fn series(coef: &[(f64, f64)], rho: f64, t: f64) -> f64 {
        let mut sum = 0.0;
        let mut pow = 1.0;
        for (n, (c, s)) in coef.iter().enumerate() {
            if n > 0 {
                pow *= rho;
            }
            if pow == 0.0 {
                break;
            }
            let nt = n as f64 * t;
            sum += pow * (c * nt.cos() + s * nt.sin());
        }
        sum
    }

    pub fn decompose(&self, x: Vec2) -> Decomposition {
        let p = &self.problem;
        let dx = x[0] - p.center[0];
        let dy = x[1] - p.center[1];
        let r = dx.hypot(dy);
        let t = dy.atan2(dx);
        let omega = self.omega(x);
        // The far field is written about the origin; the series about the disk center.
        let shift = -(self.field.e0[0] * p.center[0] + self.field.e0[1] * p.center[1]);
        if r <= p.radius {
            let rho = r / p.radius;
            let kappa = p.kappa1;
            Decomposition {
                omega,
                phi: kappa * Self::series(&self.inner_charge, rho, t),
                big_phi: kappa * (Self::series(&self.inner_applied, rho, t) + shift),
                kappa,
            }
        } else {
            let kappa = p.kappa2;
            let rho = p.radius / r;
            let far = -(self.field.e0[0] * dx + self.field.e0[1] * dy);
            Decomposition {
                omega,
                phi: kappa * Self::series(&self.outer_charge, rho, t),
                big_phi: kappa * (Self::series(&self.outer_applied, rho, t) + far + shift),
                kappa,
            }
        }
    }

    pub fn psi(&self, x: Vec2) -> f64 {
        self.decompose(x).psi()
    }

    /// Reference potential at every cell center.
    pub fn sample(&self, grid: &Grid) -> ScalarField {
        ScalarField::from_fn(grid, |p| self.psi(p))
    }

    /// The reference potential at the wall face midpoints, as Dirichlet data.
    pub fn boundary_condition(&self, grid: &Grid) -> ElectrostaticBC {
        ElectrostaticBC::from_fn(grid, |p| self.psi(p))
    }
}
