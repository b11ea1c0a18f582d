//! Variable-coefficient Poisson problem `div(kappa grad psi) = rhs` with
//! Dirichlet data on the enclosure walls, plus field, stress and energy.
//!
//! Cell balance: `sum_faces kappa_f (psi_nb - psi) = rhs h^2`, where a wall
//! face contributes `2 kappa_f (Psi_f - psi)` (the wall sits half a cell away).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, MacField, ScalarField, Vec2, VectorField};
use crate::linalg::{pcg, CgControl, CgReport, Mic0, Stencil5};
use crate::nernst_planck::SpeciesParams;

/// Potential prescribed on the enclosure wall, sampled at boundary face
/// midpoints. Constant in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrostaticBC {
    /// Values on the x = x_min wall, one per row.
    pub west: Vec<f64>,
    pub east: Vec<f64>,
    /// Values on the y = y_min wall, one per column.
    pub south: Vec<f64>,
    pub north: Vec<f64>,
}

impl ElectrostaticBC {
    pub fn from_fn(grid: &Grid, f: impl Fn(Vec2) -> f64) -> Self {
        ElectrostaticBC {
            west: (0..grid.ny).map(|j| f(grid.xface_center(0, j))).collect(),
            east: (0..grid.ny).map(|j| f(grid.xface_center(grid.nx, j))).collect(),
            south: (0..grid.nx).map(|i| f(grid.yface_center(i, 0))).collect(),
            north: (0..grid.nx).map(|i| f(grid.yface_center(i, grid.ny))).collect(),
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self::from_fn(grid, |_| value)
    }

    /// Uniform applied field `E`: `Psi(x) = offset - E . x`.
    pub fn linear(grid: &Grid, field: Vec2, offset: f64) -> Self {
        Self::from_fn(grid, |p| offset - field[0] * p[0] - field[1] * p[1])
    }

    /// Explicit wall values; lengths must match the grid.
    pub fn tabulated(grid: &Grid, west: Vec<f64>, east: Vec<f64>, south: Vec<f64>, north: Vec<f64>) -> Result<Self> {
        let bc = ElectrostaticBC { west, east, south, north };
        bc.check(grid)?;
        Ok(bc)
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.west.len() != grid.ny
            || self.east.len() != grid.ny
            || self.south.len() != grid.nx
            || self.north.len() != grid.nx
        {
            return Err(Error::InvariantViolation("boundary table does not match the grid".into()));
        }
        if !self.values().all(f64::is_finite) {
            return Err(Error::InvariantViolation("boundary potential is not finite".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.west.iter().chain(&self.east).chain(&self.south).chain(&self.north).copied()
    }

    pub fn min(&self) -> f64 {
        self.values().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == 0.0)
    }
}

/// `rhs = -4 pi e sum_i Z_i N_i chi_fluid - 4 pi rho`.
pub fn assemble_rhs(
    n: &[ScalarField],
    species: &[SpeciesParams],
    rho: &ScalarField,
    chi_fluid: &ScalarField,
    e_charge: f64,
) -> Result<ScalarField> {
    if n.len() != species.len() {
        return Err(Error::InvariantViolation(format!(
            "{} concentration fields for {} species",
            n.len(),
            species.len()
        )));
    }
    let four_pi = 4.0 * std::f64::consts::PI;
    let mut out = ScalarField { nx: rho.nx, ny: rho.ny, data: rho.data.iter().map(|r| -four_pi * r).collect() };
    for (s, (ni, sp)) in n.iter().zip(species).enumerate() {
        if let Some(k) = ni.data.iter().position(|v| *v < 0.0) {
            return Err(Error::InvariantViolation(format!("species {s} has negative concentration at cell {k}")));
        }
        if sp.z == 0 {
            continue;
        }
        let c = -four_pi * e_charge * sp.z as f64;
        for ((o, v), w) in out.data.iter_mut().zip(&ni.data).zip(&chi_fluid.data) {
            *o += c * v * w;
        }
    }
    Ok(out)
}

/// Stencil for `-h^2 div(kappa grad .)` with Dirichlet walls, and the
/// boundary part of the right-hand side.
pub fn poisson_matrix(grid: &Grid, kappa_face: &MacField, bc: &ElectrostaticBC) -> (Stencil5, Vec<f64>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut a = Stencil5::zeros(nx, ny);
    let mut b = vec![0.0; grid.n_cells()];
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            if i + 1 < nx {
                a.couple_east(k, kappa_face.u_at(i + 1, j));
            }
            if j + 1 < ny {
                a.couple_north(k, kappa_face.v_at(i, j + 1));
            }
        }
    }
    for j in 0..ny {
        let (kw, ke) = (grid.idx(0, j), grid.idx(nx - 1, j));
        let cw = 2.0 * kappa_face.u_at(0, j);
        let ce = 2.0 * kappa_face.u_at(nx, j);
        a.diag[kw] += cw;
        b[kw] += cw * bc.west[j];
        a.diag[ke] += ce;
        b[ke] += ce * bc.east[j];
    }
    for i in 0..nx {
        let (ks, kn) = (grid.idx(i, 0), grid.idx(i, ny - 1));
        let cs = 2.0 * kappa_face.v_at(i, 0);
        let cn = 2.0 * kappa_face.v_at(i, ny);
        a.diag[ks] += cs;
        b[ks] += cs * bc.south[i];
        a.diag[kn] += cn;
        b[kn] += cn * bc.north[i];
    }
    (a, b)
}

/// Solves the transmission problem. `guess` warm-starts the iteration.
pub fn solve_poisson(
    grid: &Grid,
    kappa_face: &MacField,
    rhs: &ScalarField,
    bc: &ElectrostaticBC,
    tol: f64,
    guess: Option<&ScalarField>,
) -> Result<(ScalarField, CgReport)> {
    if let Some(bad) = kappa_face.u.iter().chain(&kappa_face.v).find(|k| !(**k > 0.0)) {
        return Err(Error::InvariantViolation(format!("dielectric coefficient must be positive, got {bad}")));
    }
    bc.check(grid)?;
    let (a, mut b) = poisson_matrix(grid, kappa_face, bc);
    let h2 = grid.cell_area();
    for (bk, r) in b.iter_mut().zip(&rhs.data) {
        *bk -= h2 * r;
    }
    let mut x = match guess {
        Some(g) if g.matches(grid) && g.is_finite() => g.data.clone(),
        _ => vec![0.0; grid.n_cells()],
    };
    let pc = Mic0::new(&a);
    let ctl = CgControl { rel_tol: tol, max_iter: 20 * (grid.nx + grid.ny) + 1000, ..Default::default() };
    let report = pcg(&a, &pc, &b, &mut x, ctl, "poisson")?;
    Ok((ScalarField { nx: grid.nx, ny: grid.ny, data: x }, report))
}

/// Discrete harmonic extension of the wall data.
pub fn harmonic_lift(grid: &Grid, kappa_face: &MacField, bc: &ElectrostaticBC) -> Result<ScalarField> {
    Ok(solve_poisson(grid, kappa_face, &ScalarField::zeros(grid), bc, 1e-12, None)?.0)
}

/// `grad psi` at cell centers: centered inside, one-sided in boundary cells.
pub fn potential_gradient(psi: &ScalarField, grid: &Grid) -> VectorField {
    let (nx, ny) = (grid.nx, grid.ny);
    let h = grid.h;
    let mut g = VectorField::zeros(grid);
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            g.x.data[k] = if i == 0 {
                (psi.at(1, j) - psi.at(0, j)) / h
            } else if i == nx - 1 {
                (psi.at(i, j) - psi.at(i - 1, j)) / h
            } else {
                (psi.at(i + 1, j) - psi.at(i - 1, j)) / (2.0 * h)
            };
            g.y.data[k] = if j == 0 {
                (psi.at(i, 1) - psi.at(i, 0)) / h
            } else if j == ny - 1 {
                (psi.at(i, j) - psi.at(i, j - 1)) / h
            } else {
                (psi.at(i, j + 1) - psi.at(i, j - 1)) / (2.0 * h)
            };
        }
    }
    g
}

/// Cell-centered symmetric stress tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub xx: ScalarField,
    pub xy: ScalarField,
    pub yy: ScalarField,
}

/// `sigma_ij = (kappa2 / 4 pi) (d_i psi d_j psi - 1/2 delta_ij |grad psi|^2)`.
/// In two dimensions this is trace-free.
pub fn maxwell_stress(psi: &ScalarField, kappa2: f64, grid: &Grid) -> TensorField {
    maxwell_stress_from_gradient(&potential_gradient(psi, grid), kappa2)
}

pub fn maxwell_stress_from_gradient(g: &VectorField, kappa2: f64) -> TensorField {
    let c = kappa2 / (4.0 * std::f64::consts::PI);
    let n = g.x.data.len();
    let mut xx = Vec::with_capacity(n);
    let mut xy = Vec::with_capacity(n);
    let mut yy = Vec::with_capacity(n);
    for k in 0..n {
        let (gx, gy) = (g.x.data[k], g.y.data[k]);
        let half = 0.5 * (gx * gx + gy * gy);
        xx.push(c * (gx * gx - half));
        xy.push(c * gx * gy);
        yy.push(c * (gy * gy - half));
    }
    let (nx, ny) = (g.x.nx, g.x.ny);
    TensorField {
        xx: ScalarField { nx, ny, data: xx },
        xy: ScalarField { nx, ny, data: xy },
        yy: ScalarField { nx, ny, data: yy },
    }
}

/// `E_el = 1/2 int kappa |grad psi|^2 + int rhs psi`, i.e. with the assembled
/// source `1/2 int kappa |grad psi|^2 - 4 pi e sum int Z N psi - 4 pi int rho psi`.
///
/// Face quadrature matching the discrete operator, so the discrete solution
/// is the exact minimizer over fields with the same wall data.
pub fn electrostatic_energy(
    psi: &ScalarField,
    kappa_face: &MacField,
    bc: &ElectrostaticBC,
    rhs: &ScalarField,
    grid: &Grid,
) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut grad2 = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                let d = psi.at(i + 1, j) - psi.at(i, j);
                grad2 += kappa_face.u_at(i + 1, j) * d * d;
            }
            if j + 1 < ny {
                let d = psi.at(i, j + 1) - psi.at(i, j);
                grad2 += kappa_face.v_at(i, j + 1) * d * d;
            }
        }
    }
    for j in 0..ny {
        let dw = bc.west[j] - psi.at(0, j);
        let de = bc.east[j] - psi.at(nx - 1, j);
        grad2 += 2.0 * kappa_face.u_at(0, j) * dw * dw + 2.0 * kappa_face.u_at(nx, j) * de * de;
    }
    for i in 0..nx {
        let ds = bc.south[i] - psi.at(i, 0);
        let dn = bc.north[i] - psi.at(i, ny - 1);
        grad2 += 2.0 * kappa_face.v_at(i, 0) * ds * ds + 2.0 * kappa_face.v_at(i, ny) * dn * dn;
    }
    let source: f64 = rhs.data.iter().zip(&psi.data).map(|(r, p)| r * p).sum();
    0.5 * grad2 + source * grid.cell_area()
}

/// Applies the discrete operator `div(kappa grad .)` with homogeneous walls.
pub fn apply_operator(psi: &ScalarField, kappa_face: &MacField, grid: &Grid) -> ScalarField {
    let (a, _) = poisson_matrix(grid, kappa_face, &ElectrostaticBC::constant(grid, 0.0));
    let mut y = vec![0.0; grid.n_cells()];
    a.apply(&psi.data, &mut y);
    let h2 = grid.cell_area();
    ScalarField { nx: grid.nx, ny: grid.ny, data: y.into_iter().map(|v| -v / h2).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_kappa(g: &Grid) -> MacField {
        MacField::filled(g, 1.0)
    }

    #[test]
    fn rhs_examples() {
        let g = Grid::new(8, 8, 0.0, 1.0, 0.0, 1.0).unwrap();
        let zero = ScalarField::zeros(&g);
        let sp = [SpeciesParams { z: 1, d: 1.0 }];
        let r = assemble_rhs(std::slice::from_ref(&zero), &sp, &zero, &ScalarField::filled(&g, 1.0), 1.0).unwrap();
        assert_eq!(r.max_abs(), 0.0);

        let mut chi_f = ScalarField::filled(&g, 1.0);
        *chi_f.at_mut(3, 3) = 0.0;
        let c = 0.7;
        let r = assemble_rhs(&[ScalarField::filled(&g, c)], &sp, &zero, &chi_f, 1.0).unwrap();
        assert!((r.at(0, 0) + 4.0 * PI * c).abs() < 1e-14);
        assert_eq!(r.at(3, 3), 0.0);

        let pair = [SpeciesParams { z: 1, d: 1.0 }, SpeciesParams { z: -1, d: 2.0 }];
        let rho = ScalarField::from_fn(&g, |p| p[0] * p[1]);
        let n = ScalarField::from_fn(&g, |p| 1.0 + p[0]);
        let r = assemble_rhs(&[n.clone(), n], &pair, &rho, &chi_f, 1.0).unwrap();
        for (a, b) in r.data.iter().zip(&rho.data) {
            assert!((a + 4.0 * PI * b).abs() < 1e-13);
        }
        let mut neg = ScalarField::zeros(&g);
        neg.data[5] = -1e-3;
        assert!(matches!(assemble_rhs(&[neg], &sp, &zero, &chi_f, 1.0), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn constant_wall_data_gives_constant_solution() {
        let g = Grid::new(20, 16, 0.0, 1.25, 0.0, 1.0).unwrap();
        let (psi, _) = solve_poisson(
            &g,
            &unit_kappa(&g),
            &ScalarField::zeros(&g),
            &ElectrostaticBC::constant(&g, 2.5),
            1e-12,
            None,
        )
        .unwrap();
        assert!(psi.data.iter().all(|v| (v - 2.5).abs() < 1e-9));
    }

    #[test]
    fn point_charge_matches_log_potential() {
        // rhs = -4 pi q delta  =>  psi = -2 q ln r + const in free space.
        let g = Grid::new(128, 128, -4.0, 4.0, -4.0, 4.0).unwrap();
        let s = 0.15;
        let q = 1.0;
        let rhs = ScalarField::from_fn(&g, |p| {
            let r2 = p[0] * p[0] + p[1] * p[1];
            -4.0 * PI * q * (-r2 / (2.0 * s * s)).exp() / (2.0 * PI * s * s)
        });
        // Wall data from the exact free-space potential removes truncation.
        let exact = |p: Vec2| -2.0 * q * (p[0] * p[0] + p[1] * p[1]).sqrt().ln();
        let bc = ElectrostaticBC::from_fn(&g, exact);
        let (psi, _) = solve_poisson(&g, &unit_kappa(&g), &rhs, &bc, 1e-11, None).unwrap();
        let mut worst: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = g.cell_center(i, j);
                if p[0].hypot(p[1]) > 1.0 {
                    worst = worst.max((psi.at(i, j) - exact(p)).abs());
                }
            }
        }
        assert!(worst < 5e-3, "{worst}");
    }

    #[test]
    fn gradient_examples() {
        let g = Grid::new(16, 16, 0.0, 1.0, 0.0, 1.0).unwrap();
        let lin = ScalarField::from_fn(&g, |p| 2.0 * p[0] - 0.5 * p[1]);
        let e = potential_gradient(&lin, &g);
        for k in 0..g.n_cells() {
            assert!((e.x.data[k] - 2.0).abs() < 1e-12 && (e.y.data[k] + 0.5).abs() < 1e-12);
        }
        assert_eq!(potential_gradient(&ScalarField::filled(&g, 3.0), &g).x.max_abs(), 0.0);
    }

    #[test]
    fn gradient_is_second_order_inside() {
        let mut errs = Vec::new();
        for n in [32, 64] {
            let g = Grid::new(n, n, 0.0, 3.0, 0.0, 3.0).unwrap();
            let f = ScalarField::from_fn(&g, |p| p[0].sin() * p[1].sin());
            let e = potential_gradient(&f, &g);
            let mut worst: f64 = 0.0;
            for j in 1..n - 1 {
                for i in 1..n - 1 {
                    let p = g.cell_center(i, j);
                    worst = worst.max((e.x.at(i, j) - p[0].cos() * p[1].sin()).abs());
                    worst = worst.max((e.y.at(i, j) - p[0].sin() * p[1].cos()).abs());
                }
            }
            errs.push(worst);
        }
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn stress_examples() {
        let g = Grid::new(8, 8, 0.0, 1.0, 0.0, 1.0).unwrap();
        let s = maxwell_stress(&ScalarField::filled(&g, 1.0), 1.0, &g);
        assert_eq!(s.xx.max_abs() + s.xy.max_abs() + s.yy.max_abs(), 0.0);
        let e = 1.7;
        let s = maxwell_stress(&ScalarField::from_fn(&g, |p| e * p[0]), 4.0 * PI, &g);
        for k in 0..g.n_cells() {
            assert!((s.xx.data[k] - e * e / 2.0).abs() < 1e-12);
            assert!((s.yy.data[k] + e * e / 2.0).abs() < 1e-12);
            assert!(s.xy.data[k].abs() < 1e-12);
        }
    }

    #[test]
    fn stress_divergence_is_charge_times_field() {
        // div sigma = (kappa lap psi / 4 pi) grad psi for uniform kappa.
        let kappa = 2.0;
        let mut errs = Vec::new();
        for n in [32, 64] {
            let g = Grid::new(n, n, 0.0, 2.0, 0.0, 2.0).unwrap();
            let psi = ScalarField::from_fn(&g, |p| (1.3 * p[0]).sin() * (0.7 * p[1]).cos() + 0.2 * p[0] * p[1]);
            let s = maxwell_stress(&psi, kappa, &g);
            let lap = apply_operator(&psi, &MacField::filled(&g, 1.0), &g);
            let grad = potential_gradient(&psi, &g);
            let h = g.h;
            let mut worst: f64 = 0.0;
            for j in 2..n - 2 {
                for i in 2..n - 2 {
                    let dx =
                        (s.xx.at(i + 1, j) - s.xx.at(i - 1, j) + s.xy.at(i, j + 1) - s.xy.at(i, j - 1)) / (2.0 * h);
                    let expect = kappa * lap.at(i, j) / (4.0 * PI) * grad.x.at(i, j);
                    worst = worst.max((dx - expect).abs());
                }
            }
            errs.push(worst);
        }
        assert!(errs[1] < errs[0] * 0.6, "{errs:?}");
    }

    #[test]
    fn energy_zero_and_positive() {
        let g = Grid::new(32, 32, -1.0, 1.0, -1.0, 1.0).unwrap();
        let k = unit_kappa(&g);
        let bc0 = ElectrostaticBC::constant(&g, 0.0);
        let z = ScalarField::zeros(&g);
        assert_eq!(electrostatic_energy(&z, &k, &bc0, &z, &g), 0.0);
        let rho = ScalarField::from_fn(&g, |p| (-(p[0] * p[0] + p[1] * p[1]) / 0.02).exp());
        let rhs = ScalarField { nx: g.nx, ny: g.ny, data: rho.data.iter().map(|r| -4.0 * PI * r).collect() };
        let (psi, _) = solve_poisson(&g, &k, &rhs, &bc0, 1e-12, None).unwrap();
        // Field self-energy is positive; at the minimizer E_el = -1/2 of it.
        let e = electrostatic_energy(&psi, &k, &bc0, &rhs, &g);
        let field = e - rhs.data.iter().zip(&psi.data).map(|(r, p)| r * p).sum::<f64>() * g.cell_area();
        assert!(field > 0.0);
        assert!((e + field).abs() < 1e-8 * field);
    }

    #[test]
    fn lift_matches_wall_data_bounds() {
        let g = Grid::new(24, 24, 0.0, 1.0, 0.0, 1.0).unwrap();
        let bc = ElectrostaticBC::from_fn(&g, |p| (3.0 * p[0]).sin() + p[1]);
        let lift = harmonic_lift(&g, &unit_kappa(&g), &bc).unwrap();
        let (lo, hi) = (bc.min(), bc.max());
        assert!(lift.data.iter().all(|v| *v >= lo - 1e-10 && *v <= hi + 1e-10));
    }
}
