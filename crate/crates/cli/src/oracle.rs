//! Solver checks against the analytic disk solutions.

use ekflow::geometry::{build_phase_map, PhaseMap, PhaseParams, RigidPose, ShapeSpec};
use ekflow::nernst_planck::{boltzmann_profile, np_stable_dt, step_np, SpeciesParams};
use ekflow::oracle::{oracle_decomposition_disk, AppliedField, DiskProblem};
use ekflow::poisson::{potential_gradient, solve_poisson};
use ekflow::{Grid, MacField, Result, ScalarField};
use rayon::prelude::*;

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub metrics: Vec<(&'static str, f64)>,
}

impl Check {
    pub fn to_json(&self) -> serde_json::Value {
        let metrics: serde_json::Map<String, serde_json::Value> =
            self.metrics.iter().map(|(k, v)| (k.to_string(), serde_json::json!(v))).collect();
        serde_json::json!({ "check": self.name, "pass": self.pass, "metrics": metrics })
    }
}

const DISK: DiskProblem = DiskProblem { center: [0.05, -0.03], radius: 0.3, kappa1: 4.0, kappa2: 1.0 };

fn setup(n: usize, disk: DiskProblem) -> Result<(Grid, PhaseMap)> {
    let grid = Grid::new(n, n, -1.0, 1.0, -1.0, 1.0)?;
    let params = PhaseParams { kappa1: disk.kappa1, kappa2: disk.kappa2, mu_p: 1.0, mu_f: 1.0 };
    let phase =
        build_phase_map(&RigidPose::at_rest(disk.center), &ShapeSpec::Disk { radius: disk.radius }, &grid, params)?;
    Ok((grid, phase))
}

fn blob(grid: &Grid, center: [f64; 2], radius: f64, amplitude: f64) -> ScalarField {
    ScalarField::from_fn(grid, |p| {
        let r2 = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)) / (radius * radius);
        if r2 < 1.0 {
            amplitude * (1.0 - r2).powi(2)
        } else {
            0.0
        }
    })
}

/// Discrete L2 distance between the solver and the oracle, plus the largest
/// relative deviation of `-grad psi` from `expected` deeper than a quarter
/// radius inside the disk.
fn compare(
    n: usize,
    f: impl Fn(&Grid) -> ScalarField,
    field: AppliedField,
    expected: Option<[f64; 2]>,
) -> Result<(f64, f64)> {
    let (grid, phase) = setup(n, DISK)?;
    let charge = f(&grid);
    let oracle = oracle_decomposition_disk(&charge, &grid, field, DISK)?;
    let rhs = ScalarField { nx: n, ny: n, data: charge.data.iter().map(|q| -4.0 * std::f64::consts::PI * q).collect() };
    let (psi, _) = solve_poisson(&grid, &phase.kappa_face, &rhs, &oracle.boundary_condition(&grid), 1e-12, None)?;
    let reference = oracle.sample(&grid);
    let l2 = psi.data.iter().zip(&reference.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() * grid.h;
    let mut worst = 0.0_f64;
    if let Some(e) = expected {
        let g = potential_gradient(&psi, &grid);
        let norm = e[0].hypot(e[1]);
        for k in 0..grid.n_cells() {
            if phase.sd.data[k] < -0.25 * DISK.radius {
                worst = worst.max((-g.x.data[k] - e[0]).hypot(-g.y.data[k] - e[1]) / norm);
            }
        }
    }
    Ok((l2, worst))
}

fn transmission() -> Result<Check> {
    let e0 = [1.0, 0.5];
    let c = 2.0 * DISK.kappa2 / (DISK.kappa1 + DISK.kappa2);
    let field = AppliedField { e0, offset: 0.2 };
    let zero = |g: &Grid| ScalarField::zeros(g);
    let (coarse, _) = compare(128, zero, field, None)?;
    let (fine, interior) = compare(256, zero, field, Some([c * e0[0], c * e0[1]]))?;
    let rate = (coarse / fine).log2();
    Ok(Check {
        name: "transmission_disk",
        pass: interior <= 0.02 && rate >= 0.9,
        metrics: vec![("interior_field_error", interior), ("l2_coarse", coarse), ("l2_fine", fine), ("rate", rate)],
    })
}

fn charged_disk() -> Result<Check> {
    let charge = |g: &Grid| blob(g, [0.12, 0.0], 0.12, 5.0);
    let field = AppliedField { e0: [0.0, 0.0], offset: 0.0 };
    let (coarse, _) = compare(64, charge, field, None)?;
    let (fine, _) = compare(128, charge, field, None)?;
    let rate = (coarse / fine).log2();
    Ok(Check {
        name: "charged_disk",
        pass: rate >= 0.9,
        metrics: vec![("l2_coarse", coarse), ("l2_fine", fine), ("rate", rate)],
    })
}

fn boltzmann() -> Result<Check> {
    let (grid, phase) = setup(64, DISK)?;
    let rhs = blob(&grid, DISK.center, 0.2, -20.0);
    let bc = ekflow::poisson::ElectrostaticBC::linear(&grid, [1.0, 0.0], 0.0);
    let (psi, _) = solve_poisson(&grid, &phase.kappa_face, &rhs, &bc, 1e-12, None)?;
    let u = MacField::zeros(&grid);
    let mut worst = 0.0_f64;
    for sp in [SpeciesParams { z: 1, d: 1.0 }, SpeciesParams { z: -1, d: 0.5 }] {
        let mut n = boltzmann_profile(&psi, sp, 1.0, &phase, 1.0, &grid)?;
        let dt = np_stable_dt(&u, &psi, sp, &phase, 1.0, &grid);
        for _ in 0..50 {
            let next = step_np(&n, &u, &psi, sp, &phase, dt, 1.0, &grid)?;
            worst = next.data.iter().zip(&n.data).fold(worst, |m, (a, b)| m.max((a - b).abs() / dt));
            n = next;
        }
    }
    Ok(Check { name: "boltzmann_equilibrium", pass: worst <= 1e-9, metrics: vec![("max_dn_dt", worst)] })
}

/// Runs every check; the order of the results is fixed.
pub fn run_suite() -> Result<Vec<Check>> {
    let checks: [fn() -> Result<Check>; 3] = [transmission, charged_disk, boltzmann];
    checks.par_iter().map(|f| f()).collect()
}
