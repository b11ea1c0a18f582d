//! Energy functionals, the per-step energy ledger and conservation checks.
//!
//! Face sums use trapezoid weights (wall faces count half), so a constant
//! field integrates to the enclosure area exactly.

use serde::{Deserialize, Serialize};

use crate::fluid::{strain_rate, vector_laplacian, WallCondition};
use crate::geometry::PhaseMap;
use crate::grid::{Grid, MacField};

fn face_sum(a: &MacField, mut f: impl FnMut(usize, bool) -> f64) -> f64 {
    let (nx, ny) = (a.nx, a.ny);
    let mut s = 0.0;
    for j in 0..ny {
        for i in 0..=nx {
            let w = if i == 0 || i == nx { 0.5 } else { 1.0 };
            s += w * f(j * (nx + 1) + i, true);
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let w = if j == 0 || j == ny { 0.5 } else { 1.0 };
            s += w * f(j * nx + i, false);
        }
    }
    s
}

/// `E_k = 1/2 int mu |u|^2`.
pub fn kinetic_energy(u: &MacField, mu_face: &MacField, grid: &Grid) -> f64 {
    0.5 * grid.cell_area()
        * face_sum(u, |k, x| if x { mu_face.u[k] * u.u[k] * u.u[k] } else { mu_face.v[k] * u.v[k] * u.v[k] })
}

/// Viscous dissipation rate in gradient form, `-eta sum u . lap u h^2`, which
/// equals `eta int |grad u|^2` for the no-slip discretization used by the
/// momentum predictor. This is the rate the energy ledger integrates.
pub fn dissipation_rate(u: &MacField, eta: f64, grid: &Grid) -> f64 {
    let lap = vector_laplacian(u, WallCondition::NoSlip, grid);
    let s: f64 = u.u.iter().zip(&lap.u).map(|(a, b)| a * b).sum::<f64>()
        + u.v.iter().zip(&lap.v).map(|(a, b)| a * b).sum::<f64>();
    -eta * s * grid.cell_area()
}

/// `2 eta int_fluid D(u):D(u)`, fluid weight `1 - chi` at cells and nodes.
pub fn strain_dissipation_rate(u: &MacField, phase: &PhaseMap, eta: f64, grid: &Grid) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let s = strain_rate(u, grid);
    let mut total = 0.0;
    for k in 0..grid.n_cells() {
        let w = 1.0 - phase.chi.data[k];
        total += w * (s.exx.data[k].powi(2) + s.eyy.data[k].powi(2));
    }
    for j in 0..=ny {
        for i in 0..=nx {
            let mut chi = 0.0;
            let mut c = 0.0;
            for (ci, cj) in
                [(i.wrapping_sub(1), j.wrapping_sub(1)), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j), (i, j)]
            {
                if ci < nx && cj < ny {
                    chi += phase.chi.data[cj * nx + ci];
                    c += 1.0;
                }
            }
            // Nodes on the wall carry a quarter or half cell.
            let area = match (i == 0 || i == nx, j == 0 || j == ny) {
                (true, true) => 0.25,
                (true, false) | (false, true) => 0.5,
                _ => 1.0,
            };
            total += area * (1.0 - chi / c) * 2.0 * s.exy[j * (nx + 1) + i].powi(2);
        }
    }
    2.0 * eta * total * grid.cell_area()
}

/// Rate of work of a face force density on a face velocity, `int f . u`.
pub fn electric_power(f: &MacField, u: &MacField, grid: &Grid) -> f64 {
    grid.cell_area() * face_sum(u, |k, x| if x { f.u[k] * u.u[k] } else { f.v[k] * u.v[k] })
}

/// One row of the energy ledger.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub t: f64,
    pub e_k: f64,
    /// Accumulated dissipation (gradient form).
    pub e_d: f64,
    /// Accumulated electric work.
    pub e_p: f64,
    pub e_el: f64,
    /// Accumulated `2 eta int_fluid D:D`.
    pub e_d_strain: f64,
    /// Accumulated `eta int_fluid D:D`, the strain form without the factor 2.
    pub e_d_dd: f64,
}

/// Time series of the energy functionals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    pub entries: Vec<LedgerEntry>,
}

impl EnergyLedger {
    pub fn push(&mut self, e: LedgerEntry) {
        self.entries.push(e);
    }

    /// `dE_k + dE_d - dE_p` over step `step` (from entry `step - 1`).
    pub fn energy_residual(&self, step: usize) -> f64 {
        if step == 0 || step >= self.entries.len() {
            return 0.0;
        }
        let (a, b) = (&self.entries[step - 1], &self.entries[step]);
        (b.e_k - a.e_k) + (b.e_d - a.e_d) - (b.e_p - a.e_p)
    }

    pub fn total_abs_residual(&self) -> f64 {
        (1..self.entries.len()).map(|s| self.energy_residual(s).abs()).sum()
    }

    /// Largest violation of `E_k + E_d <= E_k(0) + E_p`, relative to the
    /// right-hand side.
    pub fn mechanical_bound_excess(&self) -> f64 {
        let Some(first) = self.entries.first() else { return 0.0 };
        self.entries
            .iter()
            .map(|e| {
                let rhs = first.e_k + e.e_p;
                let lhs = e.e_k + e.e_d;
                if lhs <= rhs {
                    0.0
                } else if rhs > 0.0 {
                    (lhs - rhs) / rhs
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}
