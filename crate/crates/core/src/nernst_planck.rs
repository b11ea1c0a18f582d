//! Explicit conservative finite-volume update of the ionic concentrations:
//! convection, diffusion and electromigration with no-flux walls and body.
//!
//! With the face flux `J = -N u + d grad N + (d Z e / k T) N grad psi` the
//! update is `N' = N + dt div J`. Convection and drift are combined into one
//! effective velocity `a = u - (d Z e / k T) grad psi` and the face flux uses
//! exponential fitting (Scharfetter-Gummel): with `Pe = a h / d` and
//! `B(x) = x / (e^x - 1)`, the flux from the left cell to the right cell is
//! `(d / h) (B(-Pe) N_L - B(Pe) N_R)`. Both coefficients are positive, so the
//! update is monotone under [`np_stable_dt`]; for small `Pe` the flux is the
//! centered one, and with `u = 0` it vanishes exactly on Boltzmann profiles.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PhaseMap;
use crate::grid::{Grid, MacField, ScalarField};

/// Valence and diffusivity of one ionic species.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeciesParams {
    pub z: i32,
    pub d: f64,
}

const SAFETY: f64 = 0.9;

/// Per-face transfer rates: the fraction of the left (lower) cell moved to the
/// right (upper) cell per unit time, and the reverse.
struct Rates {
    fwd: MacField,
    bwd: MacField,
}

/// `x / (e^x - 1)`, continuous through 0.
pub fn bernoulli(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x / x.exp_m1()
    }
}

fn face_rates(a: f64, d: f64, h: f64) -> (f64, f64) {
    let pe = a * h / d;
    let base = d / (h * h);
    (base * bernoulli(-pe), base * bernoulli(pe))
}

fn rates(u: &MacField, psi: &ScalarField, sp: SpeciesParams, phase: &PhaseMap, e_over_kbt: f64, grid: &Grid) -> Rates {
    let (nx, ny) = (grid.nx, grid.ny);
    let h = grid.h;
    let mobility = sp.d * sp.z as f64 * e_over_kbt;
    let mut fwd = MacField::zeros(grid);
    let mut bwd = MacField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let (l, r) = (grid.idx(i - 1, j), grid.idx(i, j));
            if !(phase.fluid[l] && phase.fluid[r]) {
                continue;
            }
            let a = u.u_at(i, j) - mobility * (psi.data[r] - psi.data[l]) / h;
            let k = fwd.uidx(i, j);
            (fwd.u[k], bwd.u[k]) = face_rates(a, sp.d, h);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let (l, r) = (grid.idx(i, j - 1), grid.idx(i, j));
            if !(phase.fluid[l] && phase.fluid[r]) {
                continue;
            }
            let a = u.v_at(i, j) - mobility * (psi.data[r] - psi.data[l]) / h;
            let k = fwd.vidx(i, j);
            (fwd.v[k], bwd.v[k]) = face_rates(a, sp.d, h);
        }
    }
    Rates { fwd, bwd }
}

/// Face fluxes `J` (positive along +x / +y means `N` flows toward -x / -y,
/// following the sign convention `dN/dt = div J`). Wall faces and faces
/// touching the body carry no flux.
pub fn np_face_fluxes(
    n: &ScalarField,
    u: &MacField,
    psi: &ScalarField,
    sp: SpeciesParams,
    phase: &PhaseMap,
    e_over_kbt: f64,
    grid: &Grid,
) -> MacField {
    let r = rates(u, psi, sp, phase, e_over_kbt, grid);
    let h = grid.h;
    let mut j_face = MacField::zeros(grid);
    for j in 0..grid.ny {
        for i in 1..grid.nx {
            let k = j_face.uidx(i, j);
            j_face.u[k] = h * (r.bwd.u[k] * n.at(i, j) - r.fwd.u[k] * n.at(i - 1, j));
        }
    }
    for j in 1..grid.ny {
        for i in 0..grid.nx {
            let k = j_face.vidx(i, j);
            j_face.v[k] = h * (r.bwd.v[k] * n.at(i, j) - r.fwd.v[k] * n.at(i, j - 1));
        }
    }
    j_face
}

/// One explicit step. Mass moves face by face, so the total is conserved up
/// to rounding.
#[allow(clippy::too_many_arguments)]
pub fn step_np(
    n: &ScalarField,
    u: &MacField,
    psi: &ScalarField,
    sp: SpeciesParams,
    phase: &PhaseMap,
    dt: f64,
    e_over_kbt: f64,
    grid: &Grid,
) -> Result<ScalarField> {
    let r = rates(u, psi, sp, phase, e_over_kbt, grid);
    let mut out = n.clone();
    for j in 0..grid.ny {
        for i in 1..grid.nx {
            let k = r.fwd.uidx(i, j);
            let (l, rr) = (grid.idx(i - 1, j), grid.idx(i, j));
            let t = dt * (r.fwd.u[k] * n.data[l] - r.bwd.u[k] * n.data[rr]);
            out.data[l] -= t;
            out.data[rr] += t;
        }
    }
    for j in 1..grid.ny {
        for i in 0..grid.nx {
            let k = r.fwd.vidx(i, j);
            let (l, rr) = (grid.idx(i, j - 1), grid.idx(i, j));
            let t = dt * (r.fwd.v[k] * n.data[l] - r.bwd.v[k] * n.data[rr]);
            out.data[l] -= t;
            out.data[rr] += t;
        }
    }
    let scale = n.max_abs().max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for v in out.data.iter_mut() {
        if *v < 0.0 {
            worst = worst.min(*v);
            *v = 0.0;
        }
    }
    if worst < -1e-12 * scale || !out.is_finite() {
        return Err(Error::Stability(format!("concentration went negative ({worst:.3e}) with dt = {dt:.3e}")));
    }
    Ok(out)
}

/// Largest safe explicit step: `0.9 min(h^2 / 4d, h / (max|u| + max drift),
/// 1 / max total outflow rate)`.
pub fn np_stable_dt(
    u: &MacField,
    psi: &ScalarField,
    sp: SpeciesParams,
    phase: &PhaseMap,
    e_over_kbt: f64,
    grid: &Grid,
) -> f64 {
    let h = grid.h;
    let r = rates(u, psi, sp, phase, e_over_kbt, grid);
    let mut out_rate = vec![0.0; grid.n_cells()];
    let mut max_drift = 0.0_f64;
    let mobility = (sp.d * sp.z as f64 * e_over_kbt).abs();
    for j in 0..grid.ny {
        for i in 1..grid.nx {
            let k = r.fwd.uidx(i, j);
            out_rate[grid.idx(i - 1, j)] += r.fwd.u[k];
            out_rate[grid.idx(i, j)] += r.bwd.u[k];
            if r.fwd.u[k] != 0.0 || r.bwd.u[k] != 0.0 {
                max_drift = max_drift.max(mobility * (psi.at(i, j) - psi.at(i - 1, j)).abs() / h);
            }
        }
    }
    for j in 1..grid.ny {
        for i in 0..grid.nx {
            let k = r.fwd.vidx(i, j);
            out_rate[grid.idx(i, j - 1)] += r.fwd.v[k];
            out_rate[grid.idx(i, j)] += r.bwd.v[k];
            if r.fwd.v[k] != 0.0 || r.bwd.v[k] != 0.0 {
                max_drift = max_drift.max(mobility * (psi.at(i, j) - psi.at(i, j - 1)).abs() / h);
            }
        }
    }
    let diffusive = h * h / (4.0 * sp.d);
    let speed = u.max_abs() + max_drift;
    let convective = if speed > 0.0 { h / speed } else { f64::INFINITY };
    let max_out = out_rate.iter().fold(0.0_f64, |m, v| m.max(*v));
    let monotone = if max_out > 0.0 { 1.0 / max_out } else { f64::INFINITY };
    SAFETY * diffusive.min(convective).min(monotone)
}

/// `sum over fluid cells of N h^2`.
pub fn total_moles(n: &ScalarField, phase: &PhaseMap, grid: &Grid) -> f64 {
    n.data.iter().zip(&phase.fluid).filter(|(_, f)| **f).map(|(v, _)| *v).sum::<f64>() * grid.cell_area()
}

/// `N ~ exp(-Z e psi / k T)` on fluid cells, scaled to `target_moles`.
pub fn boltzmann_profile(
    psi: &ScalarField,
    sp: SpeciesParams,
    target_moles: f64,
    phase: &PhaseMap,
    e_over_kbt: f64,
    grid: &Grid,
) -> Result<ScalarField> {
    if !(target_moles >= 0.0) {
        return Err(Error::InvariantViolation(format!("target moles must be non-negative, got {target_moles}")));
    }
    let beta = sp.z as f64 * e_over_kbt;
    let exponent = |p: f64| -beta * p;
    let shift = psi
        .data
        .iter()
        .zip(&phase.fluid)
        .filter(|(_, f)| **f)
        .map(|(p, _)| exponent(*p))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = ScalarField::zeros(grid);
    for (k, o) in out.data.iter_mut().enumerate() {
        if phase.fluid[k] {
            *o = (exponent(psi.data[k]) - shift).exp();
        }
    }
    let total = total_moles(&out, phase, grid);
    if total > 0.0 {
        let s = target_moles / total;
        for o in out.data.iter_mut() {
            *o *= s;
        }
    }
    Ok(out)
}

/// Moves whatever sits on non-fluid cells to the nearest fluid cells
/// (breadth-first ring), splitting evenly. Returns the amount moved.
pub fn redistribute_covered(n: &mut ScalarField, phase: &PhaseMap, grid: &Grid) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut moved = 0.0;
    for start in 0..grid.n_cells() {
        if phase.fluid[start] || n.data[start] == 0.0 {
            continue;
        }
        let amount = n.data[start];
        n.data[start] = 0.0;
        moved += amount;
        let targets = nearest_fluid_ring(start, phase, nx, ny);
        if targets.is_empty() {
            // No fluid at all: keep the mass where it was.
            n.data[start] = amount;
            continue;
        }
        let share = amount / targets.len() as f64;
        let mut given = 0.0;
        for (m, t) in targets.iter().enumerate() {
            let part = if m + 1 == targets.len() { amount - given } else { share };
            n.data[*t] += part;
            given += part;
        }
    }
    moved * grid.cell_area()
}

fn nearest_fluid_ring(start: usize, phase: &PhaseMap, nx: usize, ny: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; nx * ny];
    let mut queue = VecDeque::new();
    dist[start] = 0;
    queue.push_back(start);
    let mut found = Vec::new();
    let mut found_at = usize::MAX;
    while let Some(k) = queue.pop_front() {
        if dist[k] > found_at {
            break;
        }
        if phase.fluid[k] {
            found_at = dist[k];
            found.push(k);
            continue;
        }
        let (i, j) = (k % nx, k / nx);
        let mut push = |q: usize| {
            if dist[q] == usize::MAX {
                dist[q] = dist[k] + 1;
                queue.push_back(q);
            }
        };
        if i > 0 {
            push(k - 1);
        }
        if i + 1 < nx {
            push(k + 1);
        }
        if j > 0 {
            push(k - nx);
        }
        if j + 1 < ny {
            push(k + nx);
        }
    }
    found.sort_unstable();
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_phase_map, PhaseParams, RigidPose, ShapeSpec};

    const UNIT: PhaseParams = PhaseParams { kappa1: 1.0, kappa2: 1.0, mu_p: 1.0, mu_f: 1.0 };

    fn setup(n: usize, radius: f64) -> (Grid, PhaseMap) {
        let g = Grid::new(n, n, -1.0, 1.0, -1.0, 1.0).unwrap();
        let pm = build_phase_map(&RigidPose::at_rest([0.1, 0.0]), &ShapeSpec::Disk { radius }, &g, UNIT).unwrap();
        (g, pm)
    }

    fn masked(f: ScalarField, pm: &PhaseMap) -> ScalarField {
        let data = f.data.iter().zip(&pm.fluid).map(|(v, fl)| if *fl { *v } else { 0.0 }).collect();
        ScalarField { data, ..f }
    }

    #[test]
    fn uniform_state_has_no_flux() {
        let (g, pm) = setup(24, 0.3);
        let sp = SpeciesParams { z: 1, d: 0.5 };
        let n = masked(ScalarField::filled(&g, 2.0), &pm);
        let j = np_face_fluxes(&n, &MacField::zeros(&g), &ScalarField::filled(&g, 0.3), sp, &pm, 1.0, &g);
        assert_eq!(j.max_abs(), 0.0);
        let n2 = step_np(&n, &MacField::zeros(&g), &ScalarField::zeros(&g), sp, &pm, 1e-3, 1.0, &g).unwrap();
        assert_eq!(n2, n);
    }

    #[test]
    fn step_profile_gives_fickian_flux() {
        let (g, pm) = setup(20, 0.1);
        let sp = SpeciesParams { z: 2, d: 0.3 };
        let n = masked(ScalarField::from_fn(&g, |p| if p[0] < 0.5 { 1.0 } else { 3.0 }), &pm);
        let j = np_face_fluxes(&n, &MacField::zeros(&g), &ScalarField::zeros(&g), sp, &pm, 1.0, &g);
        // Step between columns 14 and 15 (x = 0.5).
        let k = j.uidx(15, 2);
        assert!((j.u[k] - sp.d * 2.0 / g.h).abs() < 1e-12);
        assert_eq!(j.u[j.uidx(10, 2)], 0.0);
    }

    #[test]
    fn boltzmann_profile_carries_no_flux() {
        let sp = SpeciesParams { z: 1, d: 1.0 };
        let mut worst = Vec::new();
        for n in [32, 64] {
            let (g, pm) = setup(n, 0.25);
            let psi = ScalarField::from_fn(&g, |p| 0.8 * (2.0 * p[0]).sin() * p[1].cos());
            let nb = boltzmann_profile(&psi, sp, 1.0, &pm, 1.0, &g).unwrap();
            let j = np_face_fluxes(&nb, &MacField::zeros(&g), &psi, sp, &pm, 1.0, &g);
            worst.push(j.max_abs());
        }
        // d / h * max N is the flux scale; what is left is rounding.
        assert!(worst.iter().all(|w| *w < 1e-12), "{worst:?}");
    }

    #[test]
    fn bernoulli_examples() {
        assert_eq!(bernoulli(0.0), 1.0);
        assert!((bernoulli(1e-9) - (1.0 - 0.5e-9)).abs() < 1e-15);
        assert!((bernoulli(2.0) - 2.0 / (2f64.exp() - 1.0)).abs() < 1e-15);
        // B(-x) - B(x) = x
        for x in [1e-6, 0.3, 5.0, 40.0] {
            assert!((bernoulli(-x) - bernoulli(x) - x).abs() < 1e-12 * x.max(1.0));
        }
        assert_eq!(bernoulli(800.0), 0.0);
        assert_eq!(bernoulli(-800.0), 800.0);
    }

    #[test]
    fn stable_dt_formula() {
        let g = Grid::new(10, 10, 0.0, 1.0, 0.0, 1.0).unwrap();
        let pm = build_phase_map(&RigidPose::at_rest([0.5, 0.5]), &ShapeSpec::Disk { radius: 0.01 }, &g, UNIT).unwrap();
        let sp = SpeciesParams { z: 1, d: 1.0 };
        let dt = np_stable_dt(&MacField::zeros(&g), &ScalarField::zeros(&g), sp, &pm, 1.0, &g);
        assert!((dt - 0.9 * 0.0025).abs() < 1e-15);
        let fast = np_stable_dt(&MacField::filled(&g, 100.0), &ScalarField::zeros(&g), sp, &pm, 1.0, &g);
        assert!(fast <= 0.9 * 0.1 / 100.0 && fast < dt / 5.0);
    }

    #[test]
    fn gaussian_variance_grows_by_two_d_dt() {
        let g = Grid::new(64, 64, -1.0, 1.0, -1.0, 1.0).unwrap();
        let pm =
            build_phase_map(&RigidPose::at_rest([0.85, 0.85]), &ShapeSpec::Disk { radius: 0.05 }, &g, UNIT).unwrap();
        let sp = SpeciesParams { z: 0, d: 0.2 };
        let mut n = ScalarField::from_fn(&g, |p| (-(p[0] * p[0] + p[1] * p[1]) / 0.02).exp());
        let var = |n: &ScalarField| {
            let mut m0 = 0.0;
            let mut m2 = 0.0;
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let p = g.cell_center(i, j);
                    m0 += n.at(i, j);
                    m2 += n.at(i, j) * p[0] * p[0];
                }
            }
            m2 / m0
        };
        let dt = np_stable_dt(&MacField::zeros(&g), &ScalarField::zeros(&g), sp, &pm, 1.0, &g);
        let v0 = var(&n);
        let steps = 20;
        for _ in 0..steps {
            n = step_np(&n, &MacField::zeros(&g), &ScalarField::zeros(&g), sp, &pm, dt, 1.0, &g).unwrap();
        }
        let growth = var(&n) - v0;
        let expect = 2.0 * sp.d * dt * steps as f64;
        assert!((growth - expect).abs() < 1e-6 * expect, "{growth} vs {expect}");
    }

    #[test]
    fn too_large_dt_is_reported() {
        let (g, pm) = setup(24, 0.2);
        let sp = SpeciesParams { z: 1, d: 1.0 };
        let mut n = ScalarField::zeros(&g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                *n.at_mut(i, j) = ((i + j) % 2) as f64;
            }
        }
        let n = masked(n, &pm);
        let dt = np_stable_dt(&MacField::zeros(&g), &ScalarField::zeros(&g), sp, &pm, 1.0, &g);
        assert!(step_np(&n, &MacField::zeros(&g), &ScalarField::zeros(&g), sp, &pm, dt, 1.0, &g).is_ok());
        assert!(step_np(&n, &MacField::zeros(&g), &ScalarField::zeros(&g), sp, &pm, 4.0 * dt, 1.0, &g).is_err());
    }

    #[test]
    fn moles_examples() {
        let (g, pm) = setup(64, 0.3);
        assert_eq!(total_moles(&ScalarField::zeros(&g), &pm, &g), 0.0);
        let ones = ScalarField::filled(&g, 1.0);
        let area = 4.0 - std::f64::consts::PI * 0.09;
        assert!((total_moles(&ones, &pm, &g) - area).abs() < 4.0 * 0.3 * std::f64::consts::PI * g.h);
    }

    #[test]
    fn boltzmann_trivial_cases() {
        let (g, pm) = setup(16, 0.3);
        let area = pm.fluid_area(&g);
        let uniform = 2.0 / area;
        let nb = boltzmann_profile(&ScalarField::filled(&g, 4.0), SpeciesParams { z: 2, d: 1.0 }, 2.0, &pm, 1.0, &g)
            .unwrap();
        let psi = ScalarField::from_fn(&g, |p| p[0]);
        let nz = boltzmann_profile(&psi, SpeciesParams { z: 0, d: 1.0 }, 2.0, &pm, 1.0, &g).unwrap();
        for k in 0..g.n_cells() {
            let e = if pm.fluid[k] { uniform } else { 0.0 };
            assert!((nb.data[k] - e).abs() < 1e-12 && (nz.data[k] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn redistribution_is_conservative() {
        let g = Grid::new(32, 32, -1.0, 1.0, -1.0, 1.0).unwrap();
        let before =
            build_phase_map(&RigidPose::at_rest([0.0, 0.0]), &ShapeSpec::Disk { radius: 0.3 }, &g, UNIT).unwrap();
        let after =
            build_phase_map(&RigidPose::at_rest([0.13, 0.0]), &ShapeSpec::Disk { radius: 0.3 }, &g, UNIT).unwrap();
        let mut n = masked(ScalarField::from_fn(&g, |p| 1.0 + p[0] * p[0]), &before);
        let total = n.data.iter().sum::<f64>();
        let moved = redistribute_covered(&mut n, &after, &g);
        assert!(moved > 0.0);
        assert!((n.data.iter().sum::<f64>() - total).abs() < 1e-12 * total);
        assert!(n.data.iter().zip(&after.fluid).all(|(v, f)| *f || *v == 0.0));
    }
}
