//! One-fluid Navier-Stokes on the MAC grid with the particle as a rigid
//! region: explicit momentum predictor, then a single projection onto fields
//! that are discretely divergence-free and rigid on the body faces.
//!
//! The projection is orthogonal in the density-weighted inner product
//! `<u, v>_mu = sum mu_face u v h^2`. It is realized as
//! `u = R(u* - mu^{-1} G q)` where `R` replaces body-face values by their
//! momentum-equivalent rigid motion (a weighted least-squares fit) and `q`
//! solves `D R mu^{-1} G q = D R u*`. Because `R` is self-adjoint in that
//! inner product, the operator is symmetric and the body receives exactly the
//! linear and angular momentum of the predicted field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PhaseMap, RigidPose, ShapeSpec};
use crate::grid::{bilinear, Grid, MacField, ScalarField, Vec2, VectorField};
use crate::linalg::{pcg, CgControl, CgReport, LinearOperator, Mic0, Stencil5};
use crate::nernst_planck::SpeciesParams;
use crate::poisson::{maxwell_stress_from_gradient, potential_gradient};

/// How the electric term enters the momentum balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ForceConvention {
    /// Momentum source `mu_f F`: the electric term acts like an acceleration
    /// scaled by the fluid reference density.
    #[default]
    PerMass,
    /// Momentum source `F`: a force per unit volume.
    PerVolume,
}

/// Tangential wall condition for the viscous term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WallCondition {
    #[default]
    NoSlip,
    /// Mirror ghost values; used for closed-box test flows.
    FreeSlip,
}

/// Mass and scalar moment of inertia of the particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyInertia {
    pub mass: f64,
    pub moment: f64,
}

impl BodyInertia {
    pub fn from_shape(shape: &ShapeSpec, mu_p: f64) -> Result<Self> {
        let (mass, moment) = match shape {
            ShapeSpec::Disk { radius } => {
                let area = std::f64::consts::PI * radius * radius;
                (mu_p * area, mu_p * area * radius * radius / 2.0)
            }
            ShapeSpec::Polygon { vertices } => {
                // Triangle fan about the centroid (origin).
                let mut area = 0.0;
                let mut j0 = 0.0;
                for k in 0..vertices.len() {
                    let p = vertices[k];
                    let q = vertices[(k + 1) % vertices.len()];
                    let cross = p[0] * q[1] - q[0] * p[1];
                    area += 0.5 * cross;
                    j0 += cross * (p[0] * p[0] + p[0] * q[0] + q[0] * q[0] + p[1] * p[1] + p[1] * q[1] + q[1] * q[1])
                        / 12.0;
                }
                (mu_p * area.abs(), mu_p * j0.abs())
            }
        };
        if !(mass > 0.0 && moment > 0.0) {
            return Err(Error::Geometry("body has zero area".into()));
        }
        Ok(BodyInertia { mass, moment })
    }
}

/// `F = -e sum Z_i N_i grad psi` on fluid cells, zero in the body.
pub fn electric_force_density(
    n: &[ScalarField],
    psi: &ScalarField,
    species: &[SpeciesParams],
    chi_fluid: &ScalarField,
    e_charge: f64,
    grid: &Grid,
) -> VectorField {
    let grad = potential_gradient(psi, grid);
    let mut f = VectorField::zeros(grid);
    for k in 0..grid.n_cells() {
        let q: f64 = n.iter().zip(species).map(|(ni, sp)| sp.z as f64 * ni.data[k]).sum();
        let c = -e_charge * q * chi_fluid.data[k];
        f.x.data[k] = c * grad.x.data[k];
        f.y.data[k] = c * grad.y.data[k];
    }
    f
}

/// Face momentum source `div(w sigma_E)` with `w = (1 - chi)` times the
/// convention weight. In the bulk fluid this is the Coulomb force on the ionic
/// charge; across the interface band it is the Maxwell traction on the body.
pub fn electric_momentum_source(
    psi: &ScalarField,
    phase: &PhaseMap,
    kappa2: f64,
    mu_f: f64,
    convention: ForceConvention,
    grid: &Grid,
) -> MacField {
    let weight = match convention {
        ForceConvention::PerMass => mu_f,
        ForceConvention::PerVolume => 1.0,
    };
    let sigma = maxwell_stress_from_gradient(&potential_gradient(psi, grid), kappa2);
    let (nx, ny) = (grid.nx, grid.ny);
    let h = grid.h;
    let w: Vec<f64> = phase.chi.data.iter().map(|c| weight * (1.0 - c)).collect();
    let sxx: Vec<f64> = sigma.xx.data.iter().zip(&w).map(|(s, w)| s * w).collect();
    let syy: Vec<f64> = sigma.yy.data.iter().zip(&w).map(|(s, w)| s * w).collect();
    let sxy: Vec<f64> = sigma.xy.data.iter().zip(&w).map(|(s, w)| s * w).collect();
    // Off-diagonal stress at grid nodes (i, j), 0 <= i <= nx, 0 <= j <= ny.
    let corner = |i: usize, j: usize| {
        let mut s = 0.0;
        let mut c = 0;
        for (ci, cj) in [(i.wrapping_sub(1), j.wrapping_sub(1)), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j), (i, j)]
        {
            if ci < nx && cj < ny {
                s += sxy[cj * nx + ci];
                c += 1;
            }
        }
        s / c as f64
    };
    let mut f = MacField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let k = f.uidx(i, j);
            f.u[k] = (sxx[j * nx + i] - sxx[j * nx + i - 1] + corner(i, j + 1) - corner(i, j)) / h;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = f.vidx(i, j);
            f.v[k] = (syy[j * nx + i] - syy[(j - 1) * nx + i] + corner(i + 1, j) - corner(i, j)) / h;
        }
    }
    f
}

/// Centered, divergence-form advection `(a . grad) u` on interior faces.
pub fn advection(u: &MacField, a: &MacField, grid: &Grid) -> MacField {
    let (nx, ny) = (grid.nx, grid.ny);
    let h = grid.h;
    let mut out = MacField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let ue = 0.5 * (u.u_at(i, j) + u.u_at(i + 1, j));
            let uw = 0.5 * (u.u_at(i - 1, j) + u.u_at(i, j));
            let ae = 0.5 * (a.u_at(i, j) + a.u_at(i + 1, j));
            let aw = 0.5 * (a.u_at(i - 1, j) + a.u_at(i, j));
            let (an, un) = if j + 1 < ny {
                (0.5 * (a.v_at(i - 1, j + 1) + a.v_at(i, j + 1)), 0.5 * (u.u_at(i, j) + u.u_at(i, j + 1)))
            } else {
                (0.0, 0.0)
            };
            let (as_, us) = if j > 0 {
                (0.5 * (a.v_at(i - 1, j) + a.v_at(i, j)), 0.5 * (u.u_at(i, j - 1) + u.u_at(i, j)))
            } else {
                (0.0, 0.0)
            };
            let k = out.uidx(i, j);
            out.u[k] = (ae * ue - aw * uw + an * un - as_ * us) / h;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let vn = 0.5 * (u.v_at(i, j) + u.v_at(i, j + 1));
            let vs = 0.5 * (u.v_at(i, j - 1) + u.v_at(i, j));
            let an = 0.5 * (a.v_at(i, j) + a.v_at(i, j + 1));
            let as_ = 0.5 * (a.v_at(i, j - 1) + a.v_at(i, j));
            let (ae, ve) = if i + 1 < nx {
                (0.5 * (a.u_at(i + 1, j - 1) + a.u_at(i + 1, j)), 0.5 * (u.v_at(i, j) + u.v_at(i + 1, j)))
            } else {
                (0.0, 0.0)
            };
            let (aw, vw) = if i > 0 {
                (0.5 * (a.u_at(i, j - 1) + a.u_at(i, j)), 0.5 * (u.v_at(i - 1, j) + u.v_at(i, j)))
            } else {
                (0.0, 0.0)
            };
            let k = out.vidx(i, j);
            out.v[k] = (an * vn - as_ * vs + ae * ve - aw * vw) / h;
        }
    }
    out
}

/// Five-point Laplacian of each velocity component on interior faces, with
/// ghost values behind the walls.
pub fn vector_laplacian(u: &MacField, walls: WallCondition, grid: &Grid) -> MacField {
    let (nx, ny) = (grid.nx, grid.ny);
    let h2 = grid.cell_area();
    let mirror = match walls {
        WallCondition::NoSlip => -1.0,
        WallCondition::FreeSlip => 1.0,
    };
    let mut out = MacField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let c = u.u_at(i, j);
            let n = if j + 1 < ny { u.u_at(i, j + 1) } else { mirror * c };
            let s = if j > 0 { u.u_at(i, j - 1) } else { mirror * c };
            let k = out.uidx(i, j);
            out.u[k] = (u.u_at(i + 1, j) + u.u_at(i - 1, j) + n + s - 4.0 * c) / h2;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let c = u.v_at(i, j);
            let e = if i + 1 < nx { u.v_at(i + 1, j) } else { mirror * c };
            let w = if i > 0 { u.v_at(i - 1, j) } else { mirror * c };
            let k = out.vidx(i, j);
            out.v[k] = (u.v_at(i, j + 1) + u.v_at(i, j - 1) + e + w - 4.0 * c) / h2;
        }
    }
    out
}

/// Explicit predictor `u* = u + dt [-(a . grad) u + (eta / mu) lap u + f / mu]`
/// where `a` is the frozen advecting velocity and `f` a face force density.
#[allow(clippy::too_many_arguments)]
pub fn advect_diffuse(
    u: &MacField,
    advecting: &MacField,
    mu_face: &MacField,
    source: &MacField,
    eta: f64,
    walls: WallCondition,
    dt: f64,
    grid: &Grid,
) -> Result<MacField> {
    let adv = advection(u, advecting, grid);
    let lap = vector_laplacian(u, walls, grid);
    let mut out = u.clone();
    for k in 0..out.u.len() {
        out.u[k] += dt * (-adv.u[k] + (eta * lap.u[k] + source.u[k]) / mu_face.u[k]);
    }
    for k in 0..out.v.len() {
        out.v[k] += dt * (-adv.v[k] + (eta * lap.v[k] + source.v[k]) / mu_face.v[k]);
    }
    out.zero_wall_normals();
    if !out.is_finite() {
        return Err(Error::Stability(format!("momentum predictor produced non-finite values at dt = {dt:.3e}")));
    }
    Ok(out)
}

/// Discrete gradient on interior faces (walls get zero).
pub fn gradient(q: &ScalarField, grid: &Grid) -> MacField {
    let (nx, ny) = (grid.nx, grid.ny);
    let h = grid.h;
    let mut g = MacField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let k = g.uidx(i, j);
            g.u[k] = (q.at(i, j) - q.at(i - 1, j)) / h;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = g.vidx(i, j);
            g.v[k] = (q.at(i, j) - q.at(i, j - 1)) / h;
        }
    }
    g
}

/// Body faces and their weights, gathered once per geometry.
#[derive(Debug, Clone)]
pub struct RigidFit {
    u_faces: Vec<(usize, f64, f64)>,
    v_faces: Vec<(usize, f64, f64)>,
    inv: [[f64; 3]; 3],
    center: Vec2,
}

impl RigidFit {
    pub fn new(phase: &PhaseMap, pose: &RigidPose, grid: &Grid) -> Result<Self> {
        let (nx, ny) = (grid.nx, grid.ny);
        let c = pose.x_c;
        let mut u_faces = Vec::new();
        let mut v_faces = Vec::new();
        let mut m = [[0.0; 3]; 3];
        for j in 0..ny {
            for i in 0..=nx {
                let k = j * (nx + 1) + i;
                if phase.is_body_xface(k) {
                    let w = phase.mu_face.u[k];
                    let dy = grid.xface_center(i, j)[1] - c[1];
                    m[0][0] += w;
                    m[0][2] -= w * dy;
                    m[2][2] += w * dy * dy;
                    u_faces.push((k, w, dy));
                }
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let k = j * nx + i;
                if phase.is_body_yface(k) {
                    let w = phase.mu_face.v[k];
                    let dx = grid.yface_center(i, j)[0] - c[0];
                    m[1][1] += w;
                    m[1][2] += w * dx;
                    m[2][2] += w * dx * dx;
                    v_faces.push((k, w, dx));
                }
            }
        }
        if u_faces.is_empty() || v_faces.is_empty() {
            return Err(Error::Geometry("the body covers no grid faces; refine the grid".into()));
        }
        m[2][0] = m[0][2];
        m[2][1] = m[1][2];
        let inv = invert3(m).ok_or_else(|| Error::Geometry("degenerate body inertia on the grid".into()))?;
        Ok(RigidFit { u_faces, v_faces, inv, center: c })
    }

    /// Linear momentum and angular momentum about the center carried by the
    /// body faces (in units of `h^2`).
    pub fn momenta(&self, u: &MacField) -> [f64; 3] {
        let mut b = [0.0; 3];
        for (k, w, dy) in &self.u_faces {
            b[0] += w * u.u[*k];
            b[2] -= w * dy * u.u[*k];
        }
        for (k, w, dx) in &self.v_faces {
            b[1] += w * u.v[*k];
            b[2] += w * dx * u.v[*k];
        }
        b
    }

    /// The momentum-equivalent rigid motion `(v_x, v_y, w)`.
    pub fn fit(&self, u: &MacField) -> [f64; 3] {
        let b = self.momenta(u);
        let mut x = [0.0; 3];
        for (r, xr) in x.iter_mut().enumerate() {
            *xr = self.inv[r][0] * b[0] + self.inv[r][1] * b[1] + self.inv[r][2] * b[2];
        }
        x
    }

    /// Overwrites the body faces with the fitted rigid motion.
    pub fn apply(&self, u: &mut MacField) -> [f64; 3] {
        let x = self.fit(u);
        for (k, _, dy) in &self.u_faces {
            u.u[*k] = x[0] - x[2] * dy;
        }
        for (k, _, dx) in &self.v_faces {
            u.v[*k] = x[1] + x[2] * dx;
        }
        x
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }
}

fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some(std::array::from_fn(|r| {
        std::array::from_fn(|c| {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det
        })
    }))
}

/// Replaces the velocity on body faces by its momentum-equivalent rigid
/// motion and returns the pose carrying that motion. In two dimensions the
/// gyroscopic term of the angular balance vanishes identically.
pub fn enforce_rigidity(
    u: &MacField,
    phase: &PhaseMap,
    pose: &RigidPose,
    grid: &Grid,
) -> Result<(MacField, RigidPose)> {
    let fit = RigidFit::new(phase, pose, grid)?;
    let mut out = u.clone();
    let x = fit.apply(&mut out);
    Ok((out, RigidPose { v_c: [x[0], x[1]], w: x[2], ..*pose }))
}

struct ProjectionOperator<'a> {
    grid: &'a Grid,
    mu_face: &'a MacField,
    fit: Option<&'a RigidFit>,
    /// `-h^2 D mu^-1 G` without the rigid constraint.
    plain: Stencil5,
}

impl ProjectionOperator<'_> {
    fn weighted_gradient(&self, q: &[f64]) -> MacField {
        let qf = ScalarField { nx: self.grid.nx, ny: self.grid.ny, data: q.to_vec() };
        let mut g = gradient(&qf, self.grid);
        for (gk, m) in g.u.iter_mut().zip(&self.mu_face.u) {
            *gk /= m;
        }
        for (gk, m) in g.v.iter_mut().zip(&self.mu_face.v) {
            *gk /= m;
        }
        if let Some(fit) = self.fit {
            fit.apply(&mut g);
        }
        g
    }
}

impl LinearOperator for ProjectionOperator<'_> {
    // The rigid fit only changes body faces, so the constrained operator is
    // the plain stencil plus a correction supported next to the body.
    fn apply(&self, q: &[f64], y: &mut [f64]) {
        self.plain.apply(q, y);
        let Some(fit) = self.fit else { return };
        let (nx, h) = (self.grid.nx, self.grid.h);
        let gu = |k: usize| {
            let (i, j) = (k % (nx + 1), k / (nx + 1));
            (q[j * nx + i] - q[j * nx + i - 1]) / (h * self.mu_face.u[k])
        };
        let gv = |k: usize| (q[k] - q[k - nx]) / (h * self.mu_face.v[k]);
        let mut b = [0.0; 3];
        for (k, w, dy) in &fit.u_faces {
            let g = gu(*k);
            b[0] += w * g;
            b[2] -= w * dy * g;
        }
        for (k, w, dx) in &fit.v_faces {
            let g = gv(*k);
            b[1] += w * g;
            b[2] += w * dx * g;
        }
        let x: [f64; 3] = std::array::from_fn(|r| fit.inv[r][0] * b[0] + fit.inv[r][1] * b[1] + fit.inv[r][2] * b[2]);
        for (k, _, dy) in &fit.u_faces {
            let delta = x[0] - x[2] * dy - gu(*k);
            let (i, j) = (k % (nx + 1), k / (nx + 1));
            y[j * nx + i - 1] -= h * delta;
            y[j * nx + i] += h * delta;
        }
        for (k, _, dx) in &fit.v_faces {
            let delta = x[1] + x[2] * dx - gv(*k);
            y[k - nx] -= h * delta;
            y[*k] += h * delta;
        }
    }
}

fn plain_stencil(grid: &Grid, mu_face: &MacField) -> Stencil5 {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut a = Stencil5::zeros(nx, ny);
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            if i + 1 < nx {
                a.couple_east(k, 1.0 / mu_face.u_at(i + 1, j));
            }
            if j + 1 < ny {
                a.couple_north(k, 1.0 / mu_face.v_at(i, j + 1));
            }
        }
    }
    a
}

/// Result of a projection.
#[derive(Debug, Clone)]
pub struct Projection {
    pub u: MacField,
    /// Pressure (the multiplier of the divergence constraint).
    pub p: ScalarField,
    pub report: CgReport,
    /// Rigid motion of the body after projection, if a body was present.
    pub rigid: Option<[f64; 3]>,
}

fn project(
    u_star: &MacField,
    mu_face: &MacField,
    fit: Option<&RigidFit>,
    dt: f64,
    tol: f64,
    grid: &Grid,
    guess: Option<&ScalarField>,
) -> Result<Projection> {
    let h2 = grid.cell_area();
    let mut target = u_star.clone();
    target.zero_wall_normals();
    if let Some(fit) = fit {
        fit.apply(&mut target);
    }
    let b: Vec<f64> = target.divergence(grid).data.iter().map(|d| -h2 * d).collect();
    let mut q = match guess {
        Some(p) if p.matches(grid) && p.is_finite() => p.data.iter().map(|v| v * dt).collect(),
        _ => vec![0.0; grid.n_cells()],
    };
    let plain = plain_stencil(grid, mu_face);
    let pc = Mic0::new(&plain);
    let op = ProjectionOperator { grid, mu_face, fit, plain };
    // The residual is -h^2 div u, so this bounds the final divergence.
    let ctl =
        CgControl { rel_tol: 1e-15, abs_tol: tol * h2, max_iter: 40 * (grid.nx + grid.ny) + 2000, remove_mean: true };
    let report = pcg(&op, &pc, &b, &mut q, ctl, "pressure projection")?;
    let g = op.weighted_gradient(&q);
    let mut u = target;
    u.axpy(-1.0, &g);
    let rigid = fit.map(|f| f.apply(&mut u));
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    let p = ScalarField { nx: grid.nx, ny: grid.ny, data: q.iter().map(|v| (v - mean) / dt).collect() };
    Ok(Projection { u, p, report, rigid })
}

/// Plain incompressibility projection with density `mu_face` (pass a field
/// of ones for the classical one).
pub fn project_incompressible(
    u_star: &MacField,
    mu_face: &MacField,
    dt: f64,
    tol: f64,
    grid: &Grid,
    guess: Option<&ScalarField>,
) -> Result<Projection> {
    project(u_star, mu_face, None, dt, tol, grid, guess)
}

/// Joint projection onto divergence-free fields that are rigid on the body.
pub fn project_constrained(
    u_star: &MacField,
    phase: &PhaseMap,
    pose: &RigidPose,
    dt: f64,
    tol: f64,
    grid: &Grid,
    guess: Option<&ScalarField>,
) -> Result<Projection> {
    let fit = RigidFit::new(phase, pose, grid)?;
    project(u_star, &phase.mu_face, Some(&fit), dt, tol, grid, guess)
}

/// Strain-rate components: `exx`, `eyy` at cell centers and `exy` at grid
/// nodes ((nx+1) x (ny+1), row-major). Wall nodes use the no-slip ghost.
pub struct StrainRate {
    pub exx: ScalarField,
    pub eyy: ScalarField,
    pub exy: Vec<f64>,
}

pub fn strain_rate(u: &MacField, grid: &Grid) -> StrainRate {
    let (nx, ny) = (grid.nx, grid.ny);
    let h = grid.h;
    let mut exx = ScalarField::zeros(grid);
    let mut eyy = ScalarField::zeros(grid);
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            exx.data[k] = (u.u_at(i + 1, j) - u.u_at(i, j)) / h;
            eyy.data[k] = (u.v_at(i, j + 1) - u.v_at(i, j)) / h;
        }
    }
    let mut exy = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            // du/dy between x-faces (i, j-1) and (i, j); ghost -u at walls.
            let du = match (j > 0, j < ny) {
                (true, true) => u.u_at(i, j) - u.u_at(i, j - 1),
                (false, _) => 2.0 * u.u_at(i, 0),
                (true, false) => -2.0 * u.u_at(i, ny - 1),
            };
            let dv = match (i > 0, i < nx) {
                (true, true) => u.v_at(i, j) - u.v_at(i - 1, j),
                (false, _) => 2.0 * u.v_at(0, j),
                (true, false) => -2.0 * u.v_at(nx - 1, j),
            };
            exy[j * (nx + 1) + i] = 0.5 * (du + dv) / h;
        }
    }
    StrainRate { exx, eyy, exy }
}

impl StrainRate {
    /// Largest strain component over cells whose whole stencil lies at least
    /// `depth` inside the body.
    pub fn max_in_body(&self, phase: &PhaseMap, depth: f64, grid: &Grid) -> f64 {
        let nx = grid.nx;
        let mut worst = 0.0_f64;
        for j in 0..grid.ny {
            for i in 0..nx {
                let k = grid.idx(i, j);
                if phase.sd.data[k] > -depth {
                    continue;
                }
                worst = worst.max(self.exx.data[k].abs()).max(self.eyy.data[k].abs());
                for (ci, cj) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                    worst = worst.max(self.exy[cj * (nx + 1) + ci].abs());
                }
            }
        }
        worst
    }
}

/// Hydrodynamic plus electric force and torque on the body, by quadrature of
/// `(-p I + 2 eta D(u) + sigma_E) nu` over a contour offset `offset` outside
/// the body surface. Diagnostic only.
#[allow(clippy::too_many_arguments)]
pub fn surface_force_torque(
    psi: &ScalarField,
    u: &MacField,
    p: &ScalarField,
    shape: &ShapeSpec,
    pose: &RigidPose,
    eta: f64,
    kappa2: f64,
    offset: f64,
    grid: &Grid,
) -> (Vec2, f64) {
    let (nx, ny) = (grid.nx, grid.ny);
    let s = strain_rate(u, grid);
    // Shear at cell centers from the four surrounding nodes.
    let mut exy_c = ScalarField::zeros(grid);
    for j in 0..ny {
        for i in 0..nx {
            let e = |a: usize, b: usize| s.exy[b * (nx + 1) + a];
            *exy_c.at_mut(i, j) = 0.25 * (e(i, j) + e(i + 1, j) + e(i, j + 1) + e(i + 1, j + 1));
        }
    }
    let sigma_e = maxwell_stress_from_gradient(&potential_gradient(psi, grid), kappa2);
    let samples = ((2.0 * std::f64::consts::PI * (shape.bounding_radius() + offset) / grid.h) as usize * 4).max(64);
    let mut force = [0.0, 0.0];
    let mut torque = 0.0;
    for (b, nrm_b, ds) in shape.boundary_quadrature(samples) {
        let pb = [b[0] + offset * nrm_b[0], b[1] + offset * nrm_b[1]];
        let x = pose.to_world(pb);
        let nrm = {
            let q = pose.rotation();
            [q[0][0] * nrm_b[0] + q[0][1] * nrm_b[1], q[1][0] * nrm_b[0] + q[1][1] * nrm_b[1]]
        };
        let pr = bilinear(grid, p, x);
        let sxx = -pr + 2.0 * eta * bilinear(grid, &s.exx, x) + bilinear(grid, &sigma_e.xx, x);
        let syy = -pr + 2.0 * eta * bilinear(grid, &s.eyy, x) + bilinear(grid, &sigma_e.yy, x);
        let sxy = 2.0 * eta * bilinear(grid, &exy_c, x) + bilinear(grid, &sigma_e.xy, x);
        // Arc length scales with the offset contour.
        let scale = match shape {
            ShapeSpec::Disk { radius } => (radius + offset) / radius,
            ShapeSpec::Polygon { .. } => 1.0,
        };
        let t = [sxx * nrm[0] + sxy * nrm[1], sxy * nrm[0] + syy * nrm[1]];
        let w = ds * scale;
        force[0] += t[0] * w;
        force[1] += t[1] * w;
        let r = [x[0] - pose.x_c[0], x[1] - pose.x_c[1]];
        torque += (r[0] * t[1] - r[1] * t[0]) * w;
    }
    (force, torque)
}
