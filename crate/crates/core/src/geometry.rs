//! Rigid-body pose, body shape, phase indicators and rigid transport.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, MacField, ScalarField, Vec2};

/// Position, orientation and velocities of the particle.
///
/// The orientation is kept as an accumulated angle, so the rotation matrix
/// built from it is orthonormal to rounding at every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidPose {
    /// Current center of mass.
    pub x_c: Vec2,
    /// Center of mass at t = 0; the body frame is anchored here.
    pub x_c0: Vec2,
    pub theta: f64,
    pub v_c: Vec2,
    /// Angular velocity (counter-clockwise).
    pub w: f64,
}

impl RigidPose {
    /// Pose at rest with identity rotation.
    pub fn at_rest(center: Vec2) -> Self {
        RigidPose { x_c: center, x_c0: center, theta: 0.0, v_c: [0.0, 0.0], w: 0.0 }
    }

    /// Rotation matrix `Q` as rows.
    pub fn rotation(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.theta.sin_cos();
        [[c, -s], [s, c]]
    }

    /// Maps a world point into body coordinates (relative to the center).
    #[inline]
    pub fn to_body(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        let dx = p[0] - self.x_c[0];
        let dy = p[1] - self.x_c[1];
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Maps body coordinates (relative to the center) to a world point.
    #[inline]
    pub fn to_world(&self, b: Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        [self.x_c[0] + c * b[0] - s * b[1], self.x_c[1] + s * b[0] + c * b[1]]
    }

    /// Rigid velocity `v_c + w x (p - x_c)` at a point.
    #[inline]
    pub fn velocity_at(&self, p: Vec2) -> Vec2 {
        [self.v_c[0] - self.w * (p[1] - self.x_c[1]), self.v_c[1] + self.w * (p[0] - self.x_c[0])]
    }
}

/// Body shape in its own frame, centered on its centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    Disk {
        radius: f64,
    },
    /// Simple closed polygon; vertices are shifted so the centroid is the origin.
    Polygon {
        vertices: Vec<Vec2>,
    },
}

impl ShapeSpec {
    /// Builds a polygon shape, re-centering the vertices on the area centroid.
    pub fn polygon(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Geometry("polygon needs at least 3 vertices".into()));
        }
        let (area, c) = polygon_area_centroid(&vertices);
        if area.abs() < 1e-14 {
            return Err(Error::Geometry("polygon has zero area".into()));
        }
        if polygon_self_intersects(&vertices) {
            return Err(Error::Geometry("polygon boundary is not a simple closed curve".into()));
        }
        let vertices = vertices.iter().map(|v| [v[0] - c[0], v[1] - c[1]]).collect();
        Ok(ShapeSpec::Polygon { vertices })
    }

    /// Signed distance in body coordinates, negative inside.
    pub fn signed_distance(&self, b: Vec2) -> f64 {
        match self {
            ShapeSpec::Disk { radius } => (b[0] * b[0] + b[1] * b[1]).sqrt() - radius,
            ShapeSpec::Polygon { vertices } => polygon_signed_distance(vertices, b),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            ShapeSpec::Disk { radius } => std::f64::consts::PI * radius * radius,
            ShapeSpec::Polygon { vertices } => polygon_area_centroid(vertices).0.abs(),
        }
    }

    /// Radius of the smallest centered disk containing the body.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            ShapeSpec::Disk { radius } => *radius,
            ShapeSpec::Polygon { vertices } => vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max),
        }
    }

    /// Points on the boundary in body coordinates with outward unit normals
    /// and arc-length weights.
    pub fn boundary_quadrature(&self, n: usize) -> Vec<(Vec2, Vec2, f64)> {
        match self {
            ShapeSpec::Disk { radius } => (0..n)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
                    let nrm = [a.cos(), a.sin()];
                    ([radius * nrm[0], radius * nrm[1]], nrm, 2.0 * std::f64::consts::PI * radius / n as f64)
                })
                .collect(),
            ShapeSpec::Polygon { vertices } => {
                let perimeter: f64 = (0..vertices.len())
                    .map(|k| {
                        let a = vertices[k];
                        let b = vertices[(k + 1) % vertices.len()];
                        (b[0] - a[0]).hypot(b[1] - a[1])
                    })
                    .sum();
                let orientation = polygon_area_centroid(vertices).0.signum();
                let mut out = Vec::with_capacity(n);
                for k in 0..vertices.len() {
                    let a = vertices[k];
                    let b = vertices[(k + 1) % vertices.len()];
                    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
                    let m = ((n as f64 * len / perimeter).round() as usize).max(1);
                    let nrm = [orientation * (b[1] - a[1]) / len, -orientation * (b[0] - a[0]) / len];
                    for s in 0..m {
                        let t = (s as f64 + 0.5) / m as f64;
                        out.push(([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], nrm, len / m as f64));
                    }
                }
                out
            }
        }
    }
}

fn polygon_area_centroid(v: &[Vec2]) -> (f64, Vec2) {
    let mut a = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 0..v.len() {
        let p = v[k];
        let q = v[(k + 1) % v.len()];
        let cross = p[0] * q[1] - q[0] * p[1];
        a += cross;
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    a *= 0.5;
    if a == 0.0 {
        return (0.0, [0.0, 0.0]);
    }
    (a, [cx / (6.0 * a), cy / (6.0 * a)])
}

fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let orient = |p: Vec2, q: Vec2, r: Vec2| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn polygon_self_intersects(v: &[Vec2]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

fn polygon_signed_distance(v: &[Vec2], p: Vec2) -> f64 {
    let mut best = f64::INFINITY;
    let mut inside = false;
    let n = v.len();
    for k in 0..n {
        let a = v[k];
        let b = v[(k + 1) % n];
        let e = [b[0] - a[0], b[1] - a[1]];
        let w = [p[0] - a[0], p[1] - a[1]];
        let t = ((w[0] * e[0] + w[1] * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
        let d = (w[0] - t * e[0]).hypot(w[1] - t * e[1]);
        best = best.min(d);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
    }
    if inside {
        -best
    } else {
        best
    }
}

/// Smoothed indicator of the body: 1 inside, 0 outside, linear across one cell.
#[inline]
pub fn smoothed_indicator(sd: f64, h: f64) -> f64 {
    (0.5 - sd / h).clamp(0.0, 1.0)
}

/// Phase-dependent fields derived from the pose on a fixed grid.
#[derive(Debug, Clone)]
pub struct PhaseMap {
    /// Signed distance to the body boundary at cell centers.
    pub sd: ScalarField,
    /// Signed distance at face centers.
    pub sd_face: MacField,
    /// Body indicator at cell centers, in [0, 1].
    pub chi: ScalarField,
    /// Body indicator at face centers.
    pub chi_face: MacField,
    /// Density `mu_p chi + mu_f (1 - chi)` at cell centers.
    pub mu: ScalarField,
    /// Density at face centers.
    pub mu_face: MacField,
    /// Dielectric coefficient on faces, harmonic average of the two phases
    /// weighted by the fraction of the center-to-center segment in the body.
    pub kappa_face: MacField,
    /// Cells whose center lies in the fluid (`sd > 0`).
    pub fluid: Vec<bool>,
}

impl PhaseMap {
    /// `1 - chi` at cell centers.
    pub fn chi_fluid(&self) -> ScalarField {
        ScalarField { nx: self.chi.nx, ny: self.chi.ny, data: self.chi.data.iter().map(|c| 1.0 - c).collect() }
    }

    /// Face `(u or v, index)` belongs to the rigid region.
    #[inline]
    pub fn is_body_xface(&self, k: usize) -> bool {
        self.sd_face.u[k] <= 0.0
    }

    #[inline]
    pub fn is_body_yface(&self, k: usize) -> bool {
        self.sd_face.v[k] <= 0.0
    }

    pub fn fluid_area(&self, grid: &Grid) -> f64 {
        self.fluid.iter().filter(|f| **f).count() as f64 * grid.cell_area()
    }
}

/// Material constants needed to build a [`PhaseMap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub mu_p: f64,
    pub mu_f: f64,
}

fn harmonic_kappa(sd_a: f64, sd_b: f64, kappa1: f64, kappa2: f64) -> f64 {
    let inside_frac = if sd_a <= 0.0 && sd_b <= 0.0 {
        1.0
    } else if sd_a > 0.0 && sd_b > 0.0 {
        0.0
    } else {
        let t = sd_a / (sd_a - sd_b);
        if sd_a <= 0.0 {
            t
        } else {
            1.0 - t
        }
    };
    1.0 / (inside_frac / kappa1 + (1.0 - inside_frac) / kappa2)
}

pub fn build_phase_map(pose: &RigidPose, shape: &ShapeSpec, grid: &Grid, params: PhaseParams) -> Result<PhaseMap> {
    let gap = gap_to_wall(pose, shape, grid);
    if gap <= 0.0 {
        return Err(Error::Geometry(format!("body intersects the enclosure wall (gap {gap:.3e})")));
    }
    let h = grid.h;
    let sd = ScalarField::from_fn(grid, |p| shape.signed_distance(pose.to_body(p)));
    let sd_face = MacField::from_face_fns(
        grid,
        |p| shape.signed_distance(pose.to_body(p)),
        |p| shape.signed_distance(pose.to_body(p)),
    );
    let chi =
        ScalarField { nx: grid.nx, ny: grid.ny, data: sd.data.iter().map(|d| smoothed_indicator(*d, h)).collect() };
    let mut chi_face = sd_face.clone();
    for c in chi_face.u.iter_mut().chain(chi_face.v.iter_mut()) {
        *c = smoothed_indicator(*c, h);
    }
    let mix = |c: f64| params.mu_p * c + params.mu_f * (1.0 - c);
    let mu = ScalarField { nx: grid.nx, ny: grid.ny, data: chi.data.iter().map(|c| mix(*c)).collect() };
    let mut mu_face = chi_face.clone();
    for c in mu_face.u.iter_mut().chain(mu_face.v.iter_mut()) {
        *c = mix(*c);
    }

    let mut kappa_face = MacField::zeros(grid);
    let (nx, ny) = (grid.nx, grid.ny);
    for j in 0..ny {
        for i in 0..=nx {
            let k = kappa_face.uidx(i, j);
            let (a, b) = if i == 0 {
                (sd_face.u[k], sd.at(0, j))
            } else if i == nx {
                (sd.at(nx - 1, j), sd_face.u[k])
            } else {
                (sd.at(i - 1, j), sd.at(i, j))
            };
            kappa_face.u[k] = harmonic_kappa(a, b, params.kappa1, params.kappa2);
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let k = kappa_face.vidx(i, j);
            let (a, b) = if j == 0 {
                (sd_face.v[k], sd.at(i, 0))
            } else if j == ny {
                (sd.at(i, ny - 1), sd_face.v[k])
            } else {
                (sd.at(i, j - 1), sd.at(i, j))
            };
            kappa_face.v[k] = harmonic_kappa(a, b, params.kappa1, params.kappa2);
        }
    }
    let fluid = sd.data.iter().map(|d| *d > 0.0).collect();
    Ok(PhaseMap { sd, sd_face, chi, chi_face, mu, mu_face, kappa_face, fluid })
}

/// Smallest distance between the body and the enclosure wall.
pub fn gap_to_wall(pose: &RigidPose, shape: &ShapeSpec, grid: &Grid) -> f64 {
    match shape {
        ShapeSpec::Disk { radius } => grid.wall_distance(pose.x_c) - radius,
        // The distance to an axis-aligned box boundary is minimized at a vertex.
        ShapeSpec::Polygon { vertices } => {
            vertices.iter().map(|v| grid.wall_distance(pose.to_world(*v))).fold(f64::INFINITY, f64::min)
        }
    }
}

/// Resamples the reference fixed-charge density onto the current pose:
/// `rho(x) = rho0(Q^{-1}(x - x_c) + x_c(0))`, bilinear, zero outside the body.
pub fn transport_fixed_charge(
    rho0: &ScalarField,
    pose: &RigidPose,
    phase: &PhaseMap,
    grid: &Grid,
) -> Result<ScalarField> {
    let (s, c) = pose.theta.sin_cos();
    let h = grid.h;
    // Work in cell-index coordinates so the identity pose samples nodes exactly.
    let cx = (pose.x_c[0] - grid.x_min) / h - 0.5;
    let cy = (pose.x_c[1] - grid.y_min) / h - 0.5;
    let c0x = (pose.x_c0[0] - grid.x_min) / h - 0.5;
    let c0y = (pose.x_c0[1] - grid.y_min) / h - 0.5;
    // xi = R^T p + (c0 - R^T c)
    let tx = c0x - (c * cx + s * cy);
    let ty = c0y - (-s * cx + c * cy);
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = ScalarField::zeros(grid);
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            if phase.chi.data[k] == 0.0 {
                continue;
            }
            let (pi, pj) = (i as f64, j as f64);
            let gx = c * pi + s * pj + tx;
            let gy = -s * pi + c * pj + ty;
            out.data[k] = sample_index_space(rho0, gx, gy);
        }
    }
    // Anything left outside the body means the reference support was not
    // compactly inside the body.
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            if phase.chi.data[k] != 0.0 {
                continue;
            }
            let gx = c * i as f64 + s * j as f64 + tx;
            let gy = -s * i as f64 + c * j as f64 + ty;
            if sample_index_space(rho0, gx, gy) != 0.0 {
                return Err(Error::InvariantViolation(format!(
                    "fixed charge leaks outside the body at cell ({i}, {j})"
                )));
            }
        }
    }
    Ok(out)
}

fn sample_index_space(f: &ScalarField, gx: f64, gy: f64) -> f64 {
    let (nx, ny) = (f.nx, f.ny);
    if gx < 0.0 || gy < 0.0 || gx > (nx - 1) as f64 || gy > (ny - 1) as f64 {
        return 0.0;
    }
    let i0 = (gx.floor() as usize).min(nx - 2);
    let j0 = (gy.floor() as usize).min(ny - 2);
    let tx = gx - i0 as f64;
    let ty = gy - j0 as f64;
    let f00 = f.at(i0, j0);
    let f10 = f.at(i0 + 1, j0);
    let f01 = f.at(i0, j0 + 1);
    let f11 = f.at(i0 + 1, j0 + 1);
    if tx == 0.0 && ty == 0.0 {
        return f00;
    }
    (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11)
}

/// The rigid field `v_c + w x (x - x_c)` on MAC faces.
pub fn rigid_velocity_field(pose: &RigidPose, grid: &Grid) -> MacField {
    MacField::from_fn(grid, |p| pose.velocity_at(p))
}

/// Moves the pose along its current rigid motion for `dt`; velocities are kept.
pub fn advance_pose(pose: &RigidPose, dt: f64) -> RigidPose {
    RigidPose {
        x_c: [pose.x_c[0] + dt * pose.v_c[0], pose.x_c[1] + dt * pose.v_c[1]],
        theta: pose.theta + dt * pose.w,
        ..*pose
    }
}
