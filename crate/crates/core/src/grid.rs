//! Uniform Cartesian grid over the rectangular enclosure, with cell-centered
//! scalar fields and staggered (MAC) face fields.
//!
//! Cell `(i, j)` has its center at `(x_min + (i + 1/2) h, y_min + (j + 1/2) h)`
//! and is stored at `j * nx + i`. An x-face `(i, j)` with `0 <= i <= nx` sits at
//! `(x_min + i h, y_min + (j + 1/2) h)`; a y-face `(i, j)` with `0 <= j <= ny`
//! sits at `(x_min + (i + 1/2) h, y_min + j h)`.

use crate::error::{Error, Result};

/// Two-component vector.
pub type Vec2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub x_min: f64,
    pub y_min: f64,
}

impl Grid {
    /// Builds a grid over `[x_min, x_max] x [y_min, y_max]`; the two extents
    /// must give the same spacing.
    pub fn new(nx: usize, ny: usize, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::Geometry(format!("grid must have at least 3x3 cells, got {nx}x{ny}")));
        }
        let hx = (x_max - x_min) / nx as f64;
        let hy = (y_max - y_min) / ny as f64;
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::Geometry("grid extents must be increasing and finite".into()));
        }
        if ((hx - hy) / hx).abs() > 1e-9 {
            return Err(Error::Geometry(format!("cells must be square: hx = {hx}, hy = {hy}")));
        }
        Ok(Grid { nx, ny, h: hx, x_min, y_min })
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.nx as f64 * self.h
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + self.ny as f64 * self.h
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        [self.x_min + (i as f64 + 0.5) * self.h, self.y_min + (j as f64 + 0.5) * self.h]
    }

    #[inline]
    pub fn xface_center(&self, i: usize, j: usize) -> Vec2 {
        [self.x_min + i as f64 * self.h, self.y_min + (j as f64 + 0.5) * self.h]
    }

    #[inline]
    pub fn yface_center(&self, i: usize, j: usize) -> Vec2 {
        [self.x_min + (i as f64 + 0.5) * self.h, self.y_min + j as f64 * self.h]
    }

    /// Cell area `h^2`.
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn area(&self) -> f64 {
        self.nx as f64 * self.ny as f64 * self.cell_area()
    }

    /// Distance from a point to the nearest enclosure wall (negative outside).
    pub fn wall_distance(&self, p: Vec2) -> f64 {
        let dx = (p[0] - self.x_min).min(self.x_max() - p[0]);
        let dy = (p[1] - self.y_min).min(self.y_max() - p[1]);
        dx.min(dy)
    }

    /// Same domain with every cell split in two along each axis.
    pub fn refined(&self) -> Grid {
        Grid { nx: 2 * self.nx, ny: 2 * self.ny, h: 0.5 * self.h, ..*self }
    }
}

/// Cell-centered scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::filled(grid, 0.0)
    }

    pub fn filled(grid: &Grid, value: f64) -> Self {
        ScalarField { nx: grid.nx, ny: grid.ny, data: vec![value; grid.n_cells()] }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(Vec2) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data.push(f(grid.cell_center(i, j)));
            }
        }
        ScalarField { nx: grid.nx, ny: grid.ny, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nx + i]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[j * self.nx + i]
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.nx == grid.nx && self.ny == grid.ny && self.data.len() == grid.n_cells()
    }

    /// Midpoint-rule integral over the enclosure.
    pub fn integral(&self, grid: &Grid) -> f64 {
        self.data.iter().sum::<f64>() * grid.cell_area()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self, grid: &Grid) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() * grid.cell_area()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Cell-centered two-component vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField { x: ScalarField::zeros(grid), y: ScalarField::zeros(grid) }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Vec2 {
        [self.x.at(i, j), self.y.at(i, j)]
    }
}

/// Staggered face field: `u` lives on x-faces ((nx+1) x ny), `v` on y-faces
/// (nx x (ny+1)). Used for velocities, fluxes and face coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MacField {
    pub nx: usize,
    pub ny: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl MacField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::filled(grid, 0.0)
    }

    pub fn filled(grid: &Grid, value: f64) -> Self {
        MacField {
            nx: grid.nx,
            ny: grid.ny,
            u: vec![value; (grid.nx + 1) * grid.ny],
            v: vec![value; grid.nx * (grid.ny + 1)],
        }
    }

    /// Samples a vector function: x-component on x-faces, y-component on y-faces.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(Vec2) -> Vec2) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                out.u[j * (grid.nx + 1) + i] = f(grid.xface_center(i, j))[0];
            }
        }
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                out.v[j * grid.nx + i] = f(grid.yface_center(i, j))[1];
            }
        }
        out
    }

    /// Samples separate scalar functions on x- and y-faces.
    pub fn from_face_fns(grid: &Grid, mut fu: impl FnMut(Vec2) -> f64, mut fv: impl FnMut(Vec2) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                out.u[j * (grid.nx + 1) + i] = fu(grid.xface_center(i, j));
            }
        }
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                out.v[j * grid.nx + i] = fv(grid.yface_center(i, j));
            }
        }
        out
    }

    #[inline]
    pub fn uidx(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn vidx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn u_at(&self, i: usize, j: usize) -> f64 {
        self.u[j * (self.nx + 1) + i]
    }

    #[inline]
    pub fn v_at(&self, i: usize, j: usize) -> f64 {
        self.v[j * self.nx + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(self.v.iter()).fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }

    /// Discrete divergence at cell centers.
    pub fn divergence(&self, grid: &Grid) -> ScalarField {
        let mut div = ScalarField::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                div.data[grid.idx(i, j)] =
                    (self.u_at(i + 1, j) - self.u_at(i, j) + self.v_at(i, j + 1) - self.v_at(i, j)) / grid.h;
            }
        }
        div
    }

    /// Velocity interpolated to cell centers.
    pub fn cell_average(&self, grid: &Grid) -> VectorField {
        let mut out = VectorField::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let k = grid.idx(i, j);
                out.x.data[k] = 0.5 * (self.u_at(i, j) + self.u_at(i + 1, j));
                out.y.data[k] = 0.5 * (self.v_at(i, j) + self.v_at(i, j + 1));
            }
        }
        out
    }

    /// Sum of `weight * self * other` over all faces.
    pub fn weighted_dot(&self, other: &MacField, weight: &MacField) -> f64 {
        let su: f64 = self.u.iter().zip(&other.u).zip(&weight.u).map(|((a, b), w)| a * b * w).sum();
        let sv: f64 = self.v.iter().zip(&other.v).zip(&weight.v).map(|((a, b), w)| a * b * w).sum();
        su + sv
    }

    pub fn axpy(&mut self, alpha: f64, other: &MacField) {
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += alpha * b;
        }
        for (a, b) in self.v.iter_mut().zip(&other.v) {
            *a += alpha * b;
        }
    }

    /// Zeroes the normal component on the enclosure walls.
    pub fn zero_wall_normals(&mut self) {
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            self.u[j * (nx + 1)] = 0.0;
            self.u[j * (nx + 1) + nx] = 0.0;
        }
        for i in 0..nx {
            self.v[i] = 0.0;
            self.v[ny * nx + i] = 0.0;
        }
    }
}

/// Bilinear interpolation of a cell-centered field at an arbitrary point.
/// Points outside the cell-center lattice are clamped to its boundary.
pub fn bilinear(grid: &Grid, f: &ScalarField, p: Vec2) -> f64 {
    let gx = ((p[0] - grid.x_min) / grid.h - 0.5).clamp(0.0, (grid.nx - 1) as f64);
    let gy = ((p[1] - grid.y_min) / grid.h - 0.5).clamp(0.0, (grid.ny - 1) as f64);
    let i0 = (gx.floor() as usize).min(grid.nx - 2);
    let j0 = (gy.floor() as usize).min(grid.ny - 2);
    let tx = gx - i0 as f64;
    let ty = gy - j0 as f64;
    let f00 = f.at(i0, j0);
    let f10 = f.at(i0 + 1, j0);
    let f01 = f.at(i0, j0 + 1);
    let f11 = f.at(i0 + 1, j0 + 1);
    (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11)
}
