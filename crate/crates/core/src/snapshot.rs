//! Binary snapshot container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "EKFSNAP\0"
//! version  u32
//! nx, ny   u32, u32
//! h, x_min, y_min           f64 x3
//! t        f64
//! step     u64
//! pose     f64 x8  (x_c, x_c0, theta, v_c, w)
//! scalars  u32 count, then per entry: name, f64
//! config   u32 byte length, UTF-8 text
//! arrays   u32 count, then per entry: name, u64 length, f64 x length
//! ```
//!
//! Names are a u16 byte length followed by UTF-8. The particle geometry is
//! not stored; it is rebuilt from the pose, which reproduces it exactly.

use crate::error::{Error, Result};
use crate::geometry::RigidPose;
use crate::grid::{Grid, MacField, ScalarField};
use crate::stepper::{Model, SimState, Totals};

pub const MAGIC: &[u8; 8] = b"EKFSNAP\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub t: f64,
    pub step: u64,
    pub pose: RigidPose,
    pub scalars: Vec<(String, f64)>,
    /// Resolved configuration of the run that produced the snapshot.
    pub config: String,
    pub arrays: Vec<(String, Vec<f64>)>,
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    let b = name.as_bytes();
    let len = u16::try_from(b.len()).expect("snapshot names are short");
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(b);
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Snapshot(format!(
                "truncated while reading {what}: need {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn text(&mut self, n: usize, what: &str) -> Result<String> {
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Snapshot(format!("{what} is not valid UTF-8")))
    }

    fn name(&mut self, what: &str) -> Result<String> {
        let n = self.u16(what)? as usize;
        self.text(n, what)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

impl Snapshot {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.nx as u32).to_le_bytes());
        out.extend_from_slice(&(self.ny as u32).to_le_bytes());
        let p = &self.pose;
        for x in [self.h, self.x_min, self.y_min, self.t] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        for x in [p.x_c[0], p.x_c[1], p.x_c0[0], p.x_c0[1], p.theta, p.v_c[0], p.v_c[1], p.w] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&(self.scalars.len() as u32).to_le_bytes());
        for (name, v) in &self.scalars {
            put_name(&mut out, name);
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, a) in &self.arrays {
            put_name(&mut out, name);
            out.extend_from_slice(&(a.len() as u64).to_le_bytes());
            for x in a {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
        let mut c = Cursor { buf: bytes, pos: 0 };
        if c.take(8, "magic")? != MAGIC {
            return Err(Error::Snapshot("not a snapshot file (bad magic)".into()));
        }
        let version = c.u32("version")?;
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported snapshot version {version} (expected {VERSION})")));
        }
        let nx = c.u32("nx")? as usize;
        let ny = c.u32("ny")? as usize;
        let h = c.f64("h")?;
        let x_min = c.f64("x_min")?;
        let y_min = c.f64("y_min")?;
        let t = c.f64("t")?;
        let step = c.u64("step")?;
        let mut p = [0.0; 8];
        for v in p.iter_mut() {
            *v = c.f64("pose")?;
        }
        let pose = RigidPose { x_c: [p[0], p[1]], x_c0: [p[2], p[3]], theta: p[4], v_c: [p[5], p[6]], w: p[7] };
        let n_scalars = c.u32("scalar count")? as usize;
        let mut scalars = Vec::new();
        for _ in 0..n_scalars {
            let name = c.name("scalar name")?;
            scalars.push((name, c.f64("scalar value")?));
        }
        let n_config = c.u32("config length")? as usize;
        let config = c.text(n_config, "config")?;
        let n_arrays = c.u32("array count")? as usize;
        let mut arrays = Vec::new();
        for _ in 0..n_arrays {
            let name = c.name("array name")?;
            let len = c.u64("array length")?;
            // Check against what is left before allocating.
            if len > (c.remaining() / 8) as u64 {
                return Err(Error::Snapshot(format!(
                    "truncated array {name:?}: declares {len} values, {} bytes left",
                    c.remaining()
                )));
            }
            let raw = c.take(len as usize * 8, "array data")?;
            arrays.push((name, raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()));
        }
        if c.remaining() != 0 {
            return Err(Error::Snapshot(format!("{} trailing bytes after the last array", c.remaining())));
        }
        Ok(Snapshot { nx, ny, h, x_min, y_min, t, step, pose, scalars, config, arrays })
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn array(&self, name: &str) -> Option<&[f64]> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn from_state(state: &SimState, grid: &Grid, config: &str) -> Snapshot {
        let mut arrays = vec![("psi".to_string(), state.psi.data.clone())];
        for (k, n) in state.n.iter().enumerate() {
            arrays.push((format!("n_{k}"), n.data.clone()));
        }
        arrays.push(("u".into(), state.u.u.clone()));
        arrays.push(("v".into(), state.u.v.clone()));
        arrays.push(("p".into(), state.p.data.clone()));
        arrays.push(("rho".into(), state.rho.data.clone()));
        let tot = &state.totals;
        Snapshot {
            nx: grid.nx,
            ny: grid.ny,
            h: grid.h,
            x_min: grid.x_min,
            y_min: grid.y_min,
            t: state.t,
            step: state.step as u64,
            pose: state.pose,
            scalars: vec![
                ("e_d".into(), tot.e_d),
                ("e_p".into(), tot.e_p),
                ("e_d_strain".into(), tot.e_d_strain),
                ("e_d_dd".into(), tot.e_d_dd),
                ("residual".into(), state.residual),
                ("picard_iters".into(), state.picard_iters as f64),
            ],
            config: config.to_string(),
            arrays,
        }
    }

    /// Rebuilds the full state against `model`, whose grid and species
    /// count must match.
    pub fn to_state(&self, model: &Model) -> Result<SimState> {
        let g = &model.grid;
        if (self.nx, self.ny) != (g.nx, g.ny) || self.h != g.h || self.x_min != g.x_min || self.y_min != g.y_min {
            return Err(Error::Snapshot(format!(
                "snapshot grid {}x{} (h = {}) does not match the model grid {}x{} (h = {})",
                self.nx, self.ny, self.h, g.nx, g.ny, g.h
            )));
        }
        let need = |name: &str, len: usize| -> Result<Vec<f64>> {
            let a = self.array(name).ok_or_else(|| Error::Snapshot(format!("missing array {name:?}")))?;
            if a.len() != len {
                return Err(Error::Snapshot(format!("array {name:?} has {} values, expected {len}", a.len())));
            }
            Ok(a.to_vec())
        };
        let scalar = |name: &str| self.scalar(name).ok_or_else(|| Error::Snapshot(format!("missing scalar {name:?}")));
        let cells = g.n_cells();
        let cell = |data| ScalarField { nx: g.nx, ny: g.ny, data };
        let n =
            (0..model.species.len()).map(|k| need(&format!("n_{k}"), cells).map(cell)).collect::<Result<Vec<_>>>()?;
        let mut u = MacField::zeros(g);
        u.u = need("u", u.u.len())?;
        u.v = need("v", u.v.len())?;
        let phase = model.rebuild_phase(&self.pose)?;
        let picard = scalar("picard_iters")?;
        Ok(SimState {
            t: self.t,
            step: self.step as usize,
            pose: self.pose,
            psi: cell(need("psi", cells)?),
            n,
            u,
            p: cell(need("p", cells)?),
            rho: cell(need("rho", cells)?),
            phase,
            totals: Totals {
                e_d: scalar("e_d")?,
                e_p: scalar("e_p")?,
                e_d_strain: scalar("e_d_strain")?,
                e_d_dd: scalar("e_d_dd")?,
            },
            residual: scalar("residual")?,
            picard_iters: if picard >= 0.0 && picard.fract() == 0.0 { picard as usize } else { 0 },
        })
    }
}

pub fn write_snapshot(path: &std::path::Path, snap: &Snapshot) -> Result<()> {
    std::fs::write(path, snap.encode()).map_err(|e| Error::io_at(path, e))?;
    Ok(())
}

pub fn read_snapshot(path: &std::path::Path) -> Result<Snapshot> {
    Snapshot::decode(&std::fs::read(path).map_err(|e| Error::io_at(path, e))?)
}
