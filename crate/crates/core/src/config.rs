//! Run configuration: a TOML file with sections `grid`, `shape`, `physics`,
//! `[[species]]`, `boundary`, `fixed_charge` and `run`.
//!
//! Parsing collects every problem (missing keys, wrong types, unknown keys,
//! out-of-range values) with its dotted key path before giving up. The
//! resolved form, with all defaults filled in, serializes back to TOML and
//! parses to an identical configuration.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{ConfigIssue, Error, Result};
use crate::fluid::ForceConvention;
use crate::geometry::{gap_to_wall, RigidPose, ShapeSpec};
use crate::grid::{Grid, ScalarField, Vec2};
use crate::nernst_planck::SpeciesParams;
use crate::poisson::ElectrostaticBC;
use crate::stepper::{Controls, Model, Physics, SimState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeConfig {
    #[serde(flatten)]
    pub spec: ShapeSpec,
    pub center: Vec2,
}

/// Initial concentration of one species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProfile {
    Uniform {
        value: f64,
    },
    /// `background + amplitude * (1 - r^2/radius^2)^2` inside `radius`.
    Blob {
        center: Vec2,
        radius: f64,
        amplitude: f64,
        background: f64,
    },
    /// `value * (1 + amplitude * U(-1, 1))` per cell, drawn from `run.seed`.
    Noisy {
        value: f64,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesConfig {
    pub z: i32,
    pub d: f64,
    pub initial: InitialProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryConfig {
    Constant {
        value: f64,
    },
    /// Potential of a uniform applied field: `offset - field . x`.
    Linear {
        field: Vec2,
        offset: f64,
    },
    /// Wall values at the wall-face midpoints, west/east bottom to top,
    /// south/north left to right.
    Tabulated {
        west: Vec<f64>,
        east: Vec<f64>,
        south: Vec<f64>,
        north: Vec<f64>,
    },
}

/// Fixed charge carried by the particle, given in the body frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixedChargeConfig {
    None,
    /// `amplitude * (1 - r^2/radius^2)^2` around `offset` from the centroid.
    Blob {
        offset: Vec2,
        radius: f64,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub t_end: f64,
    pub snapshot_every: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub safety: f64,
    pub gamma_min: f64,
    pub damping: f64,
    pub dt_factor: f64,
    pub max_steps: usize,
    pub projection_tol: f64,
    pub poisson_tol: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub shape: ShapeConfig,
    pub physics: Physics,
    pub species: Vec<SpeciesConfig>,
    pub boundary: BoundaryConfig,
    pub fixed_charge: FixedChargeConfig,
    pub run: RunConfig,
}

struct Reader {
    issues: Vec<ConfigIssue>,
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Reader {
    fn issue(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue { key: key.into(), message: message.into() });
    }

    fn unknown(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.issue(join(path, k), format!("unknown key (expected one of: {})", allowed.join(", ")));
            }
        }
    }

    fn table<'a>(&mut self, t: &'a Table, path: &str, key: &str, required: bool) -> Option<&'a Table> {
        match t.get(key) {
            Some(Value::Table(s)) => Some(s),
            Some(v) => {
                self.issue(join(path, key), format!("expected a table, found {}", type_name(v)));
                None
            }
            None => {
                if required {
                    self.issue(join(path, key), "missing required section");
                }
                None
            }
        }
    }

    fn value_f64(&mut self, key: &str, v: &Value) -> Option<f64> {
        match v {
            Value::Float(x) if x.is_finite() => Some(*x),
            Value::Float(_) => {
                self.issue(key, "must be finite");
                None
            }
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.issue(key, format!("expected a number, found {}", type_name(other)));
                None
            }
        }
    }

    fn f64(&mut self, t: &Table, path: &str, key: &str, default: Option<f64>) -> Option<f64> {
        let full = join(path, key);
        match t.get(key) {
            Some(v) => self.value_f64(&full, v),
            None => {
                if default.is_none() {
                    self.issue(full, "missing required key");
                }
                default
            }
        }
    }

    fn positive(&mut self, t: &Table, path: &str, key: &str, default: Option<f64>) -> Option<f64> {
        let v = self.f64(t, path, key, default)?;
        if v > 0.0 {
            Some(v)
        } else {
            self.issue(join(path, key), format!("must be > 0, got {v}"));
            None
        }
    }

    fn nonneg(&mut self, t: &Table, path: &str, key: &str, default: Option<f64>) -> Option<f64> {
        let v = self.f64(t, path, key, default)?;
        if v >= 0.0 {
            Some(v)
        } else {
            self.issue(join(path, key), format!("must be >= 0, got {v}"));
            None
        }
    }

    fn int(&mut self, t: &Table, path: &str, key: &str, default: Option<i64>) -> Option<i64> {
        let full = join(path, key);
        match t.get(key) {
            Some(Value::Integer(i)) => Some(*i),
            Some(v) => {
                self.issue(full, format!("expected an integer, found {}", type_name(v)));
                None
            }
            None => {
                if default.is_none() {
                    self.issue(full, "missing required key");
                }
                default
            }
        }
    }

    fn count(&mut self, t: &Table, path: &str, key: &str, default: Option<i64>, min: i64) -> Option<usize> {
        let v = self.int(t, path, key, default)?;
        if v >= min {
            Some(v as usize)
        } else {
            self.issue(join(path, key), format!("must be >= {min}, got {v}"));
            None
        }
    }

    fn string<'a>(&mut self, t: &'a Table, path: &str, key: &str, default: Option<&'a str>) -> Option<&'a str> {
        let full = join(path, key);
        match t.get(key) {
            Some(Value::String(s)) => Some(s.as_str()),
            Some(v) => {
                self.issue(full, format!("expected a string, found {}", type_name(v)));
                None
            }
            None => {
                if default.is_none() {
                    self.issue(full, "missing required key");
                }
                default
            }
        }
    }

    fn numbers(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<f64>> {
        let full = join(path, key);
        match t.get(key) {
            Some(Value::Array(a)) => {
                let mut out = Vec::with_capacity(a.len());
                let mut ok = true;
                for (k, v) in a.iter().enumerate() {
                    match self.value_f64(&format!("{full}[{k}]"), v) {
                        Some(x) => out.push(x),
                        None => ok = false,
                    }
                }
                ok.then_some(out)
            }
            Some(v) => {
                self.issue(full, format!("expected an array, found {}", type_name(v)));
                None
            }
            None => {
                self.issue(full, "missing required key");
                None
            }
        }
    }

    fn vec2(&mut self, t: &Table, path: &str, key: &str, default: Option<Vec2>) -> Option<Vec2> {
        if !t.contains_key(key) {
            if default.is_none() {
                self.issue(join(path, key), "missing required key");
            }
            return default;
        }
        let v = self.numbers(t, path, key)?;
        if v.len() == 2 {
            Some([v[0], v[1]])
        } else {
            self.issue(join(path, key), format!("expected 2 numbers, found {}", v.len()));
            None
        }
    }

    fn grid(&mut self, root: &Table) -> Option<GridConfig> {
        let t = self.table(root, "", "grid", true)?;
        let p = "grid";
        self.unknown(t, p, &["nx", "ny", "x_min", "x_max", "y_min", "y_max"]);
        let nx = self.count(t, p, "nx", None, 3);
        let ny = self.count(t, p, "ny", None, 3);
        let x_min = self.f64(t, p, "x_min", Some(-1.0));
        let x_max = self.f64(t, p, "x_max", Some(1.0));
        let y_min = self.f64(t, p, "y_min", Some(-1.0));
        let y_max = self.f64(t, p, "y_max", Some(1.0));
        let g = GridConfig { nx: nx?, ny: ny?, x_min: x_min?, x_max: x_max?, y_min: y_min?, y_max: y_max? };
        if let Err(e) = Grid::new(g.nx, g.ny, g.x_min, g.x_max, g.y_min, g.y_max) {
            self.issue(p, e.to_string());
            return None;
        }
        Some(g)
    }

    fn shape(&mut self, root: &Table) -> Option<ShapeConfig> {
        let t = self.table(root, "", "shape", true)?;
        let p = "shape";
        let kind = self.string(t, p, "kind", Some("disk"));
        let center = self.vec2(t, p, "center", Some([0.0, 0.0]));
        let spec = match kind? {
            "disk" => {
                self.unknown(t, p, &["kind", "center", "radius"]);
                ShapeSpec::Disk { radius: self.positive(t, p, "radius", None)? }
            }
            "polygon" => {
                self.unknown(t, p, &["kind", "center", "vertices"]);
                let full = join(p, "vertices");
                let verts = match t.get("vertices") {
                    Some(Value::Array(a)) => {
                        let mut out = Vec::new();
                        for (k, v) in a.iter().enumerate() {
                            let key = format!("{full}[{k}]");
                            match v {
                                Value::Array(xy) if xy.len() == 2 => {
                                    let x = self.value_f64(&key, &xy[0]);
                                    let y = self.value_f64(&key, &xy[1]);
                                    out.push([x?, y?]);
                                }
                                _ => {
                                    self.issue(key, "expected a pair [x, y]");
                                    return None;
                                }
                            }
                        }
                        out
                    }
                    Some(v) => {
                        self.issue(full, format!("expected an array of [x, y] pairs, found {}", type_name(v)));
                        return None;
                    }
                    None => {
                        self.issue(full, "missing required key");
                        return None;
                    }
                };
                match ShapeSpec::polygon(verts) {
                    Ok(s) => s,
                    Err(e) => {
                        self.issue(full, e.to_string());
                        return None;
                    }
                }
            }
            other => {
                self.issue(join(p, "kind"), format!("unknown shape kind {other:?} (expected disk or polygon)"));
                return None;
            }
        };
        Some(ShapeConfig { spec, center: center? })
    }

    fn physics(&mut self, root: &Table) -> Option<Physics> {
        let empty = Table::new();
        let t = self.table(root, "", "physics", false).unwrap_or(&empty);
        let p = "physics";
        self.unknown(t, p, &["kappa1", "kappa2", "eta", "mu_p", "mu_f", "e", "kbt", "force_convention"]);
        let d = Physics::default();
        let kappa1 = self.positive(t, p, "kappa1", Some(d.kappa1));
        let kappa2 = self.positive(t, p, "kappa2", Some(d.kappa2));
        let eta = self.positive(t, p, "eta", Some(d.eta));
        let mu_p = self.positive(t, p, "mu_p", Some(d.mu_p));
        let mu_f = self.positive(t, p, "mu_f", Some(d.mu_f));
        let e = self.positive(t, p, "e", Some(d.e));
        let kbt = self.positive(t, p, "kbt", Some(d.kbt));
        let conv = match self.string(t, p, "force_convention", Some("per_mass"))? {
            "per_mass" => Some(ForceConvention::PerMass),
            "per_volume" => Some(ForceConvention::PerVolume),
            other => {
                self.issue(
                    join(p, "force_convention"),
                    format!("unknown value {other:?} (expected per_mass or per_volume)"),
                );
                None
            }
        };
        Some(Physics {
            kappa1: kappa1?,
            kappa2: kappa2?,
            eta: eta?,
            mu_p: mu_p?,
            mu_f: mu_f?,
            e: e?,
            kbt: kbt?,
            force_convention: conv?,
        })
    }

    fn profile(&mut self, t: &Table, path: &str) -> Option<InitialProfile> {
        let kind = self.string(t, path, "kind", Some("uniform"))?;
        match kind {
            "uniform" => {
                self.unknown(t, path, &["kind", "value"]);
                Some(InitialProfile::Uniform { value: self.nonneg(t, path, "value", Some(1.0))? })
            }
            "blob" => {
                self.unknown(t, path, &["kind", "center", "radius", "amplitude", "background"]);
                let center = self.vec2(t, path, "center", None);
                let radius = self.positive(t, path, "radius", None);
                let amplitude = self.nonneg(t, path, "amplitude", None);
                let background = self.nonneg(t, path, "background", Some(0.0));
                Some(InitialProfile::Blob {
                    center: center?,
                    radius: radius?,
                    amplitude: amplitude?,
                    background: background?,
                })
            }
            "noisy" => {
                self.unknown(t, path, &["kind", "value", "amplitude"]);
                let value = self.nonneg(t, path, "value", None);
                let amplitude = self.f64(t, path, "amplitude", None)?;
                if !(0.0..=1.0).contains(&amplitude) {
                    self.issue(join(path, "amplitude"), format!("must lie in [0, 1], got {amplitude}"));
                    return None;
                }
                Some(InitialProfile::Noisy { value: value?, amplitude })
            }
            other => {
                self.issue(
                    join(path, "kind"),
                    format!("unknown profile kind {other:?} (expected uniform, blob or noisy)"),
                );
                None
            }
        }
    }

    fn species(&mut self, root: &Table) -> Option<Vec<SpeciesConfig>> {
        let arr = match root.get("species") {
            Some(Value::Array(a)) => a,
            Some(v) => {
                self.issue("species", format!("expected an array of tables, found {}", type_name(v)));
                return None;
            }
            None => {
                self.issue("species", "at least one species is required");
                return None;
            }
        };
        if arr.is_empty() {
            self.issue("species", "at least one species is required");
            return None;
        }
        let mut out = Vec::new();
        let mut ok = true;
        for (k, v) in arr.iter().enumerate() {
            let p = format!("species[{k}]");
            let Value::Table(t) = v else {
                self.issue(p, format!("expected a table, found {}", type_name(v)));
                ok = false;
                continue;
            };
            self.unknown(t, &p, &["z", "d", "initial"]);
            let z = self.int(t, &p, "z", None).and_then(|z| match i32::try_from(z) {
                Ok(z) => Some(z),
                Err(_) => {
                    self.issue(join(&p, "z"), "out of range");
                    None
                }
            });
            let d = self.positive(t, &p, "d", None);
            let empty = Table::new();
            let it = self.table(t, &p, "initial", false).unwrap_or(&empty);
            let initial = self.profile(it, &join(&p, "initial"));
            match (z, d, initial) {
                (Some(z), Some(d), Some(initial)) => out.push(SpeciesConfig { z, d, initial }),
                _ => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn boundary(&mut self, root: &Table) -> Option<BoundaryConfig> {
        let empty = Table::new();
        let t = self.table(root, "", "boundary", false).unwrap_or(&empty);
        let p = "boundary";
        match self.string(t, p, "kind", Some("constant"))? {
            "constant" => {
                self.unknown(t, p, &["kind", "value"]);
                Some(BoundaryConfig::Constant { value: self.f64(t, p, "value", Some(0.0))? })
            }
            "linear" => {
                self.unknown(t, p, &["kind", "field", "offset"]);
                let field = self.vec2(t, p, "field", None);
                let offset = self.f64(t, p, "offset", Some(0.0));
                Some(BoundaryConfig::Linear { field: field?, offset: offset? })
            }
            "tabulated" => {
                self.unknown(t, p, &["kind", "west", "east", "south", "north"]);
                let west = self.numbers(t, p, "west");
                let east = self.numbers(t, p, "east");
                let south = self.numbers(t, p, "south");
                let north = self.numbers(t, p, "north");
                Some(BoundaryConfig::Tabulated { west: west?, east: east?, south: south?, north: north? })
            }
            other => {
                self.issue(
                    join(p, "kind"),
                    format!("unknown boundary kind {other:?} (expected constant, linear or tabulated)"),
                );
                None
            }
        }
    }

    fn fixed_charge(&mut self, root: &Table) -> Option<FixedChargeConfig> {
        let empty = Table::new();
        let t = self.table(root, "", "fixed_charge", false).unwrap_or(&empty);
        let p = "fixed_charge";
        match self.string(t, p, "kind", Some("none"))? {
            "none" => {
                self.unknown(t, p, &["kind"]);
                Some(FixedChargeConfig::None)
            }
            "blob" => {
                self.unknown(t, p, &["kind", "offset", "radius", "amplitude"]);
                let offset = self.vec2(t, p, "offset", Some([0.0, 0.0]));
                let radius = self.positive(t, p, "radius", None);
                let amplitude = self.f64(t, p, "amplitude", None);
                Some(FixedChargeConfig::Blob { offset: offset?, radius: radius?, amplitude: amplitude? })
            }
            other => {
                self.issue(join(p, "kind"), format!("unknown fixed charge kind {other:?} (expected none or blob)"));
                None
            }
        }
    }

    fn run(&mut self, root: &Table, h: Option<f64>) -> Option<RunConfig> {
        let empty = Table::new();
        let t = self.table(root, "", "run", false).unwrap_or(&empty);
        let p = "run";
        self.unknown(
            t,
            p,
            &[
                "t_end",
                "snapshot_every",
                "tol",
                "max_iter",
                "safety",
                "gamma_min",
                "damping",
                "dt_factor",
                "max_steps",
                "projection_tol",
                "poisson_tol",
                "seed",
            ],
        );
        let t_end = self.nonneg(t, p, "t_end", None);
        let snapshot_every = self.nonneg(t, p, "snapshot_every", Some(0.0));
        let tol = self.positive(t, p, "tol", Some(1e-8));
        let max_iter = self.count(t, p, "max_iter", Some(25), 1);
        let safety = self.unit(t, p, "safety", 0.5);
        let gamma_min = self.positive(t, p, "gamma_min", h.map(|h| 2.0 * h));
        let damping = self.unit(t, p, "damping", 1.0);
        let dt_factor = self.positive(t, p, "dt_factor", Some(1.0));
        let max_steps = self.count(t, p, "max_steps", Some(1_000_000), 0);
        let projection_tol = self.positive(t, p, "projection_tol", Some(1e-10));
        let poisson_tol = self.positive(t, p, "poisson_tol", Some(1e-10));
        let seed = self.int(t, p, "seed", Some(0)).and_then(|s| match u64::try_from(s) {
            Ok(s) => Some(s),
            Err(_) => {
                self.issue(join(p, "seed"), "must be >= 0");
                None
            }
        });
        Some(RunConfig {
            t_end: t_end?,
            snapshot_every: snapshot_every?,
            tol: tol?,
            max_iter: max_iter?,
            safety: safety?,
            gamma_min: gamma_min?,
            damping: damping?,
            dt_factor: dt_factor?,
            max_steps: max_steps?,
            projection_tol: projection_tol?,
            poisson_tol: poisson_tol?,
            seed: seed?,
        })
    }

    /// A value in (0, 1].
    fn unit(&mut self, t: &Table, path: &str, key: &str, default: f64) -> Option<f64> {
        let v = self.f64(t, path, key, Some(default))?;
        if v > 0.0 && v <= 1.0 {
            Some(v)
        } else {
            self.issue(join(path, key), format!("must lie in (0, 1], got {v}"));
            None
        }
    }
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        let key = e.span().map(|s| format!("<line {}>", text[..s.start.min(text.len())].lines().count().max(1)));
        Error::Config(vec![ConfigIssue { key: key.unwrap_or_else(|| "<document>".into()), message: msg }])
    })?;
    let mut r = Reader { issues: Vec::new() };
    r.unknown(&root, "", &["grid", "shape", "physics", "species", "boundary", "fixed_charge", "run"]);
    let grid = r.grid(&root);
    let h = grid.as_ref().and_then(|g| Grid::new(g.nx, g.ny, g.x_min, g.x_max, g.y_min, g.y_max).ok()).map(|g| g.h);
    let shape = r.shape(&root);
    let physics = r.physics(&root);
    let species = r.species(&root);
    let boundary = r.boundary(&root);
    let fixed_charge = r.fixed_charge(&root);
    let run = r.run(&root, h);
    match (grid, shape, physics, species, boundary, fixed_charge, run) {
        (Some(grid), Some(shape), Some(physics), Some(species), Some(boundary), Some(fixed_charge), Some(run))
            if r.issues.is_empty() =>
        {
            let cfg = SimConfig { grid, shape, physics, species, boundary, fixed_charge, run };
            let issues = cfg.validate();
            if issues.is_empty() {
                Ok(cfg)
            } else {
                Err(Error::Config(issues))
            }
        }
        _ => Err(Error::Config(r.issues)),
    }
}

pub fn parse_config(path: &std::path::Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    parse_config_str(&text)
}

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (1.0 - r2).powi(2)
    } else {
        0.0
    }
}

impl SimConfig {
    pub fn grid(&self) -> Grid {
        let g = &self.grid;
        Grid::new(g.nx, g.ny, g.x_min, g.x_max, g.y_min, g.y_max).expect("validated grid")
    }

    /// Cross-section checks that need more than one field.
    fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let grid = self.grid();
        let pose = RigidPose::at_rest(self.shape.center);
        let gap = gap_to_wall(&pose, &self.shape.spec, &grid);
        if !(gap > self.run.gamma_min) {
            issues.push(ConfigIssue {
                key: "shape.center".into(),
                message: format!(
                    "initial gap between the particle and the enclosure wall is {gap:.6}, must exceed gamma_min = {}",
                    self.run.gamma_min
                ),
            });
        }
        if let BoundaryConfig::Tabulated { west, east, south, north } = &self.boundary {
            for (name, v, n) in
                [("west", west, grid.ny), ("east", east, grid.ny), ("south", south, grid.nx), ("north", north, grid.nx)]
            {
                if v.len() != n {
                    issues.push(ConfigIssue {
                        key: format!("boundary.{name}"),
                        message: format!("expected {n} values, found {}", v.len()),
                    });
                }
            }
        }
        if let FixedChargeConfig::Blob { offset, radius, .. } = &self.fixed_charge {
            // Resampling reads a 2x2 node stencil around points up to h/2
            // outside the body, so the support needs a (sqrt 2 - 1/2) h margin.
            let depth = -self.shape.spec.signed_distance(*offset);
            let h = (self.grid.x_max - self.grid.x_min) / self.grid.nx.max(1) as f64;
            let margin = (std::f64::consts::SQRT_2 - 0.5) * h;
            if !(depth > *radius + margin) {
                issues.push(ConfigIssue {
                    key: "fixed_charge.radius".into(),
                    message: format!(
                        "fixed charge support (radius {radius} around {offset:?}) must lie inside the particle with a margin of {margin:.6} (depth {depth:.6})"
                    ),
                });
            }
        }
        issues
    }

    /// Resolved configuration as TOML, every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn boundary_condition(&self, grid: &Grid) -> Result<ElectrostaticBC> {
        match &self.boundary {
            BoundaryConfig::Constant { value } => Ok(ElectrostaticBC::constant(grid, *value)),
            BoundaryConfig::Linear { field, offset } => Ok(ElectrostaticBC::linear(grid, *field, *offset)),
            BoundaryConfig::Tabulated { west, east, south, north } => {
                ElectrostaticBC::tabulated(grid, west.clone(), east.clone(), south.clone(), north.clone())
            }
        }
    }

    /// Fixed charge in the reference configuration (particle at its initial
    /// center, unrotated).
    pub fn fixed_charge_field(&self, grid: &Grid) -> ScalarField {
        match &self.fixed_charge {
            FixedChargeConfig::None => ScalarField::zeros(grid),
            FixedChargeConfig::Blob { offset, radius, amplitude } => {
                let c = [self.shape.center[0] + offset[0], self.shape.center[1] + offset[1]];
                ScalarField::from_fn(grid, |p| {
                    let r2 = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (radius * radius);
                    amplitude * bump(r2)
                })
            }
        }
    }

    pub fn initial_concentrations(&self, grid: &Grid) -> Vec<ScalarField> {
        let mut rng = StdRng::seed_from_u64(self.run.seed);
        self.species
            .iter()
            .map(|s| match &s.initial {
                InitialProfile::Uniform { value } => ScalarField::filled(grid, *value),
                InitialProfile::Blob { center, radius, amplitude, background } => ScalarField::from_fn(grid, |p| {
                    let r2 = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)) / (radius * radius);
                    background + amplitude * bump(r2)
                }),
                InitialProfile::Noisy { value, amplitude } => {
                    ScalarField::from_fn(grid, |_| value * (1.0 + amplitude * rng.random_range(-1.0..=1.0)))
                }
            })
            .collect()
    }

    pub fn controls(&self) -> Controls {
        let r = &self.run;
        Controls {
            t_end: r.t_end,
            snapshot_every: r.snapshot_every,
            picard_tol: r.tol,
            max_iter: r.max_iter,
            safety: r.safety,
            gamma_min: r.gamma_min,
            projection_tol: r.projection_tol,
            poisson_tol: r.poisson_tol,
            damping: r.damping,
            dt_factor: r.dt_factor,
            max_steps: r.max_steps,
        }
    }

    pub fn model(&self) -> Result<Model> {
        let grid = self.grid();
        Ok(Model {
            grid,
            shape: self.shape.spec.clone(),
            physics: self.physics,
            species: self.species.iter().map(|s| SpeciesParams { z: s.z, d: s.d }).collect(),
            bc: self.boundary_condition(&grid)?,
            rho0: self.fixed_charge_field(&grid),
            controls: self.controls(),
        })
    }

    /// The model and its t = 0 state.
    pub fn build(&self) -> Result<(Model, SimState)> {
        let model = self.model()?;
        let state = model.initial_state(self.shape.center, self.initial_concentrations(&model.grid))?;
        Ok((model, state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
nx = 32
ny = 32

[shape]
radius = 0.25

[[species]]
z = 1
d = 1.0

[run]
t_end = 0.1
"#;

    fn issues(text: &str) -> Vec<ConfigIssue> {
        match parse_config_str(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_file_gets_documented_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!((c.grid.x_min, c.grid.x_max), (-1.0, 1.0));
        assert_eq!(c.shape.center, [0.0, 0.0]);
        assert_eq!(c.physics, Physics::default());
        assert_eq!(c.species[0].initial, InitialProfile::Uniform { value: 1.0 });
        assert_eq!(c.boundary, BoundaryConfig::Constant { value: 0.0 });
        assert_eq!(c.fixed_charge, FixedChargeConfig::None);
        assert_eq!(c.run.tol, 1e-8);
        assert_eq!(c.run.max_iter, 25);
        assert_eq!(c.run.gamma_min, 2.0 * 2.0 / 32.0);
        assert_eq!(c.run.damping, 1.0);
        let echo = c.to_toml();
        assert_eq!(parse_config_str(&echo).unwrap(), c);
    }

    #[test]
    fn negative_permittivity_is_named() {
        let text = MINIMAL.replace("[shape]", "[physics]\nkappa1 = -1\n\n[shape]");
        let v = issues(&text);
        assert!(v.iter().any(|i| i.key == "physics.kappa1"), "{v:?}");
    }

    #[test]
    fn overlapping_wall_is_reported() {
        let text = MINIMAL.replace("radius = 0.25", "radius = 0.25\ncenter = [0.8, 0.0]");
        let v = issues(&text);
        assert!(v.iter().any(|i| i.key == "shape.center" && i.message.contains("initial gap")), "{v:?}");
    }

    #[test]
    fn all_problems_are_collected() {
        let text = r#"
[grid]
nx = "many"
[shape]
kind = "disk"
[physics]
eta = 0
mystery = 1
[[species]]
z = 1.5
d = -1
"#;
        let v = issues(text);
        let keys: Vec<&str> = v.iter().map(|i| i.key.as_str()).collect();
        for k in [
            "grid.nx",
            "grid.ny",
            "shape.radius",
            "physics.eta",
            "physics.mystery",
            "species[0].z",
            "species[0].d",
            "run.t_end",
        ] {
            assert!(keys.contains(&k), "{k} missing from {keys:?}");
        }
    }

    #[test]
    fn fixed_charge_must_sit_inside_the_body() {
        let text = format!("{MINIMAL}\n[fixed_charge]\nkind = \"blob\"\nradius = 0.3\namplitude = 1.0\n");
        let v = issues(&text);
        assert!(v.iter().any(|i| i.key == "fixed_charge.radius"), "{v:?}");
    }

    #[test]
    fn syntax_errors_carry_a_location() {
        let v = issues("[grid\nnx = 3");
        assert_eq!(v.len(), 1);
        assert!(v[0].key.starts_with("<line"), "{v:?}");
    }

    #[test]
    fn builds_a_runnable_state() {
        let text = format!(
            "{MINIMAL}\n[boundary]\nkind = \"linear\"\nfield = [1.0, 0.0]\n[fixed_charge]\nkind = \"blob\"\nradius = 0.15\namplitude = 2.0\n"
        );
        let c = parse_config_str(&text).unwrap();
        let (m, s) = c.build().unwrap();
        assert_eq!(m.species.len(), 1);
        assert!(s.rho.integral(&m.grid) > 0.0);
        assert!(s.psi.is_finite());
    }
}
