//! PNG heatmaps of the last snapshot and time series of the diagnostics
//! table. Output depends only on the run directory contents.

use std::path::{Path, PathBuf};

use ekflow::output::parse_diagnostics;
use ekflow::snapshot::{read_snapshot, Snapshot};
use ekflow::stepper::DiagnosticRow;
use ekflow::{Error, Result};
use image::{Rgb, RgbImage};
use rayon::prelude::*;

// Viridis, sampled at nine points.
const MAP: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 45, 123],
    [59, 82, 139],
    [44, 114, 142],
    [33, 145, 140],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

const PALETTE: [[u8; 3]; 6] =
    [[31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189], [140, 86, 75]];

fn colormap(s: f64) -> Rgb<u8> {
    let s = if s.is_finite() { s.clamp(0.0, 1.0) } else { 0.0 };
    let x = s * (MAP.len() - 1) as f64;
    let k = (x.floor() as usize).min(MAP.len() - 2);
    let f = x - k as f64;
    let mix = |c: usize| (MAP[k][c] as f64 * (1.0 - f) + MAP[k + 1][c] as f64 * f).round() as u8;
    Rgb([mix(0), mix(1), mix(2)])
}

/// Cell values (row-major, south row first) drawn north-up, each cell a
/// square of pixels.
pub fn heatmap(values: &[f64], nx: usize, ny: usize) -> RgbImage {
    let scale = (512 / nx.max(ny)).max(1) as u32;
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = RgbImage::new(nx as u32 * scale, ny as u32 * scale);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let i = (x / scale) as usize;
        let j = ny - 1 - (y / scale) as usize;
        *px = colormap((values[j * nx + i] - lo) / span);
    }
    img
}

/// Line chart of several series against a shared abscissa, each series in
/// its own colour, framed by the axes box.
pub fn line_chart(t: &[f64], series: &[Vec<f64>]) -> RgbImage {
    let (w, h, pad) = (640u32, 400u32, 20u32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let finite = |v: &&f64| v.is_finite();
    let bounds = |vals: &mut dyn Iterator<Item = &f64>| {
        let (lo, hi) = vals.filter(finite).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (t0, t1) = bounds(&mut t.iter());
    let (y0, y1) = bounds(&mut series.iter().flatten());
    let (pw, ph) = ((w - 2 * pad) as f64, (h - 2 * pad) as f64);
    let to_px =
        |tv: f64, yv: f64| (pad as f64 + (tv - t0) / (t1 - t0) * pw, pad as f64 + (1.0 - (yv - y0) / (y1 - y0)) * ph);
    let axis = Rgb([0, 0, 0]);
    for x in pad..=w - pad {
        img.put_pixel(x, pad, axis);
        img.put_pixel(x, h - pad, axis);
    }
    for y in pad..=h - pad {
        img.put_pixel(pad, y, axis);
        img.put_pixel(w - pad, y, axis);
    }
    for (k, s) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let points: Vec<(f64, f64)> =
            t.iter().zip(s).filter(|(a, b)| a.is_finite() && b.is_finite()).map(|(a, b)| to_px(*a, *b)).collect();
        for seg in points.windows(2) {
            let ((xa, ya), (xb, yb)) = (seg[0], seg[1]);
            let n = ((xb - xa).abs().max((yb - ya).abs()).ceil() as usize).max(1);
            for m in 0..=n {
                let f = m as f64 / n as f64;
                let (x, y) = (xa + f * (xb - xa), ya + f * (yb - ya));
                img.put_pixel(
                    x.round().clamp(0.0, (w - 1) as f64) as u32,
                    y.round().clamp(0.0, (h - 1) as f64) as u32,
                    Rgb(c),
                );
            }
        }
    }
    img
}

fn cell_speed(snap: &Snapshot) -> Option<Vec<f64>> {
    let (nx, ny) = (snap.nx, snap.ny);
    let (u, v) = (snap.array("u")?, snap.array("v")?);
    if u.len() != (nx + 1) * ny || v.len() != nx * (ny + 1) {
        return None;
    }
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let uc = 0.5 * (u[j * (nx + 1) + i] + u[j * (nx + 1) + i + 1]);
            let vc = 0.5 * (v[j * nx + i] + v[(j + 1) * nx + i]);
            out.push(uc.hypot(vc));
        }
    }
    Some(out)
}

enum Job {
    Field(String, Vec<f64>),
    Series(String, Vec<Vec<f64>>),
}

fn last_snapshot(run_dir: &Path) -> Result<Option<Snapshot>> {
    let dir = run_dir.join("snapshots");
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "snap"))
        .collect();
    names.sort();
    names.last().map(|p| read_snapshot(p)).transpose()
}

fn column(rows: &[DiagnosticRow], f: impl Fn(&DiagnosticRow) -> f64) -> Vec<f64> {
    rows.iter().map(f).collect()
}

/// Writes all plots for `run_dir` into `out` and returns their paths in a
/// fixed order.
pub fn plot_run(run_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let table = run_dir.join("diagnostics.csv");
    let rows = parse_diagnostics(&std::fs::read(&table).map_err(|e| Error::io_at(&table, e))?)?;
    let snap = last_snapshot(run_dir)?;
    let mut jobs = Vec::new();
    if let Some(s) = snap.as_ref().filter(|s| s.nx * s.ny > 0) {
        let cells = s.nx * s.ny;
        for (name, data) in &s.arrays {
            if data.len() == cells {
                jobs.push(Job::Field(name.clone(), data.clone()));
            }
        }
        if let Some(speed) = cell_speed(s) {
            jobs.push(Job::Field("speed".into(), speed));
        }
    }
    let t = column(&rows, |r| r.t);
    jobs.push(Job::Series(
        "energy".into(),
        vec![column(&rows, |r| r.e_k), column(&rows, |r| r.e_d), column(&rows, |r| r.e_p), column(&rows, |r| r.e_el)],
    ));
    jobs.push(Job::Series("residual".into(), vec![column(&rows, |r| r.residual)]));
    jobs.push(Job::Series("gap".into(), vec![column(&rows, |r| r.gap)]));
    jobs.push(Job::Series(
        "velocity".into(),
        vec![column(&rows, |r| r.v_cx), column(&rows, |r| r.v_cy), column(&rows, |r| r.w)],
    ));
    let n_species = rows.first().map_or(0, |r| r.moles.len());
    jobs.push(Job::Series(
        "moles".into(),
        (0..n_species)
            .map(|k| {
                let m0 = rows[0].moles[k];
                let scale = if m0 != 0.0 { m0.abs() } else { 1.0 };
                column(&rows, |r| (r.moles[k] - m0) / scale)
            })
            .collect(),
    ));
    std::fs::create_dir_all(out)?;
    jobs.par_iter()
        .map(|job| {
            let (name, img) = match job {
                Job::Field(name, data) => {
                    let s = snap.as_ref().expect("field jobs come from a snapshot");
                    (format!("field_{name}.png"), heatmap(data, s.nx, s.ny))
                }
                Job::Series(name, series) => (format!("series_{name}.png"), line_chart(&t, series)),
            };
            let path = out.join(name);
            img.save_with_format(&path, image::ImageFormat::Png)
                .map_err(|e| Error::Io(std::io::Error::other(format!("{}: {e}", path.display()))))?;
            Ok(path)
        })
        .collect()
}
