//! Run directory layout and the diagnostics table.
//!
//! ```text
//! <run-dir>/config.resolved     resolved configuration (TOML)
//! <run-dir>/diagnostics.csv     one row per accepted step
//! <run-dir>/snapshots/NNNNNN.snap
//! <run-dir>/events.json         stop reason, retries, errors
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so the CSV
//! parses back to the exact values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::snapshot::{write_snapshot, Snapshot};
use crate::stepper::{diagnostic_row, run, DiagnosticRow, Model, RunEvent, RunObserver, RunResult, SimState};

const LEADING: [&str; 6] = ["t", "E_k", "E_d", "E_p", "E_el", "residual"];
const TRAILING: [&str; 11] =
    ["total_fixed_charge", "gap", "x_c", "y_c", "theta", "v_cx", "v_cy", "w", "picard_iters", "E_d_strain", "E_d_dd"];

/// Column names for `n_species` species.
pub fn csv_header(n_species: usize) -> Vec<String> {
    let mut h: Vec<String> = LEADING.iter().map(|s| s.to_string()).collect();
    h.extend((0..n_species).map(|k| format!("moles_{k}")));
    h.extend(TRAILING.iter().map(|s| s.to_string()));
    h
}

pub fn csv_record(row: &DiagnosticRow) -> Vec<String> {
    let mut r: Vec<String> =
        [row.t, row.e_k, row.e_d, row.e_p, row.e_el, row.residual].iter().map(|x| x.to_string()).collect();
    r.extend(row.moles.iter().map(|x| x.to_string()));
    r.extend(
        [row.total_fixed_charge, row.gap, row.x_c, row.y_c, row.theta, row.v_cx, row.v_cy, row.w]
            .iter()
            .map(|x| x.to_string()),
    );
    r.push(row.picard_iters.to_string());
    r.push(row.e_d_strain.to_string());
    r.push(row.e_d_dd.to_string());
    r
}

/// Writes rows as CSV text.
pub fn write_diagnostics<W: Write>(out: W, rows: &[DiagnosticRow]) -> Result<()> {
    let n = rows.first().map_or(0, |r| r.moles.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(n)).map_err(csv_err)?;
    for r in rows {
        w.write_record(csv_record(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

/// Parses a diagnostics table, checking the header against the schema.
pub fn parse_diagnostics(text: &[u8]) -> Result<Vec<DiagnosticRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let fixed = LEADING.len() + TRAILING.len();
    if header.len() < fixed {
        return Err(Error::Csv(format!("header has {} columns, expected at least {fixed}", header.len())));
    }
    let n_species = header.len() - fixed;
    let expected = csv_header(n_species);
    if header != expected {
        return Err(Error::Csv(format!("unexpected header {header:?}, expected {expected:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != expected.len() {
            return Err(Error::Csv(format!("row {}: {} fields, expected {}", line + 1, rec.len(), expected.len())));
        }
        let f = |k: usize| -> Result<f64> {
            rec[k].trim().parse::<f64>().map_err(|_| {
                Error::Csv(format!("row {}, column {}: cannot parse {:?} as a number", line + 1, expected[k], &rec[k]))
            })
        };
        let m = LEADING.len() + n_species;
        let iters = &rec[m + 8];
        let picard_iters = iters.trim().parse::<usize>().map_err(|_| {
            Error::Csv(format!("row {}, column picard_iters: cannot parse {iters:?} as a count", line + 1))
        })?;
        rows.push(DiagnosticRow {
            t: f(0)?,
            e_k: f(1)?,
            e_d: f(2)?,
            e_p: f(3)?,
            e_el: f(4)?,
            residual: f(5)?,
            moles: (0..n_species).map(|k| f(LEADING.len() + k)).collect::<Result<_>>()?,
            total_fixed_charge: f(m)?,
            gap: f(m + 1)?,
            x_c: f(m + 2)?,
            y_c: f(m + 3)?,
            theta: f(m + 4)?,
            v_cx: f(m + 5)?,
            v_cy: f(m + 6)?,
            w: f(m + 7)?,
            picard_iters,
            e_d_strain: f(m + 9)?,
            e_d_dd: f(m + 10)?,
        });
    }
    Ok(rows)
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join("snapshots").join(format!("{step:06}.snap"))
}

/// Observer that fills a run directory.
pub struct RunDirWriter {
    dir: PathBuf,
    config_text: String,
    csv: csv::Writer<BufWriter<File>>,
    events: Vec<RunEvent>,
    pub rows_written: usize,
    pub snapshots: Vec<PathBuf>,
}

impl RunDirWriter {
    /// Creates the directory tree and writes `config.resolved`.
    pub fn create(dir: &Path, config: &SimConfig) -> Result<Self> {
        std::fs::create_dir_all(dir.join("snapshots"))?;
        let config_text = config.to_toml();
        std::fs::write(dir.join("config.resolved"), &config_text)?;
        let file = BufWriter::new(File::create(dir.join("diagnostics.csv"))?);
        let mut csv = csv::Writer::from_writer(file);
        csv.write_record(csv_header(config.species.len())).map_err(csv_err)?;
        Ok(RunDirWriter {
            dir: dir.to_path_buf(),
            config_text,
            csv,
            events: Vec::new(),
            rows_written: 0,
            snapshots: Vec::new(),
        })
    }

    /// Flushes the table and writes `events.json`, with the run result or
    /// the error that stopped it.
    pub fn finish(&mut self, outcome: std::result::Result<&RunResult, &Error>) -> Result<()> {
        self.csv.flush()?;
        let mut doc = serde_json::json!({ "events": self.events });
        match outcome {
            Ok(r) => {
                doc["result"] = serde_json::json!({ "reason": r.reason, "t_final": r.t_final, "steps": r.steps });
            }
            Err(e) => doc["error"] = e.to_json(),
        }
        let text = serde_json::to_string_pretty(&doc).expect("events serialize");
        std::fs::write(self.dir.join("events.json"), text + "\n")?;
        Ok(())
    }
}

impl RunObserver for RunDirWriter {
    fn on_step(&mut self, model: &Model, state: &SimState) -> Result<()> {
        let row = diagnostic_row(model, state)?;
        self.csv.write_record(csv_record(&row)).map_err(csv_err)?;
        self.rows_written += 1;
        Ok(())
    }

    fn on_snapshot(&mut self, model: &Model, state: &SimState) -> Result<()> {
        let path = snapshot_path(&self.dir, state.step);
        write_snapshot(&path, &Snapshot::from_state(state, &model.grid, &self.config_text))?;
        self.snapshots.push(path);
        Ok(())
    }

    fn on_event(&mut self, event: &RunEvent) -> Result<()> {
        self.events.push(event.clone());
        Ok(())
    }
}

/// Runs `config` into `dir`. Outputs written before an error are kept and
/// the error is recorded in `events.json`.
pub fn run_to_dir(config: &SimConfig, dir: &Path) -> Result<RunResult> {
    let mut writer = RunDirWriter::create(dir, config)?;
    let outcome = config.build().and_then(|(model, state)| run(&model, state, &mut writer).map(|(_, r)| r));
    writer.finish(outcome.as_ref())?;
    outcome
}

/// Recomputes the diagnostics row of a stored snapshot from its embedded
/// configuration.
pub fn diagnose_snapshot(snap: &Snapshot) -> Result<DiagnosticRow> {
    let cfg = crate::config::parse_config_str(&snap.config)?;
    let model = cfg.model()?;
    let state = snap.to_state(&model)?;
    diagnostic_row(&model, &state)
}
