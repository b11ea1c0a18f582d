use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ekflow::config::{parse_config, SimConfig};
use ekflow::output::{diagnose_snapshot, run_to_dir, write_diagnostics};
use ekflow::snapshot::read_snapshot;
use ekflow::{Error, Result};

mod oracle;
mod plot;

#[derive(Parser)]
#[command(name = "ekflow", version, about = "Electrophoresis of a charged rigid particle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for plotting and the oracle suite (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress output on stdout.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation into a run directory.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Override `run.t_end`.
        #[arg(long)]
        until: Option<f64>,
        /// Override `run.snapshot_every`.
        #[arg(long)]
        snapshot_every: Option<f64>,
    },
    /// Validate a configuration and print it fully resolved.
    Check { config: PathBuf },
    /// Recompute the diagnostics table from snapshots.
    Diag {
        #[arg(required = true)]
        snapshots: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render heatmaps and time series of a finished run as PNG files.
    Plot {
        run_dir: PathBuf,
        /// Output directory (default: <run-dir>/plots).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the solvers against analytic solutions.
    Oracle,
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("{}", err.to_json());
    ExitCode::FAILURE
}

fn load(path: &Path, until: Option<f64>, snapshot_every: Option<f64>) -> Result<SimConfig> {
    let mut cfg = parse_config(path)?;
    if let Some(t) = until {
        cfg.run.t_end = t;
    }
    if let Some(s) = snapshot_every {
        cfg.run.snapshot_every = s;
    }
    // Overrides go through the same validation as the file.
    ekflow::config::parse_config_str(&cfg.to_toml())
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, until, snapshot_every } => {
            let cfg = load(&config, until, snapshot_every)?;
            let result = run_to_dir(&cfg, &out)?;
            if !cli.quiet {
                let summary = serde_json::json!({
                    "run_dir": out.display().to_string(),
                    "reason": result.reason,
                    "t_final": result.t_final,
                    "steps": result.steps,
                });
                println!("{summary}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { config } => {
            let cfg = parse_config(&config)?;
            print!("{}", cfg.to_toml());
            Ok(ExitCode::SUCCESS)
        }
        Command::Diag { snapshots, out } => {
            let rows = snapshots
                .iter()
                .map(|p| read_snapshot(p).and_then(|s| diagnose_snapshot(&s)))
                .collect::<Result<Vec<_>>>()?;
            match out {
                Some(path) => {
                    write_diagnostics(std::fs::File::create(&path).map_err(|e| Error::io_at(&path, e))?, &rows)?
                }
                None => write_diagnostics(std::io::stdout().lock(), &rows)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { run_dir, out } => {
            let out = out.unwrap_or_else(|| run_dir.join("plots"));
            let files = plot::plot_run(&run_dir, &out)?;
            if !cli.quiet {
                for f in files {
                    println!("{}", f.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle => {
            let checks = oracle::run_suite()?;
            let mut ok = true;
            for c in &checks {
                ok &= c.pass;
                if !cli.quiet || !c.pass {
                    println!("{}", c.to_json());
                }
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let json = serde_json::json!({ "error": "usage", "message": e.to_string().trim_end() });
            eprintln!("{json}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&Error::Config(vec![ekflow::ConfigIssue { key: "--threads".into(), message: e.to_string() }]));
        }
    }
    match execute(cli) {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}
