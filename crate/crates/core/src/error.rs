use serde::Serialize;
use thiserror::Error;

/// One problem found while reading or validating a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigIssue {
    /// Dotted key path, e.g. `physics.kappa1` or `species[1].d`.
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("{solver} did not converge in {iterations} iterations (residual {residual:.3e})")]
    Solver { solver: &'static str, iterations: usize, residual: f64, history: Vec<f64> },

    #[error("stability error: {0}")]
    Stability(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("fixed-point iteration did not converge after {iterations} sweeps (last residual {:.3e})", trace.last().copied().unwrap_or(f64::NAN))]
    Picard { iterations: usize, trace: Vec<f64> },

    #[error("invalid configuration ({} issue(s)): {}", .0.len(), join_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl Error {
    /// An I/O error annotated with the file it concerns.
    pub fn io_at(path: &std::path::Path, e: std::io::Error) -> Error {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }

    /// Short machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Geometry(_) => "geometry",
            Error::InvariantViolation(_) => "invariant_violation",
            Error::Solver { .. } => "solver",
            Error::Stability(_) => "stability",
            Error::Oracle(_) => "oracle",
            Error::Picard { .. } => "picard",
            Error::Config(_) => "config",
            Error::Snapshot(_) => "snapshot",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
        }
    }

    /// Structured report suitable for printing as JSON on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut obj = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        match self {
            Error::Config(issues) => {
                obj["issues"] = serde_json::to_value(issues).unwrap_or_default();
            }
            Error::Solver { history, .. } => {
                obj["residual_history"] = serde_json::to_value(history).unwrap_or_default();
            }
            Error::Picard { trace, .. } => {
                obj["residual_trace"] = serde_json::to_value(trace).unwrap_or_default();
            }
            _ => {}
        }
        obj
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
