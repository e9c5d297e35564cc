use serde_json::{json, Value};
use thiserror::Error;

use emech_core::estimation::FitError;
use emech_core::FitResultF64;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or physically invalid input.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Solver(String),
    #[error("{message}")]
    Fit { message: String, best: Option<Value> },
    /// One or more acceptance checks failed.
    #[error("{0}")]
    Acceptance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io(_) => 1,
            Self::Solver(_) | Self::Acceptance(_) => 2,
            Self::Fit { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io(_) => "io",
            Self::Solver(_) => "solver",
            Self::Fit { .. } => "fit",
            Self::Acceptance(_) => "acceptance",
        }
    }

    /// Single-line JSON record written to standard error.
    pub fn record(&self) -> Value {
        let mut err = json!({
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let Self::Fit { best: Some(best), .. } = self {
            err["best"] = best.clone();
        }
        json!({ "error": err })
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub(crate) fn best_fit_json(r: &FitResultF64) -> Value {
    let params: serde_json::Map<String, Value> =
        r.names.iter().zip(&r.params).map(|(n, v)| (n.clone(), json!(v))).collect();
    json!({
        "params": params,
        "iterations": r.iterations,
        "residual_norm": r.residual_norm,
    })
}

impl From<FitError<f64>> for CliError {
    fn from(e: FitError<f64>) -> Self {
        match &e {
            FitError::InvalidData(_) | FitError::InvalidInit(_) => Self::Config(e.to_string()),
            _ => Self::Fit { message: e.to_string(), best: e.best().map(best_fit_json) },
        }
    }
}
