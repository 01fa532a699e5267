use std::path::Path;

use serde::Serialize;
use thiserror::Error;

/// Failure of a CLI command, classified by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Config(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Infeasible(_) => "infeasible",
            CliError::Solver(_) => "solver_failure",
            CliError::Config(_) => "config_error",
        }
    }

    /// Library error with context, mapped onto the exit classes.
    pub fn from_core(context: &str, e: regret_sls::Error) -> Self {
        use regret_sls::Error as E;
        let msg = format!("{context}: {e}");
        match e {
            E::Infeasible(_) | E::UnboundedRegret | E::NotRankOne { .. } | E::NotAchievable { .. } => {
                CliError::Infeasible(msg)
            }
            E::Solver(_) | E::Singular(_) => CliError::Solver(msg),
            _ => CliError::Config(msg),
        }
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    command: &'a str,
    status: &'a str,
    exit_code: i32,
    message: String,
}

/// Write `error.json` next to the other artifacts. Best effort.
pub fn write_error_record(dir: &Path, command: &str, err: &CliError) {
    let rec = ErrorRecord {
        command,
        status: err.kind(),
        exit_code: err.exit_code(),
        message: err.to_string(),
    };
    if std::fs::create_dir_all(dir).is_ok() {
        if let Err(e) = regret_sls::io::write_json(&dir.join("error.json"), &rec) {
            log::warn!("could not write error record: {e}");
        }
    }
}
