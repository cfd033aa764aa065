//! Error classification and verdict plumbing shared by the subcommands.
//!
//! Process exit codes: 0 for success, 1 for internal failures, 2 for
//! configuration errors, 3 for resource-cap rejections, 4 when every
//! computation succeeded but an experiment verdict failed.

use serde::Serialize;
use std::process::ExitCode;

/// Exit code for configuration problems (parse errors, schema violations,
/// invalid parameter values, refused overwrites).
pub const EXIT_CONFIG: u8 = 2;
/// Exit code when a dense computation would exceed its size cap.
pub const EXIT_RESOURCE: u8 = 3;
/// Exit code when the run completed but at least one verdict failed.
pub const EXIT_VERDICT: u8 = 4;

/// A failure that terminates the run before its verdicts are rendered.
#[derive(Debug)]
pub enum CliError {
    /// The config file or command line is invalid.
    Config(String),
    /// The requested computation exceeds a resource cap.
    Resource(String),
    /// An unexpected runtime failure (I/O, numerical breakdown).
    Internal(String),
}

impl CliError {
    /// Exit code for this failure class.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(EXIT_CONFIG),
            CliError::Resource(_) => ExitCode::from(EXIT_RESOURCE),
            CliError::Internal(_) => ExitCode::FAILURE,
        }
    }

    /// Human-readable message with its failure class.
    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) => format!("config error: {m}"),
            CliError::Resource(m) => format!("resource cap: {m}"),
            CliError::Internal(m) => format!("error: {m}"),
        }
    }
}

impl From<condfield::Error> for CliError {
    fn from(e: condfield::Error) -> Self {
        match e {
            condfield::Error::SizeCap { .. } => CliError::Resource(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("i/o failure: {e}"))
    }
}

/// Reclassifies a library error raised while interpreting the config
/// (building grids, kernels, observables) as a configuration error.
pub fn as_config_error(e: condfield::Error) -> CliError {
    match e {
        condfield::Error::SizeCap { .. } => CliError::Resource(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

/// One named pass/fail check rendered by an experiment, with the
/// tolerance it was judged against and a measured detail string.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    /// Stable identifier of the check.
    pub name: String,
    /// Whether the check passed.
    pub passed: bool,
    /// Tolerance or bound the check used, when one applies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Measured quantity and context, human-readable.
    pub detail: String,
}

impl Verdict {
    /// Builds a verdict with a tolerance.
    pub fn with_tol(name: &str, passed: bool, tolerance: f64, detail: String) -> Self {
        Self { name: name.into(), passed, tolerance: Some(tolerance), detail }
    }

    /// Builds a verdict without a tolerance (structural checks).
    pub fn plain(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, tolerance: None, detail }
    }
}
