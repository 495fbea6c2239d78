use std::fmt::Display;
use std::path::Path;

use femm_varx::FemmError;
use serde::Serialize;

/// Printed to stderr as JSON before a nonzero exit.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn io(path: &Path, e: impl Display) -> Self {
        Self {
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self {
            kind: "parse",
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: "usage",
            message: message.into(),
        }
    }
}

impl From<FemmError> for CliError {
    fn from(e: FemmError) -> Self {
        let kind = match &e {
            FemmError::Dimension(_) => "dimension",
            FemmError::IndexOutOfRange { .. } => "index_out_of_range",
            FemmError::Config(_) => "config",
            FemmError::Incomplete(_) => "incomplete",
            FemmError::FullyMissing { .. } => "fully_missing",
            FemmError::IllConditioned { .. } => "ill_conditioned",
            FemmError::LpFailure { .. } => "lp_failure",
            FemmError::EmptyCluster(_) => "empty_cluster",
            FemmError::MaskExhausted { .. } => "mask_exhausted",
            FemmError::AllRestartsFailed { .. } => "all_restarts_failed",
            FemmError::Parse(_) => "parse",
            FemmError::Io(_) => "io",
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}
