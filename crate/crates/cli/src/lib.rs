//! Experiment driver for the edge/cloud compute market: scenario files in,
//! trajectory CSVs and JSON summaries out.

// `!(a > b)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod output;
pub mod run;
pub mod scenario;

pub use scenario::{Overrides, Scenario, Scheme, SweepParameter};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("invalid scenario field {field}: {reason}")]
    InvalidScenario { field: String, reason: String },
    #[error("state blew up at t = {time}")]
    BlowUp { time: f64 },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Model(ecc_market::Error),
}

impl CliError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::InvalidScenario {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidScenario { .. } => 2,
            CliError::BlowUp { .. } => 3,
            _ => 1,
        }
    }
}

impl From<ecc_market::Error> for CliError {
    fn from(e: ecc_market::Error) -> Self {
        match e {
            ecc_market::Error::Invalid { field, reason } => CliError::InvalidScenario { field, reason },
            ecc_market::Error::BlowUp { time } => CliError::BlowUp { time },
            other => CliError::Model(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
