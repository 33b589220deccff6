//! Configuration ingestion, run orchestration, and persistent outputs for
//! the doubly nonlinear flow solver.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;

use std::process::ExitCode;

/// Exit-code contract: 0 ok, 1 validation failure, 2 analysis-precondition
/// failure, 3 numerical failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Validation,
    Precondition,
    Numerical,
}

impl Failure {
    pub fn exit_code(self) -> ExitCode {
        match self {
            Failure::Validation => ExitCode::from(1),
            Failure::Precondition => ExitCode::from(2),
            Failure::Numerical => ExitCode::from(3),
        }
    }
}

/// A structured command error: machine-readable on stderr, exit code per
/// the contract.
#[derive(Debug)]
pub struct CliError {
    pub failure: Failure,
    pub kind: String,
    pub message: String,
    /// hypothesis tags for validation failures
    pub tags: Vec<String>,
}

impl CliError {
    pub fn validation(kind: &str, message: impl Into<String>, tags: Vec<String>) -> Self {
        Self {
            failure: Failure::Validation,
            kind: kind.to_string(),
            message: message.into(),
            tags,
        }
    }

    pub fn precondition(kind: &str, message: impl Into<String>) -> Self {
        Self {
            failure: Failure::Precondition,
            kind: kind.to_string(),
            message: message.into(),
            tags: Vec::new(),
        }
    }

    pub fn numerical(kind: &str, message: impl Into<String>) -> Self {
        Self {
            failure: Failure::Numerical,
            kind: kind.to_string(),
            message: message.into(),
            tags: Vec::new(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::precondition("io", message)
    }

    /// Classify a core error per the exit-code contract.
    pub fn from_core(err: dnflow_core::Error) -> Self {
        use dnflow_core::Error as E;
        match &err {
            E::NewtonDivergence { .. }
            | E::NonconvergedLadder { .. }
            | E::Convergence { .. }
            | E::Quadrature { .. } => Self::numerical(core_kind(&err), err.to_string()),
            E::Construction(_) => Self::validation(
                core_kind(&err),
                err.to_string(),
                vec![dnflow_core::scenario::construction_tag(&err).to_string()],
            ),
            _ => Self::precondition(core_kind(&err), err.to_string()),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "kind": self.kind,
                "message": self.message,
                "tags": self.tags,
            }
        })
    }
}

fn core_kind(err: &dnflow_core::Error) -> &'static str {
    use dnflow_core::Error as E;
    match err {
        E::Domain { .. } => "domain",
        E::Convergence { .. } => "convergence",
        E::Quadrature { .. } => "quadrature",
        E::Construction(_) => "construction",
        E::Shape { .. } => "shape",
        E::MissingMetadata(_) => "missing_metadata",
        E::NewtonDivergence { .. } => "newton_divergence",
        E::NonconvergedLadder { .. } => "nonconverged_ladder",
        E::InsufficientData { .. } => "insufficient_data",
        E::Precondition(_) => "precondition",
        E::HypothesisViolated { .. } => "hypothesis_violated",
    }
}
