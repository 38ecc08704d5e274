use std::fmt;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::types::{Cycle, MasterId, TxnId};

/// Errors raised while a simulation is running.
///
/// Most variants indicate a bug in a component model rather than bad input;
/// `Unmapped` is the exception and reports a workload address no slave owns.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("event scheduled at cycle {at} while clock is at {now}")]
    ScheduleInPast { at: Cycle, now: Cycle },
    #[error("transaction {txn} targets unmapped address {address:#x}")]
    Unmapped { txn: TxnId, address: u64 },
    #[error("master {master} already has a pending request at {resource}")]
    DuplicateRequest { master: MasterId, resource: String },
    #[error("contention attributed from master {master} to itself at {resource}")]
    SelfContention { master: MasterId, resource: String },
    #[error("owner {owner} does not fit in a {width}-bit ID field")]
    IdOverflow { owner: MasterId, width: u8 },
    #[error("master {0} is not a core attached to the bus")]
    NotOnBus(MasterId),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

/// A trace line that could not be parsed or validated.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

/// One problem found while validating a configuration, with the key path it concerns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub location: String,
    pub message: String,
}

impl ValidationIssue {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("unsupported schema_version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("{}", display_issues(.0))]
    Invalid(Vec<ValidationIssue>),
    #[error("trace {path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
}

impl ConfigError {
    /// Validation issues carried by this error, if it is a validation failure.
    pub fn issues(&self) -> &[ValidationIssue] {
        match self {
            ConfigError::Invalid(issues) => issues,
            _ => &[],
        }
    }
}

fn display_issues(issues: &[ValidationIssue]) -> String {
    let mut out = format!("{} validation error(s)", issues.len());
    for issue in issues {
        out.push_str("\n  ");
        out.push_str(&issue.to_string());
    }
    out
}

/// Top-level error for experiment orchestration.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation aborted: {0}")]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
}
