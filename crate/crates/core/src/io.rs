//! Reading input files and rendering reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{Conflict, Status, Verdict, Violation, Witness};
use crate::history::{EventId, History, InvalidHistory, RawHistory, RawWr};
use crate::opsem::Program;
use crate::oracle::OracleVerdict;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("{0}")]
    Invalid(#[from] InvalidHistory),
}

impl From<serde_json::Error> for InputError {
    fn from(e: serde_json::Error) -> Self {
        InputError::Json { line: e.line(), column: e.column(), message: strip_position(&e.to_string()) }
    }
}

/// serde_json appends " at line L column C"; the error carries them apart.
fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

pub fn parse_raw_history(text: &str) -> Result<RawHistory, InputError> {
    Ok(serde_json::from_str(text)?)
}

pub fn parse_history(text: &str) -> Result<History, InputError> {
    Ok(History::from_raw(&parse_raw_history(text)?)?)
}

pub fn parse_program(text: &str) -> Result<Program, InputError> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_history(path: &Path) -> Result<History, InputError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| InputError::Io { path: path.display().to_string(), source })?;
    parse_history(&text)
}

/// Pretty JSON with a trailing newline. Map keys are sorted and struct
/// fields keep declaration order, so output is reproducible.
pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStatus {
    Consistent,
    Inconsistent,
    Unknown,
    Error,
}

impl From<Status> for ReportStatus {
    fn from(s: Status) -> Self {
        match s {
            Status::Consistent => ReportStatus::Consistent,
            Status::Inconsistent => ReportStatus::Inconsistent,
            Status::Unknown => ReportStatus::Unknown,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessReport {
    pub wr_added: Vec<RawWr>,
    pub commit_order: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ViolationReport {
    /// Transactions forming a cycle of forced commit-order constraints.
    Cycle { transactions: Vec<String> },
    EmptyZeroSet { read: EventId, key: String },
    Exhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsReport {
    pub prefixes_explored: u64,
    pub extensions_tried: u64,
    /// Present only when timing was requested, so reports stay
    /// reproducible by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleReport {
    pub status: ReportStatus,
    pub agrees: bool,
}

/// Result of checking one file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub file: String,
    pub status: ReportStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<ViolationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<StatsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
}

pub fn witness_report(input: &History, w: &Witness) -> WitnessReport {
    let full = &w.history;
    WitnessReport {
        wr_added: w
            .added
            .iter()
            .map(|e| RawWr {
                key: full.key_name(e.key).to_string(),
                from_event: full.event_id(e.from),
                to_event: full.event_id(e.to),
            })
            .collect(),
        commit_order: w.commit_order.iter().map(|&t| input.txn(t).id.clone()).collect(),
    }
}

fn violation_report(h: &History, v: &Violation) -> ViolationReport {
    match v {
        Violation::Cycle(ts) => ViolationReport::Cycle { transactions: ts.iter().map(|&t| h.txn(t).id.clone()).collect() },
        Violation::EmptyZeroSet(Conflict { read, key }) => ViolationReport::EmptyZeroSet {
            read: h.event_id(h.reads()[*read]),
            key: h.key_name(*key).to_string(),
        },
        Violation::Exhausted => ViolationReport::Exhausted,
    }
}

impl Report {
    pub fn from_verdict(file: &str, h: &History, v: &Verdict, with_time: bool) -> Report {
        Report {
            file: file.to_string(),
            status: v.status.into(),
            witness: v.witness.as_ref().map(|w| witness_report(h, w)),
            violation: v.violation.as_ref().map(|x| violation_report(h, x)),
            error: None,
            stats: Some(StatsReport {
                prefixes_explored: v.stats.prefixes_explored,
                extensions_tried: v.stats.extensions_tried,
                elapsed_ms: with_time.then_some(v.stats.elapsed_ms),
            }),
            oracle: None,
        }
    }

    pub fn from_error(file: &str, error: &dyn std::fmt::Display) -> Report {
        Report {
            file: file.to_string(),
            status: ReportStatus::Error,
            witness: None,
            violation: None,
            error: Some(error.to_string()),
            stats: None,
            oracle: None,
        }
    }

    pub fn with_oracle(mut self, oracle: &OracleVerdict) -> Report {
        let status: ReportStatus = oracle.status.into();
        self.oracle = Some(OracleReport { status, agrees: status == self.status });
        self
    }

    /// Compact one-line JSON.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    /// Human-oriented rendering; not a stable format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let status = serde_json::to_value(self.status).expect("serializable");
        let _ = writeln!(out, "{}: {}", self.file, status.as_str().unwrap_or("?"));
        if let Some(e) = &self.error {
            let _ = writeln!(out, "  error: {e}");
        }
        if let Some(w) = &self.witness {
            let _ = writeln!(out, "  commit order: {}", w.commit_order.join(" < "));
            for e in &w.wr_added {
                let _ = writeln!(out, "  added: {} reads {} from {}", e.to_event, e.key, e.from_event);
            }
        }
        match &self.violation {
            Some(ViolationReport::Cycle { transactions }) => {
                let _ = writeln!(out, "  cycle: {}", transactions.join(" -> "));
            }
            Some(ViolationReport::EmptyZeroSet { read, key }) => {
                let _ = writeln!(out, "  read {read} has no possible source for {key}");
            }
            Some(ViolationReport::Exhausted) => {
                let _ = writeln!(out, "  no commit order satisfies the isolation levels");
            }
            None => {}
        }
        if let Some(s) = &self.stats {
            let _ = write!(out, "  prefixes explored: {}, extensions tried: {}", s.prefixes_explored, s.extensions_tried);
            if let Some(ms) = s.elapsed_ms {
                let _ = write!(out, ", elapsed: {ms} ms");
            }
            out.push('\n');
        }
        if let Some(o) = &self.oracle {
            let status = serde_json::to_value(o.status).expect("serializable");
            let _ = writeln!(
                out,
                "  oracle: {} ({})",
                status.as_str().unwrap_or("?"),
                if o.agrees { "agrees" } else { "DISAGREES" }
            );
        }
        out
    }
}

/// The JSON schema reports conform to.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");
