//! File formats: TREC qrels and runs, TSV topics and passages, the JSON-lines
//! sample store, the SFT chat corpus, and canonical reports.

mod report;
mod samples;
mod sft;
mod trec;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use report::{canonical_json, read_eval_report, render_report, write_report, Report, ReportFormat};
pub use samples::{format_samples, parse_samples, read_samples, write_samples, SAMPLE_SCHEMA_VERSION};
pub use sft::{format_sft_corpus, write_sft_corpus, SFT_SCHEMA};
pub use trec::{
    format_qrels, format_run, parse_collection, parse_qrels, parse_run, parse_topics, read_collection,
    read_qrels, read_run, read_topics, write_qrels, write_run, RunEntry,
};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Line {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

impl PersistError {
    pub(crate) fn line(path: &str, line: usize, message: impl Into<String>) -> Self {
        PersistError::Line {
            path: path.to_string(),
            line,
            message: message.into(),
        }
    }

    /// 1-based line number for line-level errors.
    pub fn line_number(&self) -> Option<usize> {
        match self {
            PersistError::Line { line, .. } => Some(*line),
            _ => None,
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, PersistError> {
    std::fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), PersistError> {
    std::fs::write(path, contents).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Display name used in line diagnostics.
pub(crate) fn label(path: &Path) -> String {
    path.display().to_string()
}
