//! Crate-wide error type.

use chrono::NaiveDate;
use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by timeline construction, detectors, the generator and
/// file ingestion.
#[derive(Debug, Error)]
pub enum Error {
    /// A row for a different patient was passed to a single-patient build.
    #[error("row for patient '{found}' mixed into timeline of patient '{expected}'")]
    MixedPatient { expected: String, found: String },

    /// PSA values are concentrations and can never be negative.
    #[error("negative PSA value {value} for patient '{patient_id}' on {date}")]
    NegativeValue {
        patient_id: String,
        date: NaiveDate,
        value: f64,
    },

    /// A PSA series handed to a scan had decreasing dates.
    #[error("PSA series dates decrease at index {index}")]
    UnsortedSeries { index: usize },

    /// Drop significance is a fraction of the peak; a zero peak leaves it
    /// undefined.
    #[error("peak PSA value is zero; drop fraction is undefined")]
    ZeroPeak,

    /// A date window with start after end.
    #[error("window start {start} is after window end {end}")]
    InvalidWindow { start: NaiveDate, end: NaiveDate },

    /// Synthetic-cohort configuration outside its domain.
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    /// A malformed row or value in an input file.
    #[error("{file}:{line}: {reason}")]
    Parse {
        file: String,
        line: usize,
        reason: String,
    },

    /// A PSA or treatment row whose patient id is absent from the patients
    /// file.
    #[error("{file}:{line}: unknown patient id '{patient_id}'")]
    OrphanRow {
        file: String,
        line: usize,
        patient_id: String,
    },

    /// Underlying filesystem failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Evaluation against ground truth found a cohort patient without a
    /// truth record.
    #[error("no ground-truth record for patient '{0}'")]
    MissingTruth(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
